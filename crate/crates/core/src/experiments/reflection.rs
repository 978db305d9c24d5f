//! Emergence of the reflection measures from the polynomial penalization.
//!
//! For the stationary approximating process `X = Xⁿ` the densities
//!
//! ```text
//! η⁺ = -fⁿ(X) 1_{X>0} + f(X) 1_{0<X<1}
//! η⁻ =  fⁿ(X) 1_{X≤0} - f(X) 1_{-1<X≤0}
//! ```
//!
//! are accumulated on a space-time histogram, along with their masses and
//! the contact pairings `⟨1 - X, η⁺⟩` and `⟨1 + X, η⁻⟩`.

use serde::{Deserialize, Serialize};

use crate::dynamics::{ExactNoise, Integrator, SolverConfig};
use crate::ensemble::try_par_map;
use crate::error::{Error, Result};
use crate::gaussian::{sample_mu_c, NoiseStream};
use crate::potential::PotentialSpec;
use crate::report::{cell, Table};
use crate::stats::{mean_se, Estimate};

/// Pointwise `(η⁺, η⁻)` densities at `x`.
pub fn reflection_densities(spec: &PotentialSpec, x: f64) -> (f64, f64) {
    let fnx = spec.f_n(x);
    let log = |x: f64| spec.f_log(x).unwrap_or(0.0);
    if x > 0.0 {
        let corr = if x < 1.0 { log(x) } else { 0.0 };
        (-fnx + corr, 0.0)
    } else {
        let corr = if x > -1.0 { log(x) } else { 0.0 };
        (0.0, fnx - corr)
    }
}

/// The penalization split alone: `(-fⁿ(x) 1_{x>0}, fⁿ(x) 1_{x≤0})`.
pub fn penalization_split(spec: &PotentialSpec, x: f64) -> (f64, f64) {
    let fnx = spec.f_n(x);
    if x > 0.0 {
        (-fnx, 0.0)
    } else {
        (0.0, fnx)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReflectionEstimate {
    pub n: usize,
    /// Chain-averaged `η⁺` density, `time_bins × points`, row-major in time.
    pub density_plus: Vec<f64>,
    pub density_minus: Vec<f64>,
    pub time_bins: usize,
    pub points: usize,
    /// Masses per unit time.
    pub total_mass_plus: Estimate,
    pub total_mass_minus: Estimate,
    /// `⟨|1 - X|, η⁺⟩` and `⟨|1 + X|, η⁻⟩` per unit time.
    pub contact_pairing_plus: Estimate,
    pub contact_pairing_minus: Estimate,
    /// Signed pairings `⟨1 - X, η⁺⟩`, `⟨1 + X, η⁻⟩` per unit time.
    pub signed_pairing_plus: Estimate,
    pub signed_pairing_minus: Estimate,
    /// Mass per unit time of the penalization split alone.
    pub penalization_mass_plus: Estimate,
    pub penalization_mass_minus: Estimate,
    /// Largest `|η^±|` seen where `|X| ≤ ½`.
    pub inner_sup: f64,
    /// Grid fraction of space-time with `|X| > 1`.
    pub exceedance: Estimate,
}

#[derive(Default, Clone)]
struct ChainSums {
    plus: Vec<f64>,
    minus: Vec<f64>,
    mass: [f64; 2],
    contact: [f64; 2],
    signed: [f64; 2],
    penal: [f64; 2],
    inner_sup: f64,
    exceed: f64,
}

/// Estimate the reflection quantities for each `n` in `n_list`.
///
/// Every `n` uses the same chain seeds: chain `k` starts from a `μ_c` draw
/// of `stream.child(k)`, burns in for `cfg.burn_in` and accumulates over
/// `cfg.horizon`.
pub fn reflection_profile(
    cfg: &SolverConfig,
    n_list: &[usize],
    chains: usize,
    time_bins: usize,
    stream: NoiseStream,
) -> Result<Vec<ReflectionEstimate>> {
    if chains < 2 {
        return Err(Error::invalid("standard errors need at least two chains"));
    }
    let time_bins = time_bins.max(1);
    let steps = cfg.steps();
    if steps == 0 {
        return Err(Error::invalid("reflection estimates need a positive horizon"));
    }
    let horizon = steps as f64 * cfg.dt;
    let points = cfg.points;
    n_list
        .iter()
        .map(|&n| {
            let ncfg = cfg.clone().with_spec(cfg.spec.with_n(n)).validated()?;
            let spec = ncfg.spec;
            let per_chain = try_par_map(chains, |k| -> Result<ChainSums> {
                let s = stream.child(k as u64);
                let mut x = sample_mu_c(&mut s.child(0), ncfg.mean, ncfg.modes)?;
                let mut integrator = Integrator::new(&ncfg)?;
                let mut noise = ExactNoise::new(s.child(1), ncfg.modes, ncfg.dt, ncfg.noise_scale);
                integrator.run(&mut x, &mut noise, ncfg.burn_in_steps(), |_| {})?;
                let mut acc = ChainSums {
                    plus: vec![0.0; time_bins * points],
                    minus: vec![0.0; time_bins * points],
                    ..ChainSums::default()
                };
                let w = ncfg.dt / points as f64;
                integrator.run(&mut x, &mut noise, steps, |v| {
                    if v.noise.is_none() {
                        return;
                    }
                    let bin = ((v.step as usize * time_bins) / steps as usize).min(time_bins - 1);
                    for (j, &xv) in v.grid.iter().enumerate() {
                        let (p, m) = reflection_densities(&spec, xv);
                        let (pp, pm) = penalization_split(&spec, xv);
                        acc.plus[bin * points + j] += p * w;
                        acc.minus[bin * points + j] += m * w;
                        acc.mass[0] += p * w;
                        acc.mass[1] += m * w;
                        acc.contact[0] += (1.0 - xv).abs() * p * w;
                        acc.contact[1] += (1.0 + xv).abs() * m * w;
                        acc.signed[0] += (1.0 - xv) * p * w;
                        acc.signed[1] += (1.0 + xv) * m * w;
                        acc.penal[0] += pp * w;
                        acc.penal[1] += pm * w;
                        if xv.abs() <= 0.5 {
                            acc.inner_sup = acc.inner_sup.max(p.abs()).max(m.abs());
                        }
                        if xv.abs() > 1.0 {
                            acc.exceed += w;
                        }
                    }
                })?;
                Ok(acc)
            })?;
            let est = |f: &dyn Fn(&ChainSums) -> f64| {
                let v: Vec<f64> = per_chain.iter().map(|c| f(c) / horizon).collect();
                mean_se(&v)
            };
            // histogram cells become densities in (t, θ)
            let cell_area = (horizon / time_bins as f64) / points as f64;
            let average = |pick: &dyn Fn(&ChainSums) -> &Vec<f64>| -> Vec<f64> {
                let mut out = vec![0.0; time_bins * points];
                for c in &per_chain {
                    for (o, v) in out.iter_mut().zip(pick(c)) {
                        *o += v;
                    }
                }
                out.iter().map(|v| v / (chains as f64 * cell_area)).collect()
            };
            Ok(ReflectionEstimate {
                n,
                density_plus: average(&|c| &c.plus),
                density_minus: average(&|c| &c.minus),
                time_bins,
                points,
                total_mass_plus: est(&|c| c.mass[0]),
                total_mass_minus: est(&|c| c.mass[1]),
                contact_pairing_plus: est(&|c| c.contact[0]),
                contact_pairing_minus: est(&|c| c.contact[1]),
                signed_pairing_plus: est(&|c| c.signed[0]),
                signed_pairing_minus: est(&|c| c.signed[1]),
                penalization_mass_plus: est(&|c| c.penal[0]),
                penalization_mass_minus: est(&|c| c.penal[1]),
                inner_sup: per_chain.iter().map(|c| c.inner_sup).fold(0.0, f64::max),
                exceedance: est(&|c| c.exceed),
            })
        })
        .collect()
}

/// One summary row per `n`.
pub fn reflection_table(estimates: &[ReflectionEstimate]) -> Table {
    let mut t = Table::new([
        "n",
        "mass_plus",
        "mass_plus_se",
        "mass_minus",
        "mass_minus_se",
        "contact_plus",
        "contact_plus_se",
        "contact_minus",
        "contact_minus_se",
        "signed_plus",
        "signed_minus",
        "penalization_plus",
        "penalization_minus",
        "inner_sup",
        "exceedance",
    ]);
    for e in estimates {
        let mut row = vec![e.n.to_string()];
        for v in [
            e.total_mass_plus.value,
            e.total_mass_plus.se,
            e.total_mass_minus.value,
            e.total_mass_minus.se,
            e.contact_pairing_plus.value,
            e.contact_pairing_plus.se,
            e.contact_pairing_minus.value,
            e.contact_pairing_minus.se,
            e.signed_pairing_plus.value,
            e.signed_pairing_minus.value,
            e.penalization_mass_plus.value,
            e.penalization_mass_minus.value,
            e.inner_sup,
            e.exceedance.value,
        ] {
            row.push(cell(v));
        }
        t.push_cells(row);
    }
    t
}
