//! Long-run time averages and the linear stationary covariance.

use serde::{Deserialize, Serialize};

use crate::dynamics::{ExactNoise, Integrator, NoiseSource, SolverConfig};
use crate::ensemble::try_par_map;
use crate::error::{Error, Result};
use crate::gaussian::{sample_mu_c, NoiseStream};
use crate::measures::Observable;
use crate::potential::DriftKind;
use crate::report::{cell, Table};
use crate::spectral::{eigenvalue, SpectralField};
use crate::stats::{mean_se, Estimate};

/// Time averages of observables along independent stationary chains.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeAverageReport {
    pub psi_ids: Vec<String>,
    /// Mean over chains of the per-chain averages, with the between-chain SE.
    pub estimates: Vec<Estimate>,
    /// `chain_means[chain][psi]`.
    pub chain_means: Vec<Vec<f64>>,
    pub samples_per_chain: usize,
}

impl TimeAverageReport {
    pub fn table(&self) -> Table {
        let mut t = Table::new(["psi_id", "estimate", "se", "chains", "samples_per_chain"]);
        for (id, e) in self.psi_ids.iter().zip(&self.estimates) {
            t.push_cells(vec![
                id.clone(),
                cell(e.value),
                cell(e.se),
                self.chain_means.len().to_string(),
                self.samples_per_chain.to_string(),
            ]);
        }
        t
    }
}

/// Run `chains` chains from `μ_c` draws (chain `k` uses `stream.child(k)`),
/// discard `cfg.burn_in`, then average every observable over `cfg.horizon`
/// sampling every `sample_every` steps.
pub fn stationary_average(
    cfg: &SolverConfig,
    stream: NoiseStream,
    psi_list: &[Observable],
    sample_every: usize,
    chains: usize,
) -> Result<TimeAverageReport> {
    if chains < 2 {
        return Err(Error::invalid("standard errors need at least two chains"));
    }
    let sample_every = sample_every.max(1);
    let burn = cfg.burn_in_steps();
    let steps = cfg.steps();
    let chain_means = try_par_map(chains, |k| -> Result<Vec<f64>> {
        let s = stream.child(k as u64);
        let mut x = sample_mu_c(&mut s.child(0), cfg.mean, cfg.modes)?;
        let mut integrator = Integrator::new(cfg)?;
        let mut noise = ExactNoise::new(s.child(1), cfg.modes, cfg.dt, cfg.noise_scale);
        integrator.run(&mut x, &mut noise, burn, |_| {})?;
        let mut sums = vec![0.0; psi_list.len()];
        let mut n = 0usize;
        integrator.run(&mut x, &mut noise, steps, |v| {
            // the first view repeats the end of burn-in; sample strictly after it
            if v.step > 0 && (v.step as usize).is_multiple_of(sample_every) {
                for (s, psi) in sums.iter_mut().zip(psi_list) {
                    *s += psi.eval(v.state, v.grid);
                }
                n += 1;
            }
        })?;
        Ok(sums.into_iter().map(|s| s / n.max(1) as f64).collect())
    })?;
    let estimates = (0..psi_list.len())
        .map(|k| mean_se(&chain_means.iter().map(|c| c[k]).collect::<Vec<_>>()))
        .collect();
    Ok(TimeAverageReport {
        psi_ids: psi_list.iter().map(|p| p.to_string()).collect(),
        estimates,
        chain_means,
        samples_per_chain: (steps as usize) / sample_every,
    })
}

/// Empirical stationary variance of one mode against `1/a_i`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModeVariance {
    pub mode: usize,
    pub variance: f64,
    pub se: f64,
    pub expected: f64,
}

impl ModeVariance {
    pub fn z_score(&self) -> f64 {
        (self.variance - self.expected) / self.se
    }
}

/// Sample the linear dynamics (`f ≡ 0`) from rest every `sample_every` steps
/// after `burn_in` steps, and compare per-mode variances with `(-A)^{-1}`.
pub fn linear_covariance(
    modes: usize,
    dt: f64,
    sample_every: usize,
    samples: usize,
    burn_in: usize,
    stream: NoiseStream,
) -> Result<Vec<ModeVariance>> {
    if samples < 2 {
        return Err(Error::invalid("variance needs at least two samples"));
    }
    let cfg = SolverConfig::new(
        modes,
        crate::spectral::dealiased_grid(modes),
        dt,
        0.0,
        crate::potential::PotentialSpec::default(),
    )?
    .with_drift(DriftKind::None);
    let mut integrator = Integrator::new(&cfg)?;
    let mut noise = ExactNoise::new(stream, modes, dt, 1.0);
    let mut x = SpectralField::zeros(modes);
    let mut buf = vec![0.0; modes + 1];
    for _ in 0..burn_in {
        noise.fill(&mut buf);
        integrator.step_with(x.coeffs_mut(), &buf);
    }
    let mut records = vec![Vec::with_capacity(samples); modes + 1];
    for _ in 0..samples {
        for _ in 0..sample_every.max(1) {
            noise.fill(&mut buf);
            integrator.step_with(x.coeffs_mut(), &buf);
        }
        for (r, c) in records.iter_mut().zip(x.coeffs()) {
            r.push(*c);
        }
    }
    Ok((1..=modes)
        .map(|i| {
            // variance about the known mean 0; SE from the empirical fourth moment
            let sq: Vec<f64> = records[i].iter().map(|v| v * v).collect();
            let e = mean_se(&sq);
            ModeVariance {
                mode: i,
                variance: e.value,
                se: e.se,
                expected: 1.0 / eigenvalue(i),
            }
        })
        .collect())
}
