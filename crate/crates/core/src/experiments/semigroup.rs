//! Transition semigroups `P_t φ(x) = E φ(X(t, x))` estimated by ensembles:
//! convergence in `n` and the strong Feller envelope.

use serde::{Deserialize, Serialize};

use crate::dynamics::{simulate, SolverConfig};
use crate::ensemble::try_par_map;
use crate::error::{Error, Result};
use crate::gaussian::NoiseStream;
use crate::measures::Observable;
use crate::report::{cell, Table};
use crate::spectral::{distance_minus1, CosineTransform, SpectralField};
use crate::stats::{mean_se, Estimate};

/// `φ_k(X(t, x))` for every member and observable: `values[member][k]`.
fn ensemble_values(
    x: &SpectralField,
    cfg: &SolverConfig,
    psi_list: &[Observable],
    ensemble: usize,
    member_stream: impl Fn(usize) -> NoiseStream + Sync + Send,
) -> Result<Vec<Vec<f64>>> {
    let transform = CosineTransform::new(cfg.modes, cfg.points)?;
    try_par_map(ensemble, |k| {
        let (xt, _) = simulate(x, cfg, member_stream(k))?;
        let grid = transform.synthesize(&xt);
        Ok(psi_list.iter().map(|p| p.eval(xt.coeffs(), grid.values())).collect())
    })
}

fn column_estimates(values: &[Vec<f64>], count: usize) -> Vec<Estimate> {
    (0..count)
        .map(|k| mean_se(&values.iter().map(|v| v[k]).collect::<Vec<_>>()))
        .collect()
}

/// `Pⁿ_t φ(x)` for every `n`, with gaps between consecutive `n`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SemigroupReport {
    pub t: f64,
    pub n_list: Vec<usize>,
    pub psi_ids: Vec<String>,
    /// `estimates[j][k]`: `n_list[j]`, observable `k`.
    pub estimates: Vec<Vec<Estimate>>,
    /// `|P^{n_{j+1}} φ - P^{n_j} φ|` from common noise, with the SE of the paired difference.
    pub gaps: Vec<Vec<Estimate>>,
}

impl SemigroupReport {
    pub fn table(&self) -> Table {
        let mut t = Table::new(["n", "psi_id", "estimate", "se", "gap_to_next", "gap_se"]);
        for (j, n) in self.n_list.iter().enumerate() {
            for (k, id) in self.psi_ids.iter().enumerate() {
                let e = self.estimates[j][k];
                let (g, gs) = self.gaps.get(j).map_or((f64::NAN, f64::NAN), |g| (g[k].value, g[k].se));
                t.push_cells(vec![n.to_string(), id.clone(), cell(e.value), cell(e.se), cell(g), cell(gs)]);
            }
        }
        t
    }
}

/// Ensemble estimates of `Pⁿ_t φ(x)` along `n_list`. Member `k` uses
/// `stream.child(k)` for every `n`, so the gaps are paired differences.
pub fn semigroup_convergence(
    x: &SpectralField,
    cfg: &SolverConfig,
    psi_list: &[Observable],
    n_list: &[usize],
    ensemble: usize,
    stream: NoiseStream,
) -> Result<SemigroupReport> {
    if ensemble < 2 {
        return Err(Error::invalid("ensembles need at least two members"));
    }
    let transform = CosineTransform::new(cfg.modes, cfg.points)?;
    let grid = transform.synthesize(x);
    if grid.sup_norm() > 1.0 {
        return Err(Error::invalid("initial condition must lie in K on the grid"));
    }
    let mut values = Vec::with_capacity(n_list.len());
    for &n in n_list {
        let ncfg = cfg.clone().with_spec(cfg.spec.with_n(n)).validated()?;
        values.push(ensemble_values(x, &ncfg, psi_list, ensemble, |k| stream.child(k as u64))?);
    }
    let estimates = values.iter().map(|v| column_estimates(v, psi_list.len())).collect();
    let gaps = values
        .windows(2)
        .map(|w| {
            (0..psi_list.len())
                .map(|k| {
                    let d: Vec<f64> = w[1].iter().zip(&w[0]).map(|(b, a)| b[k] - a[k]).collect();
                    let e = mean_se(&d);
                    Estimate::new(e.value.abs(), e.se)
                })
                .collect()
        })
        .collect();
    Ok(SemigroupReport {
        t: cfg.horizon,
        n_list: n_list.to_vec(),
        psi_ids: psi_list.iter().map(|p| p.to_string()).collect(),
        estimates,
        gaps,
    })
}

/// `2e^{λ²t/4}/(λ√t) · |x - y|_{-1}`, the envelope for `‖φ‖_∞ = 1`.
pub fn strong_feller_bound(lambda: f64, t: f64, distance: f64) -> Result<f64> {
    if !(lambda > 0.0) {
        return Err(Error::invalid("the strong Feller envelope needs lambda > 0"));
    }
    if !(t > 0.0) {
        return Err(Error::NonPositiveTime(t));
    }
    Ok(2.0 * (lambda * lambda * t / 4.0).exp() / (lambda * t.sqrt()) * distance)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StrongFellerEntry {
    pub psi_id: String,
    /// `|P_t φ(x) - P_t φ(y)|` from independent ensembles.
    pub lhs: Estimate,
    /// Envelope scaled by `‖φ‖_∞`.
    pub bound: f64,
    pub pass: bool,
    /// Same difference with shared noise, and the contraction bound `Lip·e^{λt}|x - y|_{-1}`.
    pub shared_lhs: Estimate,
    pub lipschitz_bound: Option<f64>,
    pub shared_pass: Option<bool>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StrongFellerReport {
    pub t: f64,
    pub lambda: f64,
    pub distance: f64,
    pub entries: Vec<StrongFellerEntry>,
}

impl StrongFellerReport {
    pub fn pass(&self) -> bool {
        self.entries.iter().all(|e| e.pass && e.shared_pass.unwrap_or(true))
    }

    pub fn table(&self) -> Table {
        let mut t = Table::new([
            "psi_id",
            "t",
            "distance",
            "lhs",
            "lhs_se",
            "bound",
            "pass",
            "shared_lhs",
            "shared_se",
            "lipschitz_bound",
        ]);
        for e in &self.entries {
            t.push_cells(vec![
                e.psi_id.clone(),
                cell(self.t),
                cell(self.distance),
                cell(e.lhs.value),
                cell(e.lhs.se),
                cell(e.bound),
                e.pass.to_string(),
                cell(e.shared_lhs.value),
                cell(e.shared_lhs.se),
                e.lipschitz_bound.map_or_else(|| "nan".into(), cell),
            ]);
        }
        t
    }
}

/// Compare `|P_t φ(x) - P_t φ(y)|` with the strong Feller envelope.
///
/// The envelope comparison uses independent ensembles (`x` member `k` on
/// `child(2k)`, `y` member `k` on `child(2k+1)`) and passes when the
/// estimate is at most `bound + 3·SE`. The shared-noise variant drives both
/// from `child(2k)`.
pub fn strong_feller_check(
    x: &SpectralField,
    y: &SpectralField,
    cfg: &SolverConfig,
    psi_list: &[Observable],
    ensemble: usize,
    stream: NoiseStream,
) -> Result<StrongFellerReport> {
    if (x.mean() - y.mean()).abs() > 1e-14 {
        return Err(Error::invalid("x and y must share their mean"));
    }
    if ensemble < 2 {
        return Err(Error::invalid("ensembles need at least two members"));
    }
    let lambda = cfg.spec.lambda;
    let t = cfg.steps() as f64 * cfg.dt;
    let distance = distance_minus1(x, y);
    let envelope = strong_feller_bound(lambda, t, distance)?;
    let sup: Vec<f64> = psi_list
        .iter()
        .map(|p| {
            p.sup_norm()
                .ok_or_else(|| Error::invalid(format!("observable {p} is not bounded")))
        })
        .collect::<Result<_>>()?;

    let vx = ensemble_values(x, cfg, psi_list, ensemble, |k| stream.child(2 * k as u64))?;
    let vy = ensemble_values(y, cfg, psi_list, ensemble, |k| stream.child(2 * k as u64 + 1))?;
    let vy_shared = ensemble_values(y, cfg, psi_list, ensemble, |k| stream.child(2 * k as u64))?;
    let ex = column_estimates(&vx, psi_list.len());
    let ey = column_estimates(&vy, psi_list.len());

    let entries = psi_list
        .iter()
        .enumerate()
        .map(|(k, p)| {
            let diff = ex[k].minus(&ey[k]);
            let lhs = Estimate::new(diff.value.abs(), diff.se);
            let bound = envelope * sup[k];
            let paired: Vec<f64> = vx.iter().zip(&vy_shared).map(|(a, b)| a[k] - b[k]).collect();
            let sd = mean_se(&paired);
            let shared_lhs = Estimate::new(sd.value.abs(), sd.se);
            let lipschitz_bound = p.lipschitz_minus1().map(|l| l * (lambda * t).exp() * distance);
            // pathwise bound: no Monte-Carlo allowance
            let shared_pass = lipschitz_bound.map(|b| shared_lhs.value <= b * (1.0 + 1e-9) + 1e-15);
            StrongFellerEntry {
                psi_id: p.to_string(),
                lhs,
                bound,
                pass: lhs.value <= bound + 3.0 * lhs.se,
                shared_lhs,
                lipschitz_bound,
                shared_pass,
            }
        })
        .collect();
    Ok(StrongFellerReport {
        t,
        lambda,
        distance,
        entries,
    })
}
