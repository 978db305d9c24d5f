//! Ensemble check of the Itô identity for `|Q_N X|²_{-1}`.

use serde::{Deserialize, Serialize};

use crate::dynamics::{energy_check, record_trajectory, EnergyQuadrature, EnergyWindow, ExactNoise, SolverConfig};
use crate::ensemble::try_par_map;
use crate::error::{Error, Result};
use crate::gaussian::{sample_mu_c, NoiseStream};
use crate::report::{cell, Table};
use crate::stats::{mean_se, Estimate};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport {
    pub order: usize,
    pub quadrature: EnergyQuadrature,
    /// Whole-horizon identity terms per trajectory.
    pub windows: Vec<EnergyWindow>,
    pub residual: Estimate,
    /// Mean of `Σ|terms|`, the scale the residual is small against.
    pub scale: f64,
    /// Grid mean of `∫∫|f(X)|` over the horizon, averaged over trajectories.
    pub drift_l1: f64,
}

impl EnergyReport {
    pub fn table(&self) -> Table {
        let mut t = Table::new(["trajectory", "increment", "dissipation", "work", "stochastic", "trace", "residual"]);
        for (k, w) in self.windows.iter().enumerate() {
            t.push_cells(
                std::iter::once(k.to_string())
                    .chain([w.increment, w.dissipation, w.work, w.stochastic, w.trace, w.residual].map(cell))
                    .collect(),
            );
        }
        t
    }
}

/// Run `trajectories` paths from `μ_c` draws (path `k` on `stream.child(k)`)
/// and evaluate the identity over the full horizon of each.
pub fn energy_balance(
    cfg: &SolverConfig,
    order: usize,
    trajectories: usize,
    quadrature: EnergyQuadrature,
    stream: NoiseStream,
) -> Result<EnergyReport> {
    if trajectories < 2 {
        return Err(Error::invalid("standard errors need at least two trajectories"));
    }
    let out = try_par_map(trajectories, |k| -> Result<(EnergyWindow, f64)> {
        let s = stream.child(k as u64);
        let x = sample_mu_c(&mut s.child(0), cfg.mean, cfg.modes)?;
        let mut noise = ExactNoise::new(s.child(1), cfg.modes, cfg.dt, cfg.noise_scale);
        let traj = record_trajectory(&x, cfg, &mut noise)?;
        let w = energy_check(&traj, order, 0, quadrature)?
            .into_iter()
            .next()
            .unwrap_or_default();
        Ok((w, crate::dynamics::drift_l1_mass(&traj)))
    })?;
    let windows: Vec<EnergyWindow> = out.iter().map(|o| o.0).collect();
    let residual = mean_se(&windows.iter().map(|w| w.residual).collect::<Vec<_>>());
    let scale = windows
        .iter()
        .map(|w| w.increment.abs() + w.dissipation.abs() + w.work.abs() + w.stochastic.abs() + w.trace.abs())
        .sum::<f64>()
        / windows.len() as f64;
    let drift_l1 = out.iter().map(|o| o.1).sum::<f64>() / out.len() as f64;
    Ok(EnergyReport {
        order,
        quadrature,
        windows,
        residual,
        scale,
        drift_l1,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potential::PotentialSpec;

    #[test]
    fn integrator_quadrature_residual_is_centered() {
        let cfg = SolverConfig::new(8, 32, 1e-4, 0.02, PotentialSpec::new(1.0, 2).unwrap()).unwrap();
        let r = energy_balance(&cfg, 4, 40, EnergyQuadrature::Integrator, NoiseStream::new(1, 0)).unwrap();
        assert!(r.residual.value.abs() <= 4.0 * r.residual.se, "{:?}", r.residual);
        assert!(r.residual.se < 0.1 * r.scale);
        assert_eq!(r.table().len(), 40);
    }
}
