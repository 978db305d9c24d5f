//! The steering control of the irreducibility argument.
//!
//! With `u(t) = (t/T) y + (1 - t/T) x`, the control `g₀` satisfies
//!
//! ```text
//! B g₀ = ∂u/∂t + ½A(Au + f_δ(u)) =: h(t)
//! ```
//!
//! and, writing `h = Σ h_i e_i` (mean zero), `g₀ = Σ h_i √2 sin(iπθ)/(iπ)`.

use serde::{Deserialize, Serialize};

use crate::dynamics::{exponential_weights, ExactNoise, ForcedNoise, Integrator, SolverConfig};
use crate::ensemble::try_par_map;
use crate::error::{Error, Result};
use crate::gaussian::NoiseStream;
use crate::potential::{DriftKind, PotentialSpec};
use crate::report::{cell, Table};
use crate::spectral::{distance_minus1, eigenvalue, CosineTransform, GridField, SpectralField};

/// Resolution used to check `‖x‖_∞ ≤ 1 - δ`.
const SUP_POINTS: usize = 1024;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Control {
    pub horizon: f64,
    pub times: Vec<f64>,
    /// `u(t)` at each time.
    pub path: Vec<SpectralField>,
    /// `h(t) = B g₀(t)` in cosine modes.
    pub forcing: Vec<SpectralField>,
    /// `g₀(t)` on the midpoint grid.
    pub g0: Vec<GridField>,
}

fn sup_on_fine_grid(h: &SpectralField) -> Result<f64> {
    let t = CosineTransform::new(h.modes(), SUP_POINTS.max(h.modes() + 1))?;
    Ok(t.synthesize(h).sup_norm())
}

fn check_endpoints(x: &SpectralField, y: &SpectralField, spec: &PotentialSpec) -> Result<()> {
    if (x.mean() - y.mean()).abs() > 1e-14 {
        return Err(Error::invalid("x and y must share their mean"));
    }
    let limit = 1.0 - spec.delta;
    for h in [x, y] {
        let sup = sup_on_fine_grid(h)?;
        if sup > limit {
            return Err(Error::ControlOutOfRange { sup, limit });
        }
    }
    Ok(())
}

fn interpolate(x: &SpectralField, y: &SpectralField, s: f64) -> SpectralField {
    x.scale(1.0 - s).add(&y.scale(s))
}

/// `h(t)` with modes `0..=modes`, the nonlinearity projected on a `points` grid.
fn forcing_at(
    x: &SpectralField,
    y: &SpectralField,
    horizon: f64,
    t: f64,
    spec: &PotentialSpec,
    transform: &CosineTransform,
) -> SpectralField {
    let modes = transform.modes();
    let u = interpolate(x, y, t / horizon).resized(modes);
    let mut grid = vec![0.0; transform.points()];
    transform.synthesize_into(u.coeffs(), &mut grid);
    for g in grid.iter_mut() {
        *g = spec.f_delta(*g);
    }
    let mut f = vec![0.0; modes + 1];
    transform.analyze_into(&grid, &mut f);
    let dx = y.resized(modes).sub(&x.resized(modes));
    let mut h = vec![0.0; modes + 1];
    for i in 1..=modes {
        let a = eigenvalue(i);
        h[i] = dx.coeffs()[i] / horizon + 0.5 * (a * a * u.coeffs()[i] - a * f[i]);
    }
    SpectralField::from_vec(h)
}

/// `g₀ = Σ_{i≥1} h_i √2 sin(iπθ)/(iπ)` at the midpoints.
pub fn control_primitive(h: &SpectralField, points: usize) -> GridField {
    GridField::from_fn(points, |theta| {
        h.coeffs()
            .iter()
            .enumerate()
            .skip(1)
            .map(|(i, c)| {
                let k = i as f64 * std::f64::consts::PI;
                c * std::f64::consts::SQRT_2 * (k * theta).sin() / k
            })
            .sum()
    })
}

/// Build `u` and `g₀` at `time_points` equally spaced times in `[0, T]`,
/// resolving the nonlinearity on `points` grid points (`points/2 - 1` modes).
pub fn build_control(
    x: &SpectralField,
    y: &SpectralField,
    horizon: f64,
    time_points: usize,
    points: usize,
    spec: &PotentialSpec,
) -> Result<Control> {
    if !(horizon > 0.0) {
        return Err(Error::NonPositiveTime(horizon));
    }
    check_endpoints(x, y, spec)?;
    let modes = (points / 2).saturating_sub(1).max(1);
    let transform = CosineTransform::new(modes, points)?;
    let time_points = time_points.max(2);
    let times: Vec<f64> = (0..time_points)
        .map(|k| horizon * k as f64 / (time_points - 1) as f64)
        .collect();
    let forcing: Vec<SpectralField> = times
        .iter()
        .map(|&t| forcing_at(x, y, horizon, t, spec, &transform))
        .collect();
    Ok(Control {
        horizon,
        path: times.iter().map(|&t| interpolate(x, y, t / horizon)).collect(),
        g0: forcing.iter().map(|h| control_primitive(h, points)).collect(),
        times,
        forcing,
    })
}

/// `max_t ‖h_P(t) - h_ref(t)‖`: the control integrand at resolution `points`
/// against a reference resolution, in the grid (coefficient) norm, over
/// `t ∈ {0, T/2, T}`.
pub fn control_residual(
    x: &SpectralField,
    y: &SpectralField,
    horizon: f64,
    points: usize,
    reference_points: usize,
    spec: &PotentialSpec,
) -> Result<f64> {
    check_endpoints(x, y, spec)?;
    if reference_points <= points {
        return Err(Error::invalid("reference grid must be finer"));
    }
    let coarse = CosineTransform::new((points / 2).saturating_sub(1).max(1), points)?;
    let fine = CosineTransform::new(reference_points / 2 - 1, reference_points)?;
    let mut worst: f64 = 0.0;
    for s in [0.0, 0.5, 1.0] {
        let t = s * horizon;
        let h = forcing_at(x, y, horizon, t, spec, &coarse).resized(fine.modes());
        let r = forcing_at(x, y, horizon, t, spec, &fine);
        let d = r.sub(&h).coeffs().iter().map(|v| v * v).sum::<f64>().sqrt();
        worst = worst.max(d);
    }
    Ok(worst)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SteeringRow {
    pub noise_scale: f64,
    pub radius: f64,
    pub hit_frequency: f64,
    pub mean_final_distance: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SteeringReport {
    pub rows: Vec<SteeringRow>,
    /// `|X(T) - y|_{-1}` of the noiseless controlled run.
    pub deterministic_final_distance: f64,
    /// `sup_{t,θ} |X(t) - u(t)|` of the noiseless controlled run.
    pub deterministic_tube_distance: f64,
}

impl SteeringReport {
    pub fn table(&self) -> Table {
        let mut t = Table::new(["noise_scale", "radius", "hit_frequency", "mean_final_distance"]);
        for r in &self.rows {
            t.push([r.noise_scale, r.radius, r.hit_frequency, r.mean_final_distance].map(cell));
        }
        t
    }
}

/// Per-step forcing `∫ e^{-(t_{k+1}-s)a_i²/2} h_i(s) ds ≈ (1 - E_i)/(a_i²/2) · h_i(t_k + dt/2)`.
fn control_increments(x: &SpectralField, y: &SpectralField, cfg: &SolverConfig) -> Result<Vec<Vec<f64>>> {
    let transform = CosineTransform::new(cfg.modes, cfg.points)?;
    let (decay, _) = exponential_weights(cfg.modes, cfg.dt);
    let steps = cfg.steps() as usize;
    let horizon = steps as f64 * cfg.dt;
    Ok((0..steps)
        .map(|k| {
            let h = forcing_at(x, y, horizon, (k as f64 + 0.5) * cfg.dt, &cfg.spec, &transform);
            (0..=cfg.modes)
                .map(|i| {
                    if i == 0 {
                        0.0
                    } else {
                        let a = eigenvalue(i);
                        (1.0 - decay[i]) / (0.5 * a * a) * h.coeffs()[i]
                    }
                })
                .collect()
        })
        .collect())
}

/// Drive the `f_δ` dynamics with `B g₀ dt + scale · B dW` and record how
/// often the path stays in the sup-norm tube of each radius around `u`.
#[allow(clippy::too_many_arguments)]
pub fn steering_check(
    x: &SpectralField,
    y: &SpectralField,
    cfg: &SolverConfig,
    noise_scales: &[f64],
    radii: &[f64],
    ensemble: usize,
    stream: NoiseStream,
) -> Result<SteeringReport> {
    check_endpoints(x, y, &cfg.spec)?;
    let cfg = cfg.clone().with_drift(DriftKind::Lipschitz).validated()?;
    if cfg.steps() == 0 {
        return Err(Error::NonPositiveTime(cfg.horizon));
    }
    let xs = x.resized(cfg.modes);
    let ys = y.resized(cfg.modes);
    let increments = control_increments(&xs, &ys, &cfg)?;
    let transform = CosineTransform::new(cfg.modes, cfg.points)?;
    let horizon = cfg.steps() as f64 * cfg.dt;

    // (tube distance, final distance) of one controlled run
    let run = |scale: f64, s: NoiseStream| -> Result<(f64, f64)> {
        let mut integrator = Integrator::new(&cfg)?;
        let mut noise = ForcedNoise::new(increments.clone(), ExactNoise::new(s, cfg.modes, cfg.dt, scale));
        let mut state = xs.clone();
        let mut tube: f64 = 0.0;
        let mut ugrid = vec![0.0; cfg.points];
        integrator.run(&mut state, &mut noise, cfg.steps(), |v| {
            let u = interpolate(&xs, &ys, v.time / horizon);
            transform.synthesize_into(u.coeffs(), &mut ugrid);
            let d = v.grid.iter().zip(&ugrid).fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
            tube = tube.max(d);
        })?;
        Ok((tube, distance_minus1(&state, &ys)))
    };

    let (det_tube, det_final) = run(0.0, stream)?;
    let mut rows = Vec::new();
    for (si, &scale) in noise_scales.iter().enumerate() {
        let outcomes = try_par_map(ensemble, |k| run(scale, stream.child(si as u64).child(k as u64)))?;
        let mean_final = outcomes.iter().map(|o| o.1).sum::<f64>() / outcomes.len().max(1) as f64;
        for &r in radii {
            let hits = outcomes.iter().filter(|o| o.0 <= r).count();
            rows.push(SteeringRow {
                noise_scale: scale,
                radius: r,
                hit_frequency: hits as f64 / outcomes.len().max(1) as f64,
                mean_final_distance: mean_final,
            });
        }
    }
    Ok(SteeringReport {
        rows,
        deterministic_final_distance: det_final,
        deterministic_tube_distance: det_tube,
    })
}
