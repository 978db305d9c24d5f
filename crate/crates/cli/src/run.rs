//! Driver dispatch and artifact writing.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use chc_core::dynamics::{DiagnosticsRecorder, ExactNoise, Integrator, Silent};
use chc_core::experiments::mixing::default_lags;
use chc_core::experiments::reflection::reflection_table;
use chc_core::experiments::{
    control_residual, energy_balance, mixing_estimate, reflection_profile, semigroup_convergence, steering_check,
    strong_feller_check,
};
use chc_core::gaussian::sample_mu_c;
use chc_core::measures::{expectation, estimate_log_z, importance_sample, weak_convergence_report};
use chc_core::report::{cell, write_json, Table};
use chc_core::stats::Estimate;
use chc_core::{Error, NoiseStream, SpectralField, TrajectoryDiagnostics};
use serde_json::{json, Value};

use crate::config::{Experiment, RunConfig};

/// Stream ids under the master seed.
const DRIVER_STREAM: u64 = 0;
const INITIAL_STREAM: u64 = 1;
const REFERENCE_STREAM: u64 = 2;

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("cannot create output directory {path}: {source}")]
    OutputDir {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{experiment}: numerical blowup at step {step}; diagnostics written to {diagnostics}")]
    Blowup {
        experiment: Experiment,
        step: u64,
        diagnostics: String,
    },
    #[error("{experiment}: {source}")]
    Driver {
        experiment: Experiment,
        #[source]
        source: Error,
    },
}

/// What a finished driver leaves behind besides its files.
#[derive(Debug)]
pub struct Completed {
    pub summary_line: String,
    pub files: Vec<PathBuf>,
}

struct Artifacts {
    table: Table,
    extra: Vec<(String, Table)>,
    summary: Value,
    line: String,
}

/// Run the configured driver and write `<experiment>.csv`,
/// `<experiment>.summary.json` and `run.meta.json` into `out`.
pub fn run(cfg: &RunConfig, out: &Path, threads: usize) -> Result<Completed, RunError> {
    let experiment = cfg.experiment;
    fs::create_dir_all(out).map_err(|source| RunError::OutputDir {
        path: out.display().to_string(),
        source,
    })?;
    let started = unix_seconds();
    let driver_err = |source: Error| RunError::Driver { experiment, source };
    let result = chc_core::ensemble::with_threads(threads, || dispatch(cfg, out)).map_err(driver_err)?;
    let artifacts = match result {
        Ok(a) => a,
        Err(Error::NumericalBlowup { step, diagnostics }) => {
            let path = out.join(format!("{experiment}.diagnostics.csv"));
            diagnostics_table(&diagnostics, Some(step), cfg.solver.dt)
                .write_csv(&path)
                .map_err(driver_err)?;
            write_meta(cfg, out, threads, started, "blowup").map_err(driver_err)?;
            return Err(RunError::Blowup {
                experiment,
                step,
                diagnostics: path.display().to_string(),
            });
        }
        Err(source) => return Err(driver_err(source)),
    };

    let mut files = Vec::new();
    let csv = out.join(format!("{experiment}.csv"));
    artifacts.table.write_csv(&csv).map_err(driver_err)?;
    files.push(csv);
    for (suffix, t) in &artifacts.extra {
        let p = out.join(format!("{experiment}.{suffix}.csv"));
        t.write_csv(&p).map_err(driver_err)?;
        files.push(p);
    }
    let summary = out.join(format!("{experiment}.summary.json"));
    let mut body = json!({ "experiment": experiment.name() });
    if let (Value::Object(b), Value::Object(s)) = (&mut body, artifacts.summary) {
        b.extend(s);
    }
    write_json(&summary, &body).map_err(driver_err)?;
    files.push(summary);
    files.push(write_meta(cfg, out, threads, started, "ok").map_err(driver_err)?);
    Ok(Completed {
        summary_line: format!("{experiment}: {}", artifacts.line),
        files,
    })
}

fn unix_seconds() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0.0, |d| d.as_secs_f64())
}

fn write_meta(cfg: &RunConfig, out: &Path, threads: usize, started: f64, status: &str) -> chc_core::Result<PathBuf> {
    let path = out.join("run.meta.json");
    let meta = json!({
        "experiment": cfg.experiment.name(),
        "status": status,
        "config": cfg.entries,
        "resolved": cfg,
        "master_seed": cfg.master_seed,
        "threads": threads,
        "versions": {
            "chc": env!("CARGO_PKG_VERSION"),
        },
        "started_unix": started,
        "finished_unix": unix_seconds(),
    });
    write_json(&path, &meta)?;
    Ok(path)
}

fn diagnostics_table(d: &TrajectoryDiagnostics, blowup_step: Option<u64>, dt: f64) -> Table {
    let mut t = Table::new([
        "steps_completed",
        "blowup_step",
        "time_reached",
        "mean_drift",
        "overshoot",
        "drift_l1",
    ]);
    t.push_cells(vec![
        d.steps_completed.to_string(),
        blowup_step.map_or_else(String::new, |s| s.to_string()),
        cell(d.steps_completed as f64 * dt),
        cell(d.mean_drift),
        cell(d.overshoot),
        cell(d.drift_l1),
    ]);
    t
}

/// Initial condition `which` (0 for `x`, 1 for `y`): the configured
/// coefficients `c_1, c_2, …`, or a scaled `μ_0` draw, shifted to mean `c`.
fn initial(cfg: &RunConfig, which: u64) -> chc_core::Result<SpectralField> {
    let modes = cfg.solver.modes;
    let given = if which == 0 { &cfg.params.x } else { &cfg.params.y };
    let mut field = match given {
        Some(coeffs) => {
            if coeffs.len() > modes {
                return Err(Error::InvalidParameter(format!(
                    "initial condition has {} coefficients but M = {modes}",
                    coeffs.len()
                )));
            }
            let mut f = SpectralField::zeros(modes);
            f.coeffs_mut()[1..=coeffs.len()].copy_from_slice(coeffs);
            f
        }
        None => {
            let mut s = NoiseStream::new(cfg.master_seed, INITIAL_STREAM).child(which);
            sample_mu_c(&mut s, 0.0, modes)?.scale(cfg.params.x_scale)
        }
    };
    field.coeffs_mut()[0] = cfg.solver.mean;
    Ok(field)
}

fn dispatch(cfg: &RunConfig, out: &Path) -> chc_core::Result<Artifacts> {
    let stream = NoiseStream::new(cfg.master_seed, DRIVER_STREAM);
    let s = &cfg.solver;
    let p = &cfg.params;
    match cfg.experiment {
        Experiment::Simulate => simulate(cfg, out),
        Experiment::SampleMeasure => {
            let sample = importance_sample(stream, s.mean, s.modes, s.points, &s.spec, p.measure, p.count)?;
            let mut t = Table::new(["psi_id", "estimate", "se", "ess"]);
            let mut values = Vec::new();
            for psi in &p.psi {
                let e = expectation(&sample, psi)?;
                t.push_cells(vec![psi.to_string(), cell(e.estimate), cell(e.se), cell(e.ess)]);
                values.push(json!({ "psi_id": psi.to_string(), "estimate": e.estimate, "se": e.se }));
            }
            let log_z = estimate_log_z(&sample)?;
            Ok(Artifacts {
                table: t,
                extra: Vec::new(),
                line: format!("{} draws, ESS {:.1}, ln Z {:.6}", p.count, sample.ess, log_z),
                summary: json!({
                    "measure": p.measure,
                    "count": p.count,
                    "ess": sample.ess,
                    "support_fraction": sample.support_fraction(),
                    "log_z": log_z,
                    "estimates": values,
                }),
            })
        }
        Experiment::InvariantConvergence => {
            let r = weak_convergence_report(stream, s.mean, s.modes, s.points, s.spec.lambda, &p.n_list, &p.psi, p.count)?;
            let mut t = Table::new(["n", "psi_id", "estimate", "se", "ess"]);
            for row in r.rows() {
                t.push_cells(vec![row.n, row.psi_id, cell(row.estimate), cell(row.se), cell(row.ess)]);
            }
            Ok(Artifacts {
                table: t,
                extra: Vec::new(),
                line: format!(
                    "{} draws, mu_c(K) = {:.4}, max gap to limit {:?}",
                    r.count, r.k_fraction, r.max_gap
                ),
                summary: json!({
                    "count": r.count,
                    "k_fraction": r.k_fraction,
                    "log_z": r.log_z,
                    "max_gap": r.max_gap,
                }),
            })
        }
        Experiment::Reflection => {
            let r = reflection_profile(s, &p.n_list, p.chains, p.time_bins, stream)?;
            let contact: Vec<f64> = r.iter().map(|e| e.contact_pairing_plus.value).collect();
            let mut density = Table::new(["n", "time_bin", "point", "eta_plus", "eta_minus"]);
            for e in &r {
                for (idx, (a, b)) in e.density_plus.iter().zip(&e.density_minus).enumerate() {
                    density.push_cells(vec![
                        e.n.to_string(),
                        (idx / e.points).to_string(),
                        (idx % e.points).to_string(),
                        cell(*a),
                        cell(*b),
                    ]);
                }
            }
            Ok(Artifacts {
                table: reflection_table(&r),
                extra: vec![("density".into(), density)],
                line: format!("contact pairing (+) per n: {contact:?}"),
                summary: json!({
                    "n_list": p.n_list,
                    "contact_plus": contact,
                    "mass_plus": r.iter().map(|e| e.total_mass_plus.value).collect::<Vec<_>>(),
                    "mass_minus": r.iter().map(|e| e.total_mass_minus.value).collect::<Vec<_>>(),
                    "inner_sup": r.iter().map(|e| e.inner_sup).collect::<Vec<_>>(),
                }),
            })
        }
        Experiment::Semigroup => {
            let x = initial(cfg, 0)?;
            let r = semigroup_convergence(&x, s, &p.psi, &p.n_list, p.ensemble, stream)?;
            let last_gaps: Vec<f64> = r.gaps.last().map_or_else(Vec::new, |g| g.iter().map(|e| e.value).collect());
            Ok(Artifacts {
                table: r.table(),
                extra: Vec::new(),
                line: format!("t = {}, last gaps {last_gaps:?}", r.t),
                summary: json!({ "t": r.t, "n_list": r.n_list, "psi_ids": r.psi_ids, "last_gaps": last_gaps }),
            })
        }
        Experiment::StrongFeller => {
            let x = initial(cfg, 0)?;
            let y = initial(cfg, 1)?;
            let r = strong_feller_check(&x, &y, s, &p.psi, p.ensemble, stream)?;
            Ok(Artifacts {
                table: r.table(),
                extra: Vec::new(),
                line: format!("t = {}, |x-y|_-1 = {:.4e}, pass = {}", r.t, r.distance, r.pass()),
                summary: json!({ "t": r.t, "lambda": r.lambda, "distance": r.distance, "pass": r.pass() }),
            })
        }
        Experiment::Control => control(cfg, stream),
        Experiment::Mixing => {
            let starts = [initial(cfg, 0)?, initial(cfg, 1)?];
            let reference = weak_convergence_report(
                NoiseStream::new(cfg.master_seed, REFERENCE_STREAM),
                s.mean,
                s.modes,
                s.points,
                s.spec.lambda,
                &[s.spec.n.max(1)],
                &p.psi,
                p.count,
            )?;
            let refs: Vec<Estimate> = reference
                .estimates
                .iter()
                .map(|e| Estimate::new(e[0].estimate, e[0].se))
                .collect();
            let lags = if p.lags.len() >= 2 { p.lags.clone() } else { default_lags(s.horizon / 10.0, s.horizon, &[]) };
            let r = mixing_estimate(s, &starts, &lags, &p.psi, &refs, p.ensemble, stream)?;
            let pass = r.pass(0.9);
            Ok(Artifacts {
                table: r.table(),
                extra: Vec::new(),
                line: format!(
                    "beta = {:.3} (95% CI {:.3}..{:.3}), min R2 = {:.3}, pass = {pass}",
                    r.fitted_beta, r.beta_ci.0, r.beta_ci.1, r.fit_r2
                ),
                summary: json!({
                    "fitted_beta": finite(r.fitted_beta),
                    "beta_ci": [finite(r.beta_ci.0), finite(r.beta_ci.1)],
                    "fit_r2": finite(r.fit_r2),
                    "fit_points": r.fit_points,
                    "reference": refs.iter().map(|e| json!({ "estimate": e.value, "se": e.se })).collect::<Vec<_>>(),
                    "pass": pass,
                }),
            })
        }
        Experiment::Energy => {
            let r = energy_balance(s, p.order, p.trajectories, p.quadrature, stream)?;
            let within = r.residual.within(3.0);
            Ok(Artifacts {
                table: r.table(),
                extra: Vec::new(),
                line: format!(
                    "residual {:.3e} ± {:.3e} (scale {:.4}), within 3 SE = {within}",
                    r.residual.value, r.residual.se, r.scale
                ),
                summary: json!({
                    "order": r.order,
                    "quadrature": r.quadrature,
                    "residual": r.residual.value,
                    "residual_se": r.residual.se,
                    "scale": r.scale,
                    "drift_l1": r.drift_l1,
                    "pass": within,
                }),
            })
        }
    }
}

/// JSON has no NaN; undefined fits become `null`.
fn finite(x: f64) -> Value {
    if x.is_finite() {
        json!(x)
    } else {
        Value::Null
    }
}

fn simulate(cfg: &RunConfig, out: &Path) -> chc_core::Result<Artifacts> {
    let s = &cfg.solver;
    let x = initial(cfg, 0)?;
    let steps = s.steps();
    let every = cfg.params.snapshot_every.unwrap_or_else(|| (steps / 100).max(1));
    let mut header = vec!["t".to_string()];
    header.extend((0..=s.modes).map(|i| format!("c_{i}")));
    let mut table = Table::new(header);
    let mut recorder = DiagnosticsRecorder::new(x.mean(), s.dt, false);
    let mut integrator = Integrator::new(s)?;
    let mut state = x.clone();
    let outcome = {
        let mut observe = |v: &chc_core::dynamics::StepView<'_>| {
            recorder.observe(v);
            if v.step.is_multiple_of(every) || v.noise.is_none() {
                let mut row = vec![cell(v.time)];
                row.extend(v.state.iter().map(|c| cell(*c)));
                table.push_cells(row);
            }
        };
        if s.noise_scale == 0.0 {
            integrator.run(&mut state, &mut Silent, steps, &mut observe)
        } else {
            let stream = NoiseStream::new(cfg.master_seed, DRIVER_STREAM);
            let mut noise = ExactNoise::new(stream, s.modes, s.dt, s.noise_scale);
            integrator.run(&mut state, &mut noise, steps, &mut observe)
        }
    };
    let diagnostics = recorder.diagnostics;
    if let Err(Error::NumericalBlowup { step, .. }) = outcome {
        // keep the snapshots reached so far next to the diagnostics
        table.write_csv(&out.join("simulate.csv"))?;
        let mut d = diagnostics;
        d.steps_completed = step.saturating_sub(1);
        return Err(Error::NumericalBlowup {
            step,
            diagnostics: Box::new(d),
        });
    }
    outcome?;
    let diag = diagnostics_table(&diagnostics, None, s.dt);
    let indicator = s.stability_indicator();
    Ok(Artifacts {
        line: format!(
            "{steps} steps to t = {}, mean drift {:.3e}, overshoot {:.4}",
            steps as f64 * s.dt,
            diagnostics.mean_drift,
            diagnostics.overshoot
        ),
        table,
        extra: vec![("diagnostics".into(), diag)],
        summary: json!({
            "steps": steps,
            "final_time": steps as f64 * s.dt,
            "mean_drift": diagnostics.mean_drift,
            "overshoot": diagnostics.overshoot,
            "drift_l1": diagnostics.drift_l1,
            "stability_indicator": indicator,
            "final_mean": state.mean(),
        }),
    })
}

fn control(cfg: &RunConfig, stream: NoiseStream) -> chc_core::Result<Artifacts> {
    let s = &cfg.solver;
    let p = &cfg.params;
    let x = initial(cfg, 0)?;
    let y = initial(cfg, 1)?;
    let finest = *p.points_list.last().expect("points_list is nonempty");
    let reference = p.reference_points.unwrap_or(4 * finest);
    let mut t = Table::new(["points", "residual"]);
    let mut residuals = Vec::new();
    for &points in &p.points_list {
        let r = control_residual(&x, &y, s.horizon, points, reference, &s.spec)?;
        t.push_cells(vec![points.to_string(), cell(r)]);
        residuals.push(r);
    }
    let mut extra = Vec::new();
    let mut summary = json!({
        "horizon": s.horizon,
        "reference_points": reference,
        "points": p.points_list,
        "residuals": residuals,
    });
    if !p.noise_scales.is_empty() {
        let radii = if p.radii.is_empty() { vec![0.05] } else { p.radii.clone() };
        let r = steering_check(&x, &y, s, &p.noise_scales, &radii, p.ensemble, stream)?;
        summary["deterministic_final_distance"] = json!(r.deterministic_final_distance);
        summary["deterministic_tube_distance"] = json!(r.deterministic_tube_distance);
        extra.push(("steering".into(), r.table()));
    }
    Ok(Artifacts {
        line: format!("residuals {residuals:?} against {reference} points"),
        table: t,
        extra,
        summary,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::parse_config;

    #[test]
    fn given_coefficients_are_padded() {
        let cfg = parse_config(
            "experiment = strong-feller\nM = 4\nP = 16\ndt = 1e-3\nT = 0.01\nlambda = 1\nn = 1\nc = 0.2\nseed = 1\nx = 0.1, -0.2\n",
        )
        .unwrap();
        let x = initial(&cfg, 0).unwrap();
        assert_eq!(x.coeffs(), &[0.2, 0.1, -0.2, 0.0, 0.0]);
        let y = initial(&cfg, 1).unwrap();
        assert_eq!(y.mean(), 0.2);
        assert_ne!(y.coeffs()[1], 0.0);
    }

    #[test]
    fn too_many_coefficients() {
        let cfg = parse_config(
            "experiment = semigroup\nM = 2\nP = 8\ndt = 1e-3\nT = 0.01\nlambda = 0\nn = 1\nseed = 1\nx = 0.1, 0.1, 0.1\n",
        )
        .unwrap();
        assert!(initial(&cfg, 0).is_err());
    }
}
