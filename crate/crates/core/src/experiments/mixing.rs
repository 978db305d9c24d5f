//! Exponential mixing: decay of `|E φ(X(t, x)) - ν(φ)|` in `t`.

use serde::{Deserialize, Serialize};

use crate::dynamics::{ExactNoise, Integrator, SolverConfig};
use crate::ensemble::try_par_map;
use crate::error::{Error, Result};
use crate::gaussian::NoiseStream;
use crate::measures::Observable;
use crate::report::{cell, Table};
use crate::spectral::{distance_minus1, SpectralField};
use crate::stats::{linear_fit, mean_se, Estimate};

/// Gaps below `FLOOR_SIGMAS` standard errors count as noise floor.
pub const FLOOR_SIGMAS: f64 = 3.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GapSeries {
    pub start: usize,
    pub psi_id: String,
    /// `|Ê φ(X(t)) - ν̂(φ)|` per lag, SE combining both estimates.
    pub gaps: Vec<Estimate>,
    /// Leading lags with `gap > 3 SE`.
    pub pre_floor: usize,
    /// Log-linear fit over the pre-floor lags, when there are at least three.
    pub fit: Option<SeriesFit>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeriesFit {
    pub beta: f64,
    /// 95% interval for `beta`.
    pub beta_ci: (f64, f64),
    pub r2: f64,
    pub points: usize,
}

impl SeriesFit {
    fn from_gaps(lags: &[f64], gaps: &[Estimate]) -> Result<Self> {
        let ys: Vec<f64> = gaps.iter().map(|g| g.value.ln()).collect();
        let fit = linear_fit(lags, &ys)?;
        let (lo, hi) = fit.slope_ci(0.95);
        Ok(SeriesFit {
            beta: -fit.slope,
            beta_ci: (-hi, -lo),
            r2: fit.r2,
            points: fit.points,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MixingReport {
    pub lags: Vec<f64>,
    /// Mean `|X(t, x₀) - X(t, x₁)|_{-1}` under shared noise (empty for one start).
    pub distances: Vec<f64>,
    pub observable_gaps: Vec<GapSeries>,
    /// Slowest fitted rate over all series, which bounds every gap.
    pub fitted_beta: f64,
    /// 95% interval for `fitted_beta`.
    pub beta_ci: (f64, f64),
    /// Smallest `R²` over the fitted series.
    pub fit_r2: f64,
    /// Lags used across all fits.
    pub fit_points: usize,
}

impl MixingReport {
    /// Every fitted series has `β > 0` at 95% confidence and `R² ≥ min_r2`.
    pub fn pass(&self, min_r2: f64) -> bool {
        let fits: Vec<&SeriesFit> = self.observable_gaps.iter().filter_map(|s| s.fit.as_ref()).collect();
        !fits.is_empty() && fits.iter().all(|f| f.beta_ci.0 > 0.0 && f.r2 >= min_r2)
    }

    pub fn table(&self) -> Table {
        let mut t = Table::new(["lag", "start", "psi_id", "gap", "gap_se", "pair_distance", "series_beta", "series_r2"]);
        for s in &self.observable_gaps {
            for (l, (lag, g)) in self.lags.iter().zip(&s.gaps).enumerate() {
                t.push_cells(vec![
                    cell(*lag),
                    s.start.to_string(),
                    s.psi_id.clone(),
                    cell(g.value),
                    cell(g.se),
                    self.distances.get(l).map_or_else(|| "nan".into(), |d| cell(*d)),
                    cell(s.fit.map_or(f64::NAN, |f| f.beta)),
                    cell(s.fit.map_or(f64::NAN, |f| f.r2)),
                ]);
            }
        }
        t
    }
}

/// Estimate gaps to the stationary reference at each lag, for each start in
/// `starts` and each observable, then fit `gap ≈ C e^{-βt}` to each series
/// over its pre-floor lags. Member `k` is driven by `stream.child(k)` for every
/// start, so distances between starts are shared-noise couplings.
pub fn mixing_estimate(
    cfg: &SolverConfig,
    starts: &[SpectralField],
    lags: &[f64],
    psi_list: &[Observable],
    reference: &[Estimate],
    ensemble: usize,
    stream: NoiseStream,
) -> Result<MixingReport> {
    if lags.is_empty() || lags.windows(2).any(|w| w[0] >= w[1]) || lags[0] < 0.0 {
        return Err(Error::invalid("lags must be nonnegative and strictly increasing"));
    }
    if reference.len() != psi_list.len() {
        return Err(Error::invalid("one reference value per observable is required"));
    }
    if ensemble < 2 || starts.is_empty() {
        return Err(Error::invalid("need at least two members and one start"));
    }
    let lag_steps: Vec<u64> = lags.iter().map(|&l| crate::dynamics::steps_for(l, cfg.dt)).collect();
    let total = *lag_steps.last().unwrap();

    // per member: values[start][lag][psi], states at lags of the first two starts
    type MemberOut = (Vec<Vec<Vec<f64>>>, Vec<f64>);
    let members = try_par_map(ensemble, |k| -> Result<MemberOut> {
        let s = stream.child(k as u64);
        let mut values = Vec::with_capacity(starts.len());
        let mut snaps: Vec<Vec<SpectralField>> = Vec::new();
        for (si, x) in starts.iter().enumerate() {
            let mut integrator = Integrator::new(cfg)?;
            let mut noise = ExactNoise::new(s, cfg.modes, cfg.dt, cfg.noise_scale);
            let mut state = x.clone();
            let mut per_lag = Vec::with_capacity(lags.len());
            let mut states = Vec::new();
            let mut next = 0;
            integrator.run(&mut state, &mut noise, total, |v| {
                while next < lag_steps.len() && lag_steps[next] == v.step {
                    per_lag.push(psi_list.iter().map(|p| p.eval(v.state, v.grid)).collect::<Vec<_>>());
                    if si < 2 {
                        states.push(SpectralField::from_vec(v.state.to_vec()));
                    }
                    next += 1;
                }
            })?;
            values.push(per_lag);
            if si < 2 {
                snaps.push(states);
            }
        }
        let distances = if snaps.len() == 2 {
            snaps[0].iter().zip(&snaps[1]).map(|(a, b)| distance_minus1(a, b)).collect()
        } else {
            Vec::new()
        };
        Ok((values, distances))
    })?;

    let distances = if starts.len() >= 2 {
        (0..lags.len())
            .map(|l| members.iter().map(|m| m.1[l]).sum::<f64>() / ensemble as f64)
            .collect()
    } else {
        Vec::new()
    };

    let mut observable_gaps = Vec::new();
    for si in 0..starts.len() {
        for (k, psi) in psi_list.iter().enumerate() {
            let gaps: Vec<Estimate> = (0..lags.len())
                .map(|l| {
                    let e = mean_se(&members.iter().map(|m| m.0[si][l][k]).collect::<Vec<_>>());
                    let d = e.minus(&reference[k]);
                    Estimate::new(d.value.abs(), d.se)
                })
                .collect();
            let pre_floor = gaps
                .iter()
                .take_while(|g| g.value > FLOOR_SIGMAS * g.se && g.value > 0.0)
                .count();
            let fit = if pre_floor >= 3 {
                Some(SeriesFit::from_gaps(&lags[..pre_floor], &gaps[..pre_floor])?)
            } else {
                None
            };
            observable_gaps.push(GapSeries {
                start: si,
                psi_id: psi.to_string(),
                gaps,
                pre_floor,
                fit,
            });
        }
    }

    let fits: Vec<SeriesFit> = observable_gaps.iter().filter_map(|s| s.fit).collect();
    let slowest = fits.iter().copied().min_by(|a, b| a.beta.total_cmp(&b.beta));
    let (fitted_beta, beta_ci) = slowest.map_or((f64::NAN, (f64::NAN, f64::NAN)), |f| (f.beta, f.beta_ci));
    let fit_r2 = fits.iter().map(|f| f.r2).reduce(f64::min).unwrap_or(f64::NAN);
    let fit_points = fits.iter().map(|f| f.points).sum();
    Ok(MixingReport {
        lags: lags.to_vec(),
        distances,
        observable_gaps,
        fitted_beta,
        beta_ci,
        fit_r2,
        fit_points,
    })
}

/// Lags every `fine` up to `fine_until`, then the listed coarse lags.
pub fn default_lags(fine: f64, fine_until: f64, coarse: &[f64]) -> Vec<f64> {
    let n = (fine_until / fine).round() as usize;
    let mut lags: Vec<f64> = (0..=n).map(|k| k as f64 * fine).collect();
    lags.extend(coarse.iter().copied().filter(|&c| c > fine_until));
    lags
}
