//! Time integration of the polynomial approximation
//!
//! ```text
//! dXⁿ + ½(A²Xⁿ + A fⁿ(Xⁿ)) dt = B dW
//! ```
//!
//! with an exponential (mild-form) Euler scheme. Per mode `i ≥ 1`, with
//! `E_i = e^{-a_i² dt/2}`:
//!
//! ```text
//! X⁺_i = E_i X_i + (1 - E_i)/a_i · fⁿ(X)_i + ξ_i,   Var ξ_i = (1 - E_i²)/a_i
//! ```
//!
//! The linear part and the stochastic convolution are exact, and the mean
//! (mode 0) is never touched, so mass is conserved to the last bit.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian::{convolution_std, NoiseStream};
use crate::potential::{DriftKind, PotentialSpec};
use crate::spectral::{dealiased_grid, distance_minus1, eigenvalue, q_n_weight, CosineTransform, SpectralField};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub modes: usize,
    pub points: usize,
    pub dt: f64,
    pub horizon: f64,
    pub burn_in: f64,
    pub spec: PotentialSpec,
    pub drift: DriftKind,
    /// Conserved mean `c` of initial conditions built by drivers.
    pub mean: f64,
    /// Multiplier on the stochastic forcing; 0 gives the deterministic flow.
    pub noise_scale: f64,
    pub stability_margin: f64,
    /// Range of |X| over which the drift Lipschitz constant is measured for the step guard.
    pub x_max: f64,
}

impl SolverConfig {
    pub fn new(modes: usize, points: usize, dt: f64, horizon: f64, spec: PotentialSpec) -> Result<Self> {
        Self {
            modes,
            points,
            dt,
            horizon,
            burn_in: 0.0,
            spec,
            drift: DriftKind::Polynomial,
            mean: 0.0,
            noise_scale: 1.0,
            stability_margin: 1.0,
            x_max: 1.5,
        }
        .validated()
    }

    pub fn with_drift(mut self, drift: DriftKind) -> Self {
        self.drift = drift;
        self
    }

    pub fn with_mean(mut self, mean: f64) -> Self {
        self.mean = mean;
        self
    }

    pub fn with_horizon(mut self, horizon: f64) -> Self {
        self.horizon = horizon;
        self
    }

    pub fn with_burn_in(mut self, burn_in: f64) -> Self {
        self.burn_in = burn_in;
        self
    }

    pub fn with_noise_scale(mut self, scale: f64) -> Self {
        self.noise_scale = scale;
        self
    }

    pub fn with_dt(mut self, dt: f64) -> Self {
        self.dt = dt;
        self
    }

    pub fn with_spec(mut self, spec: PotentialSpec) -> Self {
        self.spec = spec;
        self
    }

    pub fn validated(self) -> Result<Self> {
        if self.modes == 0 {
            return Err(Error::invalid("M must be at least 1"));
        }
        if self.points < dealiased_grid(self.modes) {
            return Err(Error::invalid(format!(
                "P >= 2*(M+1) required: P = {}, M = {}",
                self.points, self.modes
            )));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::invalid(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.horizon >= 0.0 && self.horizon.is_finite()) {
            return Err(Error::invalid(format!("T must be nonnegative, got {}", self.horizon)));
        }
        if !(self.burn_in >= 0.0 && self.burn_in.is_finite()) {
            return Err(Error::invalid(format!("burn_in must be nonnegative, got {}", self.burn_in)));
        }
        if !(self.noise_scale >= 0.0 && self.noise_scale.is_finite()) {
            return Err(Error::invalid("noise scale must be nonnegative"));
        }
        self.spec.validated()?;
        let indicator = self.stability_indicator();
        if indicator > self.stability_margin {
            log::warn!(
                "step guard: linearized amplification {indicator:.3} exceeds margin {} (dt = {})",
                self.stability_margin,
                self.dt
            );
        }
        Ok(self)
    }

    /// Steps needed to cover `horizon`.
    pub fn steps(&self) -> u64 {
        steps_for(self.horizon, self.dt)
    }

    pub fn burn_in_steps(&self) -> u64 {
        steps_for(self.burn_in, self.dt)
    }

    /// `L · max_i (1-E_i)/(a_i(1+E_i))`, where `L = sup_{|x|≤x_max} |drift'|`.
    ///
    /// Values above 1 mean the explicit treatment of the drift can amplify a
    /// linearized perturbation in some mode.
    pub fn stability_indicator(&self) -> f64 {
        let lip = self.spec.drift_lipschitz(self.drift, self.x_max);
        let worst = (1..=self.modes)
            .map(|i| {
                let a = eigenvalue(i);
                let e = (-0.5 * a * a * self.dt).exp();
                (1.0 - e) / (a * (1.0 + e))
            })
            .fold(0.0, f64::max);
        lip * worst
    }

    /// Largest step (to about 1e-6 relative) whose stability indicator stays
    /// within the margin, capped at the configured `dt`.
    pub fn stable_dt(&self) -> f64 {
        let fits = |dt: f64| self.clone().with_dt(dt).stability_indicator() <= self.stability_margin;
        if fits(self.dt) {
            return self.dt;
        }
        let (mut lo, mut hi) = (self.dt, self.dt);
        while !fits(lo) && lo > 1e-300 {
            lo *= 0.5;
        }
        while hi / lo > 1.0 + 1e-6 {
            let mid = (lo * hi).sqrt();
            if fits(mid) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        lo
    }
}

pub(crate) fn steps_for(time: f64, dt: f64) -> u64 {
    (time / dt - 1e-9).ceil().max(0.0) as u64
}

/// Per-step summary of a run.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryDiagnostics {
    /// Times at which the state was observed (every step, including the last).
    pub times: Vec<f64>,
    /// `max_t |mean(X(t)) - c|`, measured both on the coefficient and on the grid.
    pub mean_drift: f64,
    /// `max_{t,θ} (|X| - 1)_+` on the grid.
    pub overshoot: f64,
    /// Left-point quadrature of `∫∫ |drift(X)| dθ dt`.
    pub drift_l1: f64,
    pub energy_residuals: Vec<f64>,
    pub steps_completed: u64,
}

/// Source of stochastic-convolution increments, one call per step.
pub trait NoiseSource {
    fn fill(&mut self, out: &mut [f64]);
}

/// No forcing.
#[derive(Clone, Copy, Debug, Default)]
pub struct Silent;

impl NoiseSource for Silent {
    fn fill(&mut self, out: &mut [f64]) {
        out.fill(0.0);
    }
}

/// Exact convolution increments drawn from a counter-based stream.
#[derive(Clone, Debug)]
pub struct ExactNoise {
    stream: NoiseStream,
    std: Vec<f64>,
}

impl ExactNoise {
    pub fn new(stream: NoiseStream, modes: usize, dt: f64, scale: f64) -> Self {
        let std = convolution_std(modes, dt).into_iter().map(|s| s * scale).collect();
        Self { stream, std }
    }

    pub fn stream(&self) -> NoiseStream {
        self.stream
    }
}

impl NoiseSource for ExactNoise {
    fn fill(&mut self, out: &mut [f64]) {
        self.stream.fill_normals(out);
        for (o, s) in out.iter_mut().zip(&self.std) {
            *o *= s;
        }
        out[0] = 0.0;
    }
}

/// Increments over `substeps · dt_fine` assembled from the fine-level draws of
/// the same stream, so a coarse run sees the same Brownian path as an
/// [`ExactNoise`] run at `dt_fine`.
#[derive(Clone, Debug)]
pub struct RefinedNoise {
    stream: NoiseStream,
    fine_std: Vec<f64>,
    fine_decay: Vec<f64>,
    substeps: usize,
    scratch: Vec<f64>,
}

impl RefinedNoise {
    pub fn new(stream: NoiseStream, modes: usize, dt_fine: f64, substeps: usize, scale: f64) -> Self {
        let fine_std = convolution_std(modes, dt_fine).into_iter().map(|s| s * scale).collect();
        let fine_decay = (0..=modes)
            .map(|i| {
                let a = eigenvalue(i);
                (-0.5 * a * a * dt_fine).exp()
            })
            .collect();
        Self {
            stream,
            fine_std,
            fine_decay,
            substeps: substeps.max(1),
            scratch: vec![0.0; modes + 1],
        }
    }
}

impl NoiseSource for RefinedNoise {
    fn fill(&mut self, out: &mut [f64]) {
        out.fill(0.0);
        for _ in 0..self.substeps {
            self.stream.fill_normals(&mut self.scratch);
            for i in 1..out.len() {
                out[i] = self.fine_decay[i] * out[i] + self.fine_std[i] * self.scratch[i];
            }
        }
    }
}

/// Deterministic per-step forcing plus a scaled random part.
pub struct ForcedNoise<N> {
    pub forcing: Vec<Vec<f64>>,
    pub inner: N,
    step: usize,
}

impl<N: NoiseSource> ForcedNoise<N> {
    pub fn new(forcing: Vec<Vec<f64>>, inner: N) -> Self {
        Self {
            forcing,
            inner,
            step: 0,
        }
    }
}

impl<N: NoiseSource> NoiseSource for ForcedNoise<N> {
    fn fill(&mut self, out: &mut [f64]) {
        self.inner.fill(out);
        if let Some(f) = self.forcing.get(self.step) {
            for (o, v) in out.iter_mut().zip(f) {
                *o += v;
            }
        }
        self.step += 1;
    }
}

/// What an observer sees at each step: the state before the update and the
/// quantities the update is built from. The last call (after the final
/// step) carries `noise = None`.
pub struct StepView<'a> {
    pub step: u64,
    pub time: f64,
    pub state: &'a [f64],
    pub grid: &'a [f64],
    pub drift_grid: &'a [f64],
    pub drift_modes: &'a [f64],
    pub noise: Option<&'a [f64]>,
}

/// Exponential-Euler integrator with its transform tables and scratch buffers.
#[derive(Clone, Debug)]
pub struct Integrator {
    cfg: SolverConfig,
    transform: CosineTransform,
    decay: Vec<f64>,
    gain: Vec<f64>,
    grid: Vec<f64>,
    drift_grid: Vec<f64>,
    drift_modes: Vec<f64>,
    noise: Vec<f64>,
}

impl Integrator {
    pub fn new(cfg: &SolverConfig) -> Result<Self> {
        let cfg = cfg.clone().validated()?;
        let transform = CosineTransform::new(cfg.modes, cfg.points)?;
        let (decay, gain) = exponential_weights(cfg.modes, cfg.dt);
        Ok(Self {
            transform,
            decay,
            gain,
            grid: vec![0.0; cfg.points],
            drift_grid: vec![0.0; cfg.points],
            drift_modes: vec![0.0; cfg.modes + 1],
            noise: vec![0.0; cfg.modes + 1],
            cfg,
        })
    }

    pub fn config(&self) -> &SolverConfig {
        &self.cfg
    }

    pub fn transform(&self) -> &CosineTransform {
        &self.transform
    }

    /// Evaluate the grid values, pointwise drift and its cosine projection for `state`.
    fn prepare(&mut self, state: &[f64]) {
        self.transform.synthesize_into(state, &mut self.grid);
        let spec = &self.cfg.spec;
        let kind = self.cfg.drift;
        match kind {
            DriftKind::None => {
                self.drift_grid.fill(0.0);
                self.drift_modes.fill(0.0);
            }
            _ => {
                for (d, &x) in self.drift_grid.iter_mut().zip(&self.grid) {
                    *d = spec.drift(kind, x);
                }
                self.transform.analyze_into(&self.drift_grid, &mut self.drift_modes);
            }
        }
    }

    fn update(&mut self, state: &mut [f64]) {
        // mode 0: decay = 1, gain = 0, noise = 0
        for i in 1..state.len() {
            state[i] = self.decay[i] * state[i] + self.gain[i] * self.drift_modes[i] + self.noise[i];
        }
    }

    /// Advance `state` by one step with the given convolution increment.
    pub fn step_with(&mut self, state: &mut [f64], noise: &[f64]) {
        self.prepare(state);
        self.noise.copy_from_slice(noise);
        self.update(state);
    }

    /// Run `steps` steps from `state`, calling `observer` before every update
    /// and once more on the final state.
    pub fn run<N, F>(&mut self, state: &mut SpectralField, noise: &mut N, steps: u64, mut observer: F) -> Result<()>
    where
        N: NoiseSource + ?Sized,
        F: FnMut(&StepView<'_>),
    {
        check_modes(state, self.cfg.modes)?;
        let dt = self.cfg.dt;
        for k in 0..steps {
            let x = state.coeffs_mut();
            self.prepare(x);
            noise.fill(&mut self.noise);
            observer(&StepView {
                step: k,
                time: k as f64 * dt,
                state: x,
                grid: &self.grid,
                drift_grid: &self.drift_grid,
                drift_modes: &self.drift_modes,
                noise: Some(&self.noise),
            });
            self.update(x);
            if !x.iter().all(|c| c.is_finite()) {
                return Err(Error::NumericalBlowup {
                    step: k + 1,
                    diagnostics: Box::default(),
                });
            }
        }
        let x = state.coeffs();
        self.prepare(x);
        observer(&StepView {
            step: steps,
            time: steps as f64 * dt,
            state: x,
            grid: &self.grid,
            drift_grid: &self.drift_grid,
            drift_modes: &self.drift_modes,
            noise: None,
        });
        Ok(())
    }
}

fn check_modes(state: &SpectralField, modes: usize) -> Result<()> {
    if state.modes() != modes {
        return Err(Error::invalid(format!(
            "state has {} modes, solver expects {modes}",
            state.modes()
        )));
    }
    Ok(())
}

/// `E_i = e^{-a_i² dt/2}` and the drift gain `(1 - E_i)/a_i` (zero on the mean).
pub fn exponential_weights(modes: usize, dt: f64) -> (Vec<f64>, Vec<f64>) {
    let decay: Vec<f64> = (0..=modes)
        .map(|i| {
            let a = eigenvalue(i);
            (-0.5 * a * a * dt).exp()
        })
        .collect();
    let gain = (0..=modes)
        .map(|i| {
            if i == 0 {
                0.0
            } else {
                let a = eigenvalue(i);
                -(-0.5 * a * a * dt).exp_m1() / a
            }
        })
        .collect();
    (decay, gain)
}

/// Accumulates [`TrajectoryDiagnostics`] from step views.
#[derive(Clone, Debug)]
pub struct DiagnosticsRecorder {
    mean: f64,
    dt: f64,
    record_times: bool,
    pub diagnostics: TrajectoryDiagnostics,
}

impl DiagnosticsRecorder {
    pub fn new(mean: f64, dt: f64, record_times: bool) -> Self {
        Self {
            mean,
            dt,
            record_times,
            diagnostics: TrajectoryDiagnostics::default(),
        }
    }

    pub fn observe(&mut self, view: &StepView<'_>) {
        let d = &mut self.diagnostics;
        if self.record_times {
            d.times.push(view.time);
        }
        let grid_mean = view.grid.iter().sum::<f64>() / view.grid.len() as f64;
        d.mean_drift = d
            .mean_drift
            .max((view.state[0] - self.mean).abs())
            .max((grid_mean - self.mean).abs());
        let over = view.grid.iter().fold(0.0_f64, |m, x| m.max(x.abs() - 1.0));
        d.overshoot = d.overshoot.max(over);
        if view.noise.is_some() {
            let l1 = view.drift_grid.iter().map(|v| v.abs()).sum::<f64>() / view.drift_grid.len() as f64;
            d.drift_l1 += l1 * self.dt;
        } else {
            d.steps_completed = view.step;
        }
    }
}

/// Run with a caller-supplied noise source, collecting diagnostics.
pub fn simulate_with<N: NoiseSource + ?Sized>(
    x: &SpectralField,
    cfg: &SolverConfig,
    noise: &mut N,
) -> Result<(SpectralField, TrajectoryDiagnostics)> {
    let mut integrator = Integrator::new(cfg)?;
    let mut state = x.clone();
    let mut recorder = DiagnosticsRecorder::new(x.mean(), cfg.dt, true);
    let outcome = integrator.run(&mut state, noise, cfg.steps(), |v| recorder.observe(v));
    match outcome {
        Ok(()) => Ok((state, recorder.diagnostics)),
        Err(Error::NumericalBlowup { step, .. }) => {
            let mut diagnostics = recorder.diagnostics;
            diagnostics.steps_completed = step.saturating_sub(1);
            Err(Error::NumericalBlowup {
                step,
                diagnostics: Box::new(diagnostics),
            })
        }
        Err(e) => Err(e),
    }
}

/// One exponential-Euler step driven by the exact convolution increment of `stream`.
pub fn step(x: &SpectralField, cfg: &SolverConfig, stream: &mut NoiseStream) -> Result<SpectralField> {
    let mut integrator = Integrator::new(cfg)?;
    check_modes(x, cfg.modes)?;
    let mut noise = ExactNoise::new(*stream, cfg.modes, cfg.dt, cfg.noise_scale);
    let mut increment = vec![0.0; cfg.modes + 1];
    noise.fill(&mut increment);
    *stream = noise.stream();
    let mut out = x.clone();
    integrator.step_with(out.coeffs_mut(), &increment);
    if !out.is_finite() {
        return Err(Error::NumericalBlowup {
            step: 1,
            diagnostics: Box::default(),
        });
    }
    Ok(out)
}

/// Integrate over `[0, T]` with exact convolution noise from `stream`.
pub fn simulate(
    x: &SpectralField,
    cfg: &SolverConfig,
    stream: NoiseStream,
) -> Result<(SpectralField, TrajectoryDiagnostics)> {
    if cfg.noise_scale == 0.0 {
        simulate_with(x, cfg, &mut Silent)
    } else {
        let mut noise = ExactNoise::new(stream, cfg.modes, cfg.dt, cfg.noise_scale);
        simulate_with(x, cfg, &mut noise)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairRun {
    pub x_final: SpectralField,
    pub y_final: SpectralField,
    pub times: Vec<f64>,
    /// `|X(t,x) - X(t,y)|_{-1}` at every step, starting with `t = 0`.
    pub distances: Vec<f64>,
}

/// Two trajectories from `x` and `y`, driven by the same noise when
/// `shared_noise` is set and by independent streams otherwise.
pub fn simulate_pair(
    x: &SpectralField,
    y: &SpectralField,
    cfg: &SolverConfig,
    stream: NoiseStream,
    shared_noise: bool,
) -> Result<PairRun> {
    if (x.mean() - y.mean()).abs() > 1e-14 {
        return Err(Error::invalid("paired initial conditions must share their mean"));
    }
    check_modes(x, cfg.modes)?;
    check_modes(y, cfg.modes)?;
    let y_stream = if shared_noise { stream } else { stream.child(1) };
    let mut nx = ExactNoise::new(stream, cfg.modes, cfg.dt, cfg.noise_scale);
    let mut ny = ExactNoise::new(y_stream, cfg.modes, cfg.dt, cfg.noise_scale);
    let mut ix = Integrator::new(cfg)?;
    let mut iy = ix.clone();
    let mut xs = x.clone();
    let mut ys = y.clone();
    let steps = cfg.steps();
    let mut times = Vec::with_capacity(steps as usize + 1);
    let mut distances = Vec::with_capacity(steps as usize + 1);
    let mut bx = vec![0.0; cfg.modes + 1];
    let mut by = vec![0.0; cfg.modes + 1];
    times.push(0.0);
    distances.push(distance_minus1(&xs, &ys));
    for k in 0..steps {
        nx.fill(&mut bx);
        ny.fill(&mut by);
        ix.step_with(xs.coeffs_mut(), &bx);
        iy.step_with(ys.coeffs_mut(), &by);
        if !xs.is_finite() || !ys.is_finite() {
            return Err(Error::NumericalBlowup {
                step: k + 1,
                diagnostics: Box::default(),
            });
        }
        times.push((k + 1) as f64 * cfg.dt);
        distances.push(distance_minus1(&xs, &ys));
    }
    Ok(PairRun {
        x_final: xs,
        y_final: ys,
        times,
        distances,
    })
}

/// A stored trajectory with everything the energy identity needs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub dt: f64,
    /// Noise multiplier of the run; the Itô correction scales with its square.
    pub noise_scale: f64,
    /// `X_0, …, X_K`.
    pub states: Vec<SpectralField>,
    /// Convolution increment used in step `k`.
    pub increments: Vec<Vec<f64>>,
    /// Cosine projection of the drift at `X_k`.
    pub drift_modes: Vec<Vec<f64>>,
    /// Grid mean of `|drift(X_k)|`, `k = 0..=K`.
    pub drift_abs_mean: Vec<f64>,
}

impl Trajectory {
    pub fn steps(&self) -> usize {
        self.increments.len()
    }
}

/// Integrate and keep every state, increment and drift projection.
///
/// `noise` should match `cfg.noise_scale`, which fixes the Itô correction
/// used by [`energy_check`].
pub fn record_trajectory<N: NoiseSource + ?Sized>(
    x: &SpectralField,
    cfg: &SolverConfig,
    noise: &mut N,
) -> Result<Trajectory> {
    let mut integrator = Integrator::new(cfg)?;
    let steps = cfg.steps() as usize;
    let mut traj = Trajectory {
        dt: cfg.dt,
        noise_scale: cfg.noise_scale,
        states: Vec::with_capacity(steps + 1),
        increments: Vec::with_capacity(steps),
        drift_modes: Vec::with_capacity(steps + 1),
        drift_abs_mean: Vec::with_capacity(steps + 1),
    };
    let mut state = x.clone();
    integrator.run(&mut state, noise, steps as u64, |v| {
        traj.states.push(SpectralField::from_vec(v.state.to_vec()));
        traj.drift_modes.push(v.drift_modes.to_vec());
        traj.drift_abs_mean
            .push(v.drift_grid.iter().map(|d| d.abs()).sum::<f64>() / v.drift_grid.len() as f64);
        if let Some(n) = v.noise {
            traj.increments.push(n.to_vec());
        }
    })?;
    Ok(traj)
}

/// How the time integrals of the energy identity are discretized.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum EnergyQuadrature {
    /// Weights matched to the exponential integrator; the residual is then
    /// exactly `Σ_k Σ_i (w_i²/a_i)(ξ_i² - Var ξ_i)`.
    Integrator,
    /// Plain left-point Riemann sums with `dt`; consistent to O(dt).
    LeftPoint,
}

/// Terms of the Itô identity for `|Q_N X|²_{-1}` over one window.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EnergyWindow {
    pub start_step: usize,
    /// `|Q_N X(end)|²_{-1} - |Q_N X(start)|²_{-1}`.
    pub increment: f64,
    /// `∫ |Q_N X|²_1 dt`.
    pub dissipation: f64,
    /// `∫ ⟨f(X), Q_N²(X - X̄)⟩ dt`.
    pub work: f64,
    /// `2∫ (Q_N X, Q_N B dW)_{-1}`.
    pub stochastic: f64,
    /// `Tr_N · (window length)`.
    pub trace: f64,
    pub residual: f64,
}

/// `Tr_N = Σ_{i=1}^N w_i²`, the Itô correction of `|Q_N X|²_{-1}`.
pub fn q_n_trace(order: usize) -> f64 {
    (1..=order).map(|i| q_n_weight(i, order).powi(2)).sum()
}

/// Discrete residual of the Itô identity
///
/// ```text
/// |Q_N X(t)|²_{-1} - |Q_N X(s)|²_{-1} + ∫|Q_N X|²_1 - ∫⟨f, Q_N²(X - X̄)⟩
///     - 2∫(Q_N X, Q_N B dW)_{-1} - (t - s) Tr_N
/// ```
///
/// over consecutive windows of `window_steps` steps (the whole trajectory
/// when `window_steps` is 0).
pub fn energy_check(
    traj: &Trajectory,
    order: usize,
    window_steps: usize,
    quadrature: EnergyQuadrature,
) -> Result<Vec<EnergyWindow>> {
    if order == 0 {
        return Err(Error::invalid("regularizer order N must be at least 1"));
    }
    let steps = traj.steps();
    if steps == 0 {
        return Ok(Vec::new());
    }
    let modes = traj.states[0].modes();
    let n_top = order.min(modes);
    let dt = traj.dt;
    let (decay, gain) = exponential_weights(modes, dt);
    let std = convolution_std(modes, dt);
    let window = if window_steps == 0 { steps } else { window_steps };

    // ω_i = w_i²/a_i is the |Q_N ·|²_{-1} weight of mode i
    let omega: Vec<f64> = (0..=n_top)
        .map(|i| {
            if i == 0 {
                0.0
            } else {
                q_n_weight(i, order).powi(2) / eigenvalue(i)
            }
        })
        .collect();
    let energy = |x: &SpectralField| -> f64 {
        (1..=n_top).map(|i| omega[i] * x.coeffs()[i].powi(2)).sum()
    };

    let mut out = Vec::new();
    let mut start = 0;
    while start < steps {
        let end = (start + window).min(steps);
        let mut w = EnergyWindow {
            start_step: start,
            increment: energy(&traj.states[end]) - energy(&traj.states[start]),
            ..EnergyWindow::default()
        };
        for k in start..end {
            let x = traj.states[k].coeffs();
            let phi = &traj.drift_modes[k];
            let xi = &traj.increments[k];
            for i in 1..=n_top {
                let a = eigenvalue(i);
                let (e, g) = (decay[i], gain[i]);
                match quadrature {
                    EnergyQuadrature::Integrator => {
                        let one_minus_e2 = 1.0 - e * e;
                        w.dissipation += omega[i] * one_minus_e2 * x[i] * x[i];
                        w.work += omega[i] * (2.0 * e * g * x[i] * phi[i] + g * g * phi[i] * phi[i]);
                        w.stochastic += 2.0 * omega[i] * (e * x[i] + g * phi[i]) * xi[i];
                        w.trace += omega[i] * std[i] * std[i];
                    }
                    EnergyQuadrature::LeftPoint => {
                        w.dissipation += omega[i] * a * a * x[i] * x[i] * dt;
                        w.work += omega[i] * a * x[i] * phi[i] * dt;
                        w.stochastic += 2.0 * omega[i] * x[i] * xi[i];
                        w.trace += omega[i] * a * dt;
                    }
                }
            }
        }
        w.trace *= traj.noise_scale * traj.noise_scale;
        w.residual = w.increment + w.dissipation - w.work - w.stochastic - w.trace;
        out.push(w);
        start = end;
    }
    Ok(out)
}

/// `∫∫ |drift(X)| dθ dt` by left-point quadrature over a stored trajectory.
pub fn drift_l1_mass(traj: &Trajectory) -> f64 {
    traj.drift_abs_mean[..traj.steps()].iter().sum::<f64>() * traj.dt
}

/// Snapshot rows `(t, c_0..c_M)`.
pub fn snapshot_rows(times: &[f64], states: &[SpectralField]) -> Vec<Vec<f64>> {
    times
        .iter()
        .zip(states)
        .map(|(t, s)| std::iter::once(*t).chain(s.coeffs().iter().copied()).collect())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gaussian::sample_mu_c;
    use crate::spectral::apply_heat_semigroup;

    fn cfg(lambda: f64, n: usize) -> SolverConfig {
        SolverConfig::new(8, 32, 1e-4, 0.01, PotentialSpec::new(lambda, n).unwrap()).unwrap()
    }

    fn initial(c: f64, modes: usize, seed: u64) -> SpectralField {
        sample_mu_c(&mut NoiseStream::new(seed, 0), c, modes).unwrap()
    }

    #[test]
    fn config_rejects_bad_parameters() {
        let spec = PotentialSpec::default();
        assert!(SolverConfig::new(16, 16, 1e-4, 1.0, spec).is_err());
        assert!(SolverConfig::new(16, 34, 1e-4, 1.0, spec).is_ok());
        assert!(SolverConfig::new(16, 64, 0.0, 1.0, spec).is_err());
        assert!(SolverConfig::new(16, 64, 1e-4, -1.0, spec).is_err());
        assert_eq!(SolverConfig::new(4, 64, 1e-3, 0.1, spec).unwrap().steps(), 100);
    }

    #[test]
    fn stable_dt_meets_margin() {
        let c = SolverConfig::new(16, 64, 1e-4, 1.0, PotentialSpec::new(0.0, 8).unwrap()).unwrap();
        assert!(c.stability_indicator() > 1.0);
        let dt = c.stable_dt();
        assert!(dt < c.dt);
        assert!(c.clone().with_dt(dt).stability_indicator() <= 1.0);
        assert!(c.clone().with_dt(dt * 1.001).stability_indicator() > 1.0);
        let easy = cfg(0.0, 1);
        assert_eq!(easy.stable_dt(), easy.dt);
    }

    #[test]
    fn linear_noiseless_step_is_heat_semigroup() {
        let c = cfg(0.0, 0).with_drift(DriftKind::None).with_noise_scale(0.0);
        let x = initial(0.2, 8, 3);
        let mut s = NoiseStream::new(0, 0);
        let out = step(&x, &c, &mut s).unwrap();
        let expected = apply_heat_semigroup(&x, c.dt).unwrap();
        for (a, b) in out.coeffs().iter().zip(expected.coeffs()) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn mean_is_conserved_bitwise() {
        let c = cfg(1.0, 2).with_horizon(1.0);
        let x = initial(0.3, 8, 4);
        let (out, diag) = simulate(&x, &c, NoiseStream::new(1, 1)).unwrap();
        assert_eq!(out.mean(), 0.3);
        assert!(diag.mean_drift <= 1e-12);
        assert_eq!(diag.steps_completed, c.steps());
    }

    #[test]
    fn zero_horizon_returns_input() {
        let c = cfg(0.0, 1).with_horizon(0.0);
        let x = initial(0.0, 8, 5);
        let (out, diag) = simulate(&x, &c, NoiseStream::new(1, 1)).unwrap();
        assert_eq!(out, x);
        assert_eq!(diag.times, vec![0.0]);
    }

    #[test]
    fn same_seed_same_output() {
        let c = cfg(0.5, 2);
        let x = initial(0.1, 8, 6);
        let a = simulate(&x, &c, NoiseStream::new(9, 2)).unwrap();
        let b = simulate(&x, &c, NoiseStream::new(9, 2)).unwrap();
        assert_eq!(a, b);
        let d = simulate(&x, &c, NoiseStream::new(9, 3)).unwrap();
        assert_ne!(a.0, d.0);
    }

    #[test]
    fn blowup_is_reported() {
        // huge steps with a steep drift and a field far outside [-1, 1]
        let spec = PotentialSpec::new(0.0, 12).unwrap();
        let c = SolverConfig::new(4, 16, 0.5, 50.0, spec).unwrap();
        let mut x = SpectralField::zeros(4);
        x.coeffs_mut()[1] = 3.0;
        match simulate(&x, &c, NoiseStream::new(1, 1)) {
            Err(Error::NumericalBlowup { step, diagnostics }) => {
                assert!(step >= 1);
                assert!(diagnostics.overshoot > 0.0);
            }
            other => panic!("expected blowup, got {other:?}"),
        }
    }

    #[test]
    fn identical_pairs_stay_together() {
        let c = cfg(1.0, 2);
        let x = initial(0.0, 8, 7);
        let run = simulate_pair(&x, &x, &c, NoiseStream::new(3, 3), true).unwrap();
        assert!(run.distances.iter().all(|d| *d == 0.0));
        let y = initial(0.1, 8, 8);
        assert!(simulate_pair(&x, &y, &c, NoiseStream::new(3, 3), true).is_err());
    }

    #[test]
    fn refined_noise_matches_fine_path() {
        // a coarse linear run fed with aggregated fine increments equals the
        // fine run at the coarse times (the linear flow is exact)
        let spec = PotentialSpec::default();
        let fine = SolverConfig::new(6, 16, 1e-4, 0.004, spec).unwrap().with_drift(DriftKind::None);
        let coarse = fine.clone().with_dt(4e-4);
        let x = initial(0.0, 6, 10);
        let stream = NoiseStream::new(4, 4);
        let (xf, _) = simulate(&x, &fine, stream).unwrap();
        let mut refined = RefinedNoise::new(stream, 6, 1e-4, 4, 1.0);
        let (xc, _) = simulate_with(&x, &coarse, &mut refined).unwrap();
        for (a, b) in xf.coeffs().iter().zip(xc.coeffs()) {
            assert!((a - b).abs() < 1e-13, "{a} vs {b}");
        }
    }

    #[test]
    fn trace_weights() {
        assert!((q_n_trace(2) - 1.25).abs() < 1e-15);
        assert!((q_n_trace(4) - 1.875).abs() < 1e-15);
    }

    #[test]
    fn energy_identity_deterministic_linear() {
        let c = cfg(0.0, 0).with_drift(DriftKind::None).with_noise_scale(0.0).with_horizon(0.05);
        let x = initial(0.0, 8, 11);
        let traj = record_trajectory(&x, &c, &mut Silent).unwrap();
        let exact = energy_check(&traj, 4, 0, EnergyQuadrature::Integrator).unwrap();
        assert!(exact[0].residual.abs() < 1e-15);
        let scale = exact[0].dissipation;
        let coarse = energy_check(&traj, 4, 0, EnergyQuadrature::LeftPoint).unwrap()[0].residual;
        let c2 = c.clone().with_dt(c.dt / 4.0);
        let traj2 = record_trajectory(&x, &c2, &mut Silent).unwrap();
        let fine = energy_check(&traj2, 4, 0, EnergyQuadrature::LeftPoint).unwrap()[0].residual;
        // O(dt): quartering dt cuts the left-point residual by about four
        assert!(coarse.abs() < 0.1 * scale);
        assert!(fine.abs() < 0.35 * coarse.abs(), "{fine} vs {coarse}");
    }

    #[test]
    fn drift_mass_zero_without_drift() {
        let c = cfg(0.0, 0).with_drift(DriftKind::None);
        let x = initial(0.0, 8, 12);
        let traj = record_trajectory(&x, &c, &mut ExactNoise::new(NoiseStream::new(1, 1), 8, c.dt, 1.0)).unwrap();
        assert_eq!(drift_l1_mass(&traj), 0.0);
        let c = cfg(0.0, 2);
        let traj = record_trajectory(&x, &c, &mut ExactNoise::new(NoiseStream::new(1, 1), 8, c.dt, 1.0)).unwrap();
        assert!(drift_l1_mass(&traj) > 0.0);
    }
}
