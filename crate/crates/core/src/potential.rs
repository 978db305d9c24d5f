//! The double-logarithmic drift and its polynomial truncations.
//!
//! ```text
//! f(x)   = ln((1-x)/(1+x)) + λx                         on (-1, 1)
//! F(x)   = (1+x)ln(1+x) + (1-x)ln(1-x) - (λ/2)x²        F' = -f
//! fⁿ(x)  = -2 Σ_{k=0}^n x^{2k+1}/(2k+1) + λx            on ℝ
//! Fⁿ(x)  = 2 Σ_{k=0}^n x^{2k+2}/((2k+2)(2k+1)) - (λ/2)x²
//! ```

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Parameters of the drift family.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PotentialSpec {
    /// Linear (anti-diffusive) coefficient λ.
    pub lambda: f64,
    /// Truncation index of the polynomial drift.
    pub n: usize,
    /// Distance from ±1 used when clipping is enabled.
    pub eps_clip: f64,
    /// Clip arguments of `f`, `F` into `[-1+ε, 1-ε]` instead of failing.
    pub clip: bool,
    /// Half-gap of the Lipschitz truncation window `[-1+δ/2, 1-δ/2]`.
    pub delta: f64,
}

impl Default for PotentialSpec {
    fn default() -> Self {
        Self {
            lambda: 0.0,
            n: 0,
            eps_clip: 1e-12,
            clip: false,
            delta: 0.5,
        }
    }
}

/// Which potential a functional is built from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum PotentialMode {
    /// `F`, with `+∞` outside `[-1, 1]`.
    Log,
    /// The polynomial truncation `Fⁿ`.
    Poly,
}

impl PotentialSpec {
    pub fn new(lambda: f64, n: usize) -> Result<Self> {
        Self {
            lambda,
            n,
            ..Self::default()
        }
        .validated()
    }

    pub fn with_delta(mut self, delta: f64) -> Result<Self> {
        self.delta = delta;
        self.validated()
    }

    pub fn with_clip(mut self, eps_clip: f64) -> Result<Self> {
        self.clip = true;
        self.eps_clip = eps_clip;
        self.validated()
    }

    pub fn with_n(mut self, n: usize) -> Self {
        self.n = n;
        self
    }

    pub fn validated(self) -> Result<Self> {
        if !self.lambda.is_finite() {
            return Err(Error::invalid("lambda must be finite"));
        }
        if !(self.eps_clip > 0.0 && self.eps_clip <= 1e-3) {
            return Err(Error::invalid(format!(
                "eps_clip must lie in (0, 1e-3], got {}",
                self.eps_clip
            )));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::invalid(format!(
                "delta must lie in (0, 1), got {}",
                self.delta
            )));
        }
        Ok(self)
    }

    fn guard_open(&self, x: f64) -> Result<f64> {
        if x.abs() < 1.0 {
            Ok(x)
        } else if self.clip && !x.is_nan() {
            Ok(x.clamp(-1.0 + self.eps_clip, 1.0 - self.eps_clip))
        } else {
            Err(Error::SingularInput(x))
        }
    }

    /// `f(x)`; fails at `|x| ≥ 1` unless clipping is on.
    pub fn f_log(&self, x: f64) -> Result<f64> {
        let x = self.guard_open(x)?;
        Ok((-x).ln_1p() - x.ln_1p() + self.lambda * x)
    }

    /// `f'(x) = -2/(1-x²) + λ`.
    pub fn f_log_derivative(&self, x: f64) -> Result<f64> {
        let x = self.guard_open(x)?;
        Ok(-2.0 / (1.0 - x * x) + self.lambda)
    }

    /// `F(x)` on the closed interval, with `0·ln 0 = 0` at the endpoints.
    pub fn big_f(&self, x: f64) -> Result<f64> {
        if !(x.abs() <= 1.0) {
            if self.clip && !x.is_nan() {
                return self.big_f(x.clamp(-1.0, 1.0));
            }
            return Err(Error::SingularInput(x));
        }
        Ok(xlogx(1.0 + x) + xlogx(1.0 - x) - 0.5 * self.lambda * x * x)
    }

    /// `fⁿ(x)`, an odd polynomial of degree `2n+1`.
    pub fn f_n(&self, x: f64) -> f64 {
        let x2 = x * x;
        let mut acc = 0.0;
        for k in (0..=self.n).rev() {
            acc = acc * x2 + 1.0 / (2 * k + 1) as f64;
        }
        -2.0 * x * acc + self.lambda * x
    }

    /// `(fⁿ)'(x) = -2 Σ x^{2k} + λ`.
    pub fn f_n_derivative(&self, x: f64) -> f64 {
        let x2 = x * x;
        let mut acc = 0.0;
        for _ in 0..=self.n {
            acc = acc * x2 + 1.0;
        }
        -2.0 * acc + self.lambda
    }

    /// `Fⁿ(x)`, even, with `(Fⁿ)' = -fⁿ`.
    pub fn big_f_n(&self, x: f64) -> f64 {
        let x2 = x * x;
        let mut acc = 0.0;
        for k in (0..=self.n).rev() {
            acc = acc * x2 + 1.0 / ((2 * k + 2) * (2 * k + 1)) as f64;
        }
        2.0 * x2 * acc - 0.5 * self.lambda * x2
    }

    /// Right end of the window on which `f_δ = f`.
    #[inline]
    pub fn delta_window(&self) -> f64 {
        1.0 - 0.5 * self.delta
    }

    /// `f_δ`: equal to `f` on `[-w, w]`, `w = 1 - δ/2`, continued linearly outside.
    pub fn f_delta(&self, x: f64) -> f64 {
        let w = self.delta_window();
        if x.abs() <= w {
            // inside the window |x| < 1, so f is finite
            (-x).ln_1p() - x.ln_1p() + self.lambda * x
        } else {
            let edge = w.copysign(x);
            let value = (-edge).ln_1p() - edge.ln_1p() + self.lambda * edge;
            let slope = -2.0 / (1.0 - w * w) + self.lambda;
            value + slope * (x - edge)
        }
    }

    /// Global Lipschitz constant of `f_δ`.
    pub fn lipschitz_delta(&self) -> f64 {
        let w = self.delta_window();
        (self.lambda - 2.0)
            .abs()
            .max((self.lambda - 2.0 / (1.0 - w * w)).abs())
    }

    /// Pointwise drift selected by `kind`.
    pub fn drift(&self, kind: DriftKind, x: f64) -> f64 {
        match kind {
            DriftKind::Polynomial => self.f_n(x),
            DriftKind::Lipschitz => self.f_delta(x),
            DriftKind::Linear => self.lambda * x,
            DriftKind::None => 0.0,
        }
    }

    /// `sup_{|x| ≤ x_max} |d/dx drift(x)|`.
    pub fn drift_lipschitz(&self, kind: DriftKind, x_max: f64) -> f64 {
        match kind {
            DriftKind::Polynomial => {
                // -2Σx^{2k} is monotone in |x|; the sup sits at 0 or x_max
                self.f_n_derivative(x_max).abs().max(self.f_n_derivative(0.0).abs())
            }
            DriftKind::Lipschitz => self.lipschitz_delta(),
            DriftKind::Linear => self.lambda.abs(),
            DriftKind::None => 0.0,
        }
    }
}

/// Which nonlinearity the dynamics evaluate pointwise.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum DriftKind {
    /// `fⁿ`, the approximating system.
    Polynomial,
    /// `f_δ`, the Lipschitz truncation used for the control argument.
    Lipschitz,
    /// Only the `λx` part.
    Linear,
    /// Pure linear (Gaussian) dynamics.
    None,
}

#[inline]
fn xlogx(x: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x * x.ln()
    }
}

/// `U(h) = ∫ F(h(θ)) dθ` or `Uⁿ(h)` by the midpoint rule over grid samples.
///
/// In log mode a sample outside `[-1, 1]` yields `f64::INFINITY`, so that
/// `exp(-U)` is an exact zero weight.
pub fn potential_u(values: &[f64], spec: &PotentialSpec, mode: PotentialMode) -> f64 {
    let inv = 1.0 / values.len() as f64;
    match mode {
        PotentialMode::Poly => values.iter().map(|&x| spec.big_f_n(x)).sum::<f64>() * inv,
        PotentialMode::Log => {
            let mut acc = 0.0;
            for &x in values {
                if !(x.abs() <= 1.0) {
                    return f64::INFINITY;
                }
                acc += xlogx(1.0 + x) + xlogx(1.0 - x) - 0.5 * spec.lambda * x * x;
            }
            acc * inv
        }
    }
}

/// The physical double-logarithmic nonlinearity `ψ(u) = (θ/2)ln((1+u)/(1-u)) - θ_c u`.
///
/// With `λ = 2θ_c/θ` it satisfies `ψ(u) = -(θ/2) f(u)`.
pub fn map_psi(u: f64, theta: f64, theta_c: f64) -> Result<f64> {
    if !(u.abs() < 1.0) {
        return Err(Error::SingularInput(u));
    }
    if !(theta > 0.0) {
        return Err(Error::invalid(format!("temperature must be positive, got {theta}")));
    }
    Ok(0.5 * theta * (u.ln_1p() - (-u).ln_1p()) - theta_c * u)
}

/// `λ` that maps `ψ` onto the drift family: `λ = 2θ_c/θ`.
pub fn lambda_from_temperatures(theta: f64, theta_c: f64) -> f64 {
    2.0 * theta_c / theta
}
