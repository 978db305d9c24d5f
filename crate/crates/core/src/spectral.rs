//! Neumann cosine basis on [0, 1].
//!
//! Fields are stored as coefficients in the orthonormal eigenbasis of the
//! Neumann Laplacian `A`:
//!
//! ```text
//! e_0(θ) = 1,   e_i(θ) = √2 cos(iπθ),   A e_i = -a_i e_i,   a_i = (iπ)²
//! ```
//!
//! so the spatial mean of a field is exactly its zeroth coefficient. Pointwise
//! work happens on the uniform midpoint grid `θ_j = (j + ½)/P`, where the
//! cosine system is discretely orthonormal for modes `0..P`.

use std::f64::consts::{PI, SQRT_2};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Eigenvalue `a_i = (iπ)²` of `-A` for mode `i`.
#[inline]
pub fn eigenvalue(i: usize) -> f64 {
    let k = i as f64 * PI;
    k * k
}

/// Basis function `e_i` evaluated at `theta`.
#[inline]
pub fn basis(i: usize, theta: f64) -> f64 {
    if i == 0 {
        1.0
    } else {
        SQRT_2 * (i as f64 * PI * theta).cos()
    }
}

/// Midpoint grid node `θ_j = (j + ½)/P`.
#[inline]
pub fn midpoint(j: usize, points: usize) -> f64 {
    (j as f64 + 0.5) / points as f64
}

/// Smallest grid that keeps quadratic products of an `modes`-mode field alias free.
#[inline]
pub fn dealiased_grid(modes: usize) -> usize {
    2 * (modes + 1)
}

/// A field represented by its coefficients `c_0..=c_M` in the cosine eigenbasis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectralField {
    coeffs: Vec<f64>,
}

impl SpectralField {
    pub fn new(coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.is_empty() {
            return Err(Error::invalid("a spectral field needs at least the mean coefficient"));
        }
        if let Some(bad) = coeffs.iter().find(|c| !c.is_finite()) {
            return Err(Error::invalid(format!("non-finite coefficient {bad}")));
        }
        Ok(Self { coeffs })
    }

    /// Unchecked constructor for internal hot paths.
    pub(crate) fn from_vec(coeffs: Vec<f64>) -> Self {
        debug_assert!(!coeffs.is_empty());
        Self { coeffs }
    }

    pub fn zeros(modes: usize) -> Self {
        Self {
            coeffs: vec![0.0; modes + 1],
        }
    }

    pub fn constant(value: f64, modes: usize) -> Self {
        let mut h = Self::zeros(modes);
        h.coeffs[0] = value;
        h
    }

    /// The single basis vector `e_i` truncated at `modes`.
    pub fn basis_vector(i: usize, modes: usize) -> Self {
        let mut h = Self::zeros(modes.max(i));
        h.coeffs[i] = 1.0;
        h
    }

    /// Truncation order `M` (number of nonconstant modes).
    #[inline]
    pub fn modes(&self) -> usize {
        self.coeffs.len() - 1
    }

    #[inline]
    pub fn mean(&self) -> f64 {
        self.coeffs[0]
    }

    #[inline]
    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    #[inline]
    pub fn coeffs_mut(&mut self) -> &mut [f64] {
        &mut self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<f64> {
        self.coeffs
    }

    pub fn is_finite(&self) -> bool {
        self.coeffs.iter().all(|c| c.is_finite())
    }

    /// Same field with `modes` nonconstant modes: truncated or zero padded.
    pub fn resized(&self, modes: usize) -> Self {
        let mut coeffs = vec![0.0; modes + 1];
        let n = coeffs.len().min(self.coeffs.len());
        coeffs[..n].copy_from_slice(&self.coeffs[..n]);
        Self { coeffs }
    }

    /// Value at a single point by direct cosine summation.
    pub fn eval(&self, theta: f64) -> f64 {
        self.coeffs
            .iter()
            .enumerate()
            .map(|(i, c)| c * basis(i, theta))
            .sum()
    }

    pub fn add(&self, other: &Self) -> Self {
        let modes = self.modes().max(other.modes());
        let mut out = self.resized(modes);
        for (o, c) in out.coeffs.iter_mut().zip(&other.coeffs) {
            *o += c;
        }
        out
    }

    pub fn sub(&self, other: &Self) -> Self {
        let modes = self.modes().max(other.modes());
        let mut out = self.resized(modes);
        for (o, c) in out.coeffs.iter_mut().zip(&other.coeffs) {
            *o -= c;
        }
        out
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            coeffs: self.coeffs.iter().map(|c| c * s).collect(),
        }
    }

    /// The field with its mean removed.
    pub fn fluctuation(&self) -> Self {
        let mut out = self.clone();
        out.coeffs[0] = 0.0;
        out
    }
}

/// Samples of a field on the midpoint grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridField {
    values: Vec<f64>,
}

impl GridField {
    pub fn new(values: Vec<f64>) -> Self {
        Self { values }
    }

    pub fn from_fn(points: usize, f: impl Fn(f64) -> f64) -> Self {
        Self {
            values: (0..points).map(|j| f(midpoint(j, points))).collect(),
        }
    }

    #[inline]
    pub fn points(&self) -> usize {
        self.values.len()
    }

    #[inline]
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Midpoint-rule integral over [0, 1].
    pub fn integral(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    /// Midpoint-rule L² inner product.
    pub fn inner(&self, other: &GridField) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a * b)
            .sum::<f64>()
            / self.values.len() as f64
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }
}

/// Cached cosine table for repeated synthesis/analysis at fixed `(M, P)`.
#[derive(Clone, Debug)]
pub struct CosineTransform {
    modes: usize,
    points: usize,
    // row i holds e_i(θ_j), j = 0..P
    table: Vec<f64>,
}

impl CosineTransform {
    pub fn new(modes: usize, points: usize) -> Result<Self> {
        if points < modes + 1 {
            return Err(Error::GridTooSmall {
                points,
                modes,
                required: modes + 1,
            });
        }
        let mut table = Vec::with_capacity((modes + 1) * points);
        for i in 0..=modes {
            for j in 0..points {
                table.push(basis(i, midpoint(j, points)));
            }
        }
        Ok(Self {
            modes,
            points,
            table,
        })
    }

    #[inline]
    pub fn modes(&self) -> usize {
        self.modes
    }

    #[inline]
    pub fn points(&self) -> usize {
        self.points
    }

    /// `out[j] = Σ_i coeffs[i] e_i(θ_j)`; `coeffs` may be shorter than `M + 1`.
    pub fn synthesize_into(&self, coeffs: &[f64], out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.points);
        out.fill(0.0);
        for (row, &c) in self.table.chunks_exact(self.points).zip(coeffs) {
            if c == 0.0 {
                continue;
            }
            for (o, e) in out.iter_mut().zip(row) {
                *o += c * e;
            }
        }
    }

    /// `out[i] = (1/P) Σ_j values[j] e_i(θ_j)` for `i = 0..out.len()`.
    pub fn analyze_into(&self, values: &[f64], out: &mut [f64]) {
        debug_assert_eq!(values.len(), self.points);
        let inv = 1.0 / self.points as f64;
        for (o, row) in out.iter_mut().zip(self.table.chunks_exact(self.points)) {
            *o = row.iter().zip(values).map(|(e, v)| e * v).sum::<f64>() * inv;
        }
    }

    pub fn synthesize(&self, h: &SpectralField) -> GridField {
        let mut values = vec![0.0; self.points];
        let n = h.coeffs().len().min(self.modes + 1);
        self.synthesize_into(&h.coeffs()[..n], &mut values);
        GridField { values }
    }

    pub fn analyze(&self, g: &GridField) -> SpectralField {
        let mut coeffs = vec![0.0; self.modes + 1];
        self.analyze_into(g.values(), &mut coeffs);
        SpectralField { coeffs }
    }
}

/// Cosine synthesis of `h` on a `points`-node midpoint grid.
pub fn synthesize(h: &SpectralField, points: usize) -> Result<GridField> {
    Ok(CosineTransform::new(h.modes(), points)?.synthesize(h))
}

/// Discrete cosine analysis of `g` keeping modes `0..=modes`.
pub fn analyze(g: &GridField, modes: usize) -> Result<SpectralField> {
    Ok(CosineTransform::new(modes, g.points())?.analyze(g))
}

/// `(Ah)_i = -a_i c_i`.
pub fn apply_a(h: &SpectralField) -> SpectralField {
    SpectralField {
        coeffs: h
            .coeffs
            .iter()
            .enumerate()
            .map(|(i, c)| -eigenvalue(i) * c)
            .collect(),
    }
}

/// `(-A)^γ` on the mean-zero part; the mean passes through unchanged.
pub fn apply_a_power(h: &SpectralField, gamma: f64) -> SpectralField {
    SpectralField {
        coeffs: h
            .coeffs
            .iter()
            .enumerate()
            .map(|(i, c)| if i == 0 { *c } else { eigenvalue(i).powf(gamma) * c })
            .collect(),
    }
}

/// `(h, g)_γ = Σ_{i≥1} a_i^γ h_i g_i`.
pub fn inner_product(h: &SpectralField, g: &SpectralField, gamma: f64) -> f64 {
    h.coeffs
        .iter()
        .zip(&g.coeffs)
        .enumerate()
        .skip(1)
        .map(|(i, (a, b))| eigenvalue(i).powf(gamma) * a * b)
        .sum()
}

/// Seminorm `|h|_γ`.
pub fn seminorm(h: &SpectralField, gamma: f64) -> f64 {
    inner_product(h, h, gamma).sqrt()
}

/// Norm `‖h‖_γ = (|h|_γ² + h̄²)^{1/2}`.
pub fn norm(h: &SpectralField, gamma: f64) -> f64 {
    (inner_product(h, h, gamma) + h.mean() * h.mean()).sqrt()
}

/// `|h - g|_{-1}`, the metric of the energy space `H`.
pub fn distance_minus1(h: &SpectralField, g: &SpectralField) -> f64 {
    let n = h.coeffs.len().max(g.coeffs.len());
    let get = |v: &[f64], i: usize| v.get(i).copied().unwrap_or(0.0);
    (1..n)
        .map(|i| {
            let d = get(&h.coeffs, i) - get(&g.coeffs, i);
            d * d / eigenvalue(i)
        })
        .sum::<f64>()
        .sqrt()
}

/// Weight of mode `i` in the regularizer `Q_N`: `(N - i + 1)/N` for `i ≤ N`, else 0.
///
/// The literal `1/N` prefactor makes `w_0 = (N + 1)/N`.
#[inline]
pub fn q_n_weight(i: usize, order: usize) -> f64 {
    if i > order {
        0.0
    } else {
        (order - i + 1) as f64 / order as f64
    }
}

pub fn q_n(h: &SpectralField, order: usize) -> Result<SpectralField> {
    if order == 0 {
        return Err(Error::invalid("regularizer order N must be at least 1"));
    }
    Ok(SpectralField {
        coeffs: h
            .coeffs
            .iter()
            .enumerate()
            .map(|(i, c)| q_n_weight(i, order) * c)
            .collect(),
    })
}

/// `e^{-tA²/2} h`: mode `i` scaled by `exp(-a_i² t/2)`, mean fixed.
pub fn apply_heat_semigroup(h: &SpectralField, t: f64) -> Result<SpectralField> {
    if t < 0.0 || t.is_nan() {
        return Err(Error::NegativeTime(t));
    }
    Ok(SpectralField {
        coeffs: h
            .coeffs
            .iter()
            .enumerate()
            .map(|(i, c)| {
                let a = eigenvalue(i);
                (-0.5 * a * a * t).exp() * c
            })
            .collect(),
    })
}

/// `s_M(t) = Σ_{i=1}^M a_i e^{-a_i² t/2}`, the majorant of `‖A e^{-tA²/2}‖` on `C([0,1])`.
pub fn smoothing_sum(t: f64, modes: usize) -> Result<f64> {
    if t <= 0.0 || t.is_nan() {
        return Err(Error::NonPositiveTime(t));
    }
    Ok((1..=modes)
        .map(|i| {
            let a = eigenvalue(i);
            a * (-0.5 * a * a * t).exp()
        })
        .sum())
}
