//! Conservative noise `B dW` (covariance `BB* = -A`), the exact stochastic
//! convolution of the linear fourth-order semigroup, and samplers for the
//! reference Gaussian measure `μ_c = N(c e_0, (-A)^{-1})`.
//!
//! Randomness is counter based: a [`NoiseStream`] is a `(master_seed,
//! stream_id, counter)` triple, and the normals for one counter value are a
//! pure function of the triple. Ensembles therefore give bit-identical
//! results regardless of how work is scheduled.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::{apply_heat_semigroup, eigenvalue, SpectralField};

/// log2 of the number of 32-bit words reserved for one counter value.
const BLOCK_SHIFT: u32 = 32;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct NoiseStream {
    pub master_seed: u64,
    pub stream_id: u64,
    pub counter: u64,
}

impl NoiseStream {
    pub fn new(master_seed: u64, stream_id: u64) -> Self {
        Self {
            master_seed,
            stream_id,
            counter: 0,
        }
    }

    /// Independent stream derived from this one; depends only on `(stream_id, index)`.
    pub fn child(&self, index: u64) -> Self {
        Self {
            master_seed: self.master_seed,
            stream_id: splitmix64(self.stream_id ^ splitmix64(index.wrapping_add(0x632b_e59b_d9b4_e019))),
            counter: 0,
        }
    }

    /// Fill `out` with standard normals for the current counter, then advance it.
    pub fn fill_normals(&mut self, out: &mut [f64]) {
        let mut rng = ChaCha8Rng::seed_from_u64(self.master_seed);
        rng.set_stream(self.stream_id);
        rng.set_word_pos((self.counter as u128) << BLOCK_SHIFT);
        for z in out.iter_mut() {
            *z = StandardNormal.sample(&mut rng);
        }
        self.counter += 1;
    }
}

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Per-mode standard deviation of `B ΔW` over a step `dt`: `√(a_i dt)`.
pub fn noise_std(modes: usize, dt: f64) -> Vec<f64> {
    (0..=modes).map(|i| (eigenvalue(i) * dt).sqrt()).collect()
}

/// Per-mode standard deviation of `∫_0^dt e^{-(dt-s)A²/2} B dW_s`:
/// variance `(1 - e^{-a_i² dt})/a_i`, zero on the mean.
pub fn convolution_std(modes: usize, dt: f64) -> Vec<f64> {
    (0..=modes)
        .map(|i| {
            if i == 0 {
                0.0
            } else {
                let a = eigenvalue(i);
                (-(-a * a * dt).exp_m1() / a).sqrt()
            }
        })
        .collect()
}

/// Per-mode standard deviation under `μ_c`: `1/√a_i`, zero on the mean.
pub fn stationary_std(modes: usize) -> Vec<f64> {
    (0..=modes)
        .map(|i| if i == 0 { 0.0 } else { eigenvalue(i).sqrt().recip() })
        .collect()
}

fn scaled_draw(stream: &mut NoiseStream, std: &[f64]) -> SpectralField {
    let mut z = vec![0.0; std.len()];
    stream.fill_normals(&mut z);
    for (zi, s) in z.iter_mut().zip(std) {
        *zi *= s;
    }
    // mode 0 has zero standard deviation; make it an exact zero
    z[0] = 0.0;
    SpectralField::from_vec(z)
}

/// `B ΔW` over one step: mode `i ~ N(0, a_i dt)`, mode 0 identically zero.
pub fn noise_increment(stream: &mut NoiseStream, dt: f64, modes: usize) -> Result<SpectralField> {
    positive(dt)?;
    Ok(scaled_draw(stream, &noise_std(modes, dt)))
}

/// Exact one-step stochastic convolution.
pub fn convolution_increment(
    stream: &mut NoiseStream,
    dt: f64,
    modes: usize,
) -> Result<SpectralField> {
    positive(dt)?;
    Ok(scaled_draw(stream, &convolution_std(modes, dt)))
}

/// Draw from `μ_c = N(c e_0, (-A)^{-1})` truncated at `modes`.
pub fn sample_mu_c(stream: &mut NoiseStream, c: f64, modes: usize) -> Result<SpectralField> {
    if modes == 0 {
        return Err(Error::invalid("sampling μ_c needs at least one mode"));
    }
    let mut h = scaled_draw(stream, &stationary_std(modes));
    h.coeffs_mut()[0] = c;
    Ok(h)
}

/// One exact step of the linear equation: `e^{-dt A²/2} x` plus a convolution increment.
pub fn linear_solution_step(
    x: &SpectralField,
    stream: &mut NoiseStream,
    dt: f64,
) -> Result<SpectralField> {
    positive(dt)?;
    let drift = apply_heat_semigroup(x, dt)?;
    let noise = convolution_increment(stream, dt, x.modes())?;
    Ok(drift.add(&noise))
}

fn positive(dt: f64) -> Result<()> {
    if dt > 0.0 && dt.is_finite() {
        Ok(())
    } else {
        Err(Error::NonPositiveTime(dt))
    }
}
