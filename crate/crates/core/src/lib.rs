//! Spectral simulation of the stochastic Cahn–Hilliard equation with a
//! double-logarithmic potential on `(0, 1)` with Neumann boundary conditions,
//! together with the measure-theoretic diagnostics built on top of it.
//!
//! Fields are cosine expansions `h = Σ c_i e_i` with `e_0 = 1`,
//! `e_i = √2 cos(iπθ)`, and the linear operator acts diagonally with
//! eigenvalues `-a_i = -(iπ)²`.

// NaN must fail the range checks, which `!(x > 0.0)` expresses directly
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod dynamics;
pub mod ensemble;
pub mod error;
pub mod experiments;
pub mod gaussian;
pub mod measures;
pub mod potential;
pub mod report;
pub mod spectral;
pub mod stats;

pub use dynamics::{simulate, simulate_pair, step, SolverConfig, TrajectoryDiagnostics};
pub use error::{Error, Result};
pub use gaussian::NoiseStream;
pub use measures::{MeasureKind, MeasureSample, Observable};
pub use potential::{DriftKind, PotentialSpec};
pub use spectral::{GridField, SpectralField};
