//! Drivers turning the qualitative results into measurable checks.

pub mod control;
pub mod energy;
pub mod mixing;
pub mod reflection;
pub mod semigroup;
pub mod stationary;

pub use control::{build_control, control_residual, steering_check, Control, SteeringReport};
pub use energy::{energy_balance, EnergyReport};
pub use mixing::{mixing_estimate, MixingReport};
pub use reflection::{reflection_profile, ReflectionEstimate};
pub use semigroup::{semigroup_convergence, strong_feller_bound, strong_feller_check, SemigroupReport, StrongFellerReport};
pub use stationary::{linear_covariance, stationary_average, ModeVariance, TimeAverageReport};
