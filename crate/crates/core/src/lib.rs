//! Constrained soft actor-critic with softmax-normalized Lagrange multipliers.
//!
//! Desired behavior is stated as a set of indicator events with target rates.
//! [`sac::SacLagrangian`] learns one critic head per event plus the reward and
//! adapts a [`multipliers::MultiplierBank`] from recent event frequencies.
//! [`baseline`] holds the fixed-penalty alternative.

pub mod baseline;
pub mod cmdp;
pub mod error;
pub mod multipliers;
pub mod numcore;
pub mod replay;
pub mod sac;
pub mod scalar;

pub use cmdp::{ConstraintKind, ConstraintSpec, Environment, StepOutcome, TaskSpec};
pub use error::{Error, Result};
pub use multipliers::{Lambdas, MultiplierConfig, MultiplierMode};
pub use scalar::Scalar;

pub type Matrix = numcore::Matrix<f64>;
pub type DenseNet = numcore::DenseNet<f64>;
pub type MultiplierBank = multipliers::MultiplierBank<f64>;
pub type DenseNet32 = numcore::DenseNet<f32>;
pub type MultiplierBank32 = multipliers::MultiplierBank<f32>;
