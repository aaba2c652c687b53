//! Importance weighted least squares linear aggregation (IWA) of
//! vector-valued models under covariate shift, with the baselines,
//! density-ratio estimators, benchmark generators and experiment harness
//! needed to evaluate it.
//!
//! Given models `f₁,…,f_l`, labeled source data and unlabeled target inputs,
//! [`aggregation::iwa`] returns coefficients `c̃` such that `Σᵢ c̃ᵢ fᵢ`
//! approximates the least-squares-optimal linear combination on the target
//! domain.

pub mod aggregation;
pub mod datasets;
pub mod density_ratio;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod metrics;
pub mod models;
pub mod rng;
pub mod selection;

pub use error::{Error, Result};
pub use linalg::Matrix;
