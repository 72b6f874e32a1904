//! Time-varying coefficient stratified Cox models.
//!
//! Each coefficient is expanded as `beta_p(t) = theta_p' B(t)` on a B-spline
//! basis and the stratified log-partial likelihood is maximized by a
//! block-wise MM steepest ascent ([`optimizers::mmsa_fit`]) or one of the
//! comparison optimizers. [`inference`] tests each coefficient for time
//! variation and builds pointwise confidence bands; [`simulate`] generates
//! the synthetic benchmark scenarios.

pub mod cli;
pub mod data;
pub mod error;
pub mod inference;
pub mod likelihood;
pub mod linalg;
pub mod optimizers;
pub mod simulate;
pub mod spline;

pub use data::{Standardization, SurvivalDataset};
pub use error::{Error, Result};
pub use likelihood::{CoefficientMatrix, CoxKernel};
pub use optimizers::{FitProblem, FitResult, MmsaConfig, Optimizer};
pub use spline::SplineSpec;
