//! One-shot Bayesian federated inference for generalized linear models.
//!
//! Each center fits a MAP estimate with a Gaussian prior and ships the
//! estimate together with its curvature. A coordinator combines those into
//! an approximation of the posterior it would have obtained from the pooled
//! data, without ever seeing individual records.

pub mod aggregate;
pub mod error;
pub mod federation;
pub mod fit;
pub mod glm;
pub mod linalg;
pub mod normal;
pub mod sim;

pub use aggregate::{
    aggregate, aggregate_nuisance, compatibility_check, credible_intervals, BfiResult, CompatibilityReport,
    CompatibilityInterval, NuisanceBfiResult,
};
pub use error::{BfiError, Result};
pub use fit::{fit_map, fit_map_blocked, log_posterior, BlockSplit, BlockedFitResult, FitConfig, LocalFitResult};
pub use glm::{Dataset, Family, GaussianPrior, ModelSpec};
pub use linalg::{chol_factor, spd_inverse, spd_solve, CholeskyFactor, RectMatrix, SymMatrix};
pub use normal::normal_quantile;
