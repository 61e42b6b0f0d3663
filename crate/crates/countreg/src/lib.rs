//! Maximum-likelihood count regression over a plain design matrix: Poisson
//! and negative binomial (NB2) cores, zero-inflated, hurdle, and truncated
//! variants, model-based and cluster-robust covariance, and a selection
//! protocol that walks overdispersion, zero-inflation, and fit comparisons
//! to a single recommended family.

use thiserror::Error;

pub mod data;
pub mod family;
pub mod fit;
pub mod infer;
mod optim;
pub mod select;

pub use data::Dataset;
pub use family::Family;
pub use fit::{coef_table, fit, CoefRow, FitOptions, FitResult};
pub use infer::{
    aic, clustered_cov, clustered_se, lrt_overdispersion, stars, vuong, LrtResult, VuongResult,
};
pub use select::{select_model, SelectionResult};

#[derive(Debug, Error)]
pub enum RegressionError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("numerical failure: {0}")]
    Numerical(String),
}

pub type Result<T> = std::result::Result<T, RegressionError>;
