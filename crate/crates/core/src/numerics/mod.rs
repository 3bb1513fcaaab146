//! Special functions, ranks, least squares and IRLS.

pub mod glm;
pub mod linalg;
pub mod rank;
pub mod special;

use thiserror::Error;

pub use glm::{irls_glm, ols_fit, Family, GlmFit, IrlsOptions};
pub use linalg::{Matrix, Qr};
pub use rank::{midranks, tie_counts};
pub use special::{
    chisq_cdf, chisq_sf, f_cdf, f_sf, ln_gamma, normal_cdf, normal_sf, reg_incomplete_beta,
    reg_incomplete_gamma, reg_upper_incomplete_gamma, t_two_sided,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NumericsError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("design is rank deficient at column {column} ({name})")]
    RankDeficient { column: usize, name: String },
    #[error("invalid response {value} at row {index}")]
    InvalidResponse { index: usize, value: f64 },
    #[error("step halving exhausted at iteration {iteration}")]
    StepHalvingExhausted { iteration: usize },
    #[error("all responses are zero and the design has no intercept")]
    Boundary,
}
