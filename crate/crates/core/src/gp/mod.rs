//! Exact Gaussian-process regression for scalar time series.

mod kernel;
mod optimize;
mod regression;

pub use kernel::{HyperKind, KernelSpec};
pub use optimize::{optimize_hyperparams, FittedHyperparameters, HyperBounds, OptimizeOptions};
pub use regression::{
    fit, fit_with_mean, log_marginal_likelihood, Prediction, PriorMean, TrainedGp, TrainingSet,
    JITTER_LADDER, NEGATIVE_VARIANCE_CLAMP,
};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GpError {
    #[error("invalid training set: {0}")]
    InvalidTrainingSet(String),
    #[error("kernel has non-finite hyperparameters")]
    InvalidKernel,
    #[error(
        "Cholesky factorization of the {n}x{n} Gram matrix failed (jitter up to {max_jitter:e})"
    )]
    FactorizationFailure { n: usize, max_jitter: f64 },
    #[error("posterior variance {value:e} at z = {z} is below the clamp threshold")]
    NegativeVariance { z: f64, value: f64 },
    #[error("non-finite posterior at z = {z}")]
    NonFinitePrediction { z: f64 },
    #[error("invalid optimizer options: {0}")]
    InvalidOptions(String),
    #[error("all {starts} optimizer starts failed (last error: {last})")]
    AllStartsFailed { starts: usize, last: String },
}
