//! Base classifiers for the two views and their evaluation.
//!
//! Labels are `bool`, `true` meaning the positive (high) class.

mod forest;
mod logreg;
mod metrics;
mod model_io;

use thiserror::Error;

use crate::features::FeatureVector;

pub use forest::{fit_forest, fit_forest_with, mix_seed, Execution, ForestModel, ForestParams, Node, Tree};
pub use logreg::{
    fit_logreg, fit_logreg_traced, objective, objective_gradient, sigmoid, LogRegFit, LogRegModel, LogRegParams,
};
pub use metrics::{evaluate, ClassMetrics, EvalReport};

#[derive(Debug, Error)]
pub enum LearnError {
    #[error("degenerate labels: both classes are required")]
    DegenerateLabels,
    #[error("need at least {required} samples, got {got}")]
    TooFewSamples { required: usize, got: usize },
    #[error("{features} feature vectors but {labels} labels")]
    LengthMismatch { features: usize, labels: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid parameter: {0}")]
    InvalidParams(String),
    #[error("model file line {line}: {message}")]
    ModelFile { line: usize, message: String },
}

/// Shared preconditions of the fitters. Returns the common dimension.
fn check_training_set(x: &[FeatureVector], y: &[bool]) -> Result<usize, LearnError> {
    if x.len() != y.len() {
        return Err(LearnError::LengthMismatch { features: x.len(), labels: y.len() });
    }
    if x.len() < 2 {
        return Err(LearnError::TooFewSamples { required: 2, got: x.len() });
    }
    let dimension = x[0].dimension();
    if let Some(bad) = x.iter().find(|v| v.dimension() != dimension) {
        return Err(LearnError::DimensionMismatch { expected: dimension, got: bad.dimension() });
    }
    let positives = y.iter().filter(|b| **b).count();
    if positives == 0 || positives == y.len() {
        return Err(LearnError::DegenerateLabels);
    }
    Ok(dimension)
}
