//! Learner models `f(X; θ)` with per-layer parameter groups.

pub mod checkpoint;
mod dual;
mod gru;
mod mlp;
mod models;

use rand::Rng;
use thiserror::Error;

use crate::numcore::{NumError, Tensor};
use crate::objectives::ObjectiveError;

pub use dual::{AffinityDecoderSpec, AttributeEncoderSpec, DualAffinityNet, DualEncoderSpec, GruShape};
pub use gru::{gru_step, GruCell, GruCellParams, GruStep};
pub use mlp::{Activation, Mlp, MlpSpec};
pub use models::{
    build_learner, count_groups, DirectLearner, DualAffinityClassifier, DualSettings, Evaluation,
    Learner, LearnerConfig, LearnerKind, MlpClassifier, MlpRanker,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LearnerError {
    #[error("invalid model spec: {0}")]
    Spec(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("learner does not accept this batch: {0}")]
    WrongBatch(String),
    #[error(transparent)]
    Numeric(#[from] NumError),
    #[error(transparent)]
    Objective(#[from] ObjectiveError),
}

/// Uniform initialisation in `±sqrt(6 / (fan_in + fan_out))` for a
/// `[rows, cols]` matrix.
pub fn glorot(rng: &mut impl Rng, rows: usize, cols: usize) -> Tensor {
    let bound = (6.0 / (rows + cols) as f64).sqrt();
    let values = (0..rows * cols)
        .map(|_| rng.random_range(-bound..bound))
        .collect();
    Tensor::matrix(rows, cols, values).expect("rows * cols values")
}
