//! The meta-learner: a categorical policy over per-group gradient-scaling
//! factors and learner hyperparameters, trained with REINFORCE on heldout
//! reward.

mod policy;
mod scaling;
mod spaces;
mod train;

use thiserror::Error;

use crate::learners::LearnerError;

pub use policy::{
    reinforce_gradient, reinforce_update, sample_actions, ActionDraw, ExploreSchedule, PolicyParams,
    Trajectory, TrajectoryStep,
};
pub use scaling::{
    lr_schedule, reference_transform_step, scale_gradients, scaled_sgd_step, LinearTransform,
    LossTransform, TransformStep,
};
pub use spaces::{ActionSpaces, HyperActionSpace, HyperChoice, LambdaActionSpace, DEFAULT_LAMBDA_GRID};
pub use train::{
    meta_train, plain_sgd, MetaEpochRecord, MetaPolicyConfig, RunRecord, StepEvent,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetaError {
    #[error("invalid action space: {0}")]
    InvalidSpace(String),
    #[error("expected {expected} gradient-scaling factors, got {got}")]
    GroupMismatch { expected: usize, got: usize },
    #[error("scaling factor {0} is not positive")]
    NonPositiveLambda(f64),
    #[error("learning rate {0} is not positive")]
    NonPositiveLearningRate(f64),
    #[error("update produced a non-finite parameter")]
    NonFiniteUpdate,
    #[error("exploration rounds carry no log-probabilities and cannot update the policy")]
    ExplorationTrajectory,
    #[error("transform derivative {0} is not positive")]
    NonPositiveDerivative(f64),
    #[error("meta-set has no D_train batches or empty evaluation splits")]
    EmptyMetaSet,
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error(transparent)]
    Learner(#[from] LearnerError),
}
