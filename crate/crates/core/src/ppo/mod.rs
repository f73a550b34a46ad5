//! Proximal policy optimisation from scratch: tanh MLPs with hand-written
//! backpropagation, a diagonal Gaussian policy, GAE and a worker/learner loop.

pub mod gae;
pub mod mlp;
pub mod normalize;
pub mod policy;
pub mod train;
pub mod update;

use alloc::string::String;
use thiserror::Error;

pub use gae::compute_gae;
pub use mlp::Mlp;
pub use normalize::RunningNorm;
pub use policy::{policy_act, ActionDistribution, PolicyAction, PolicyNetwork, LOG_STD_MAX, LOG_STD_MIN};
pub use train::{
    collect_rollout, evaluate_policy, train, EnvStep, Environment, EpisodeSummary, MemorySink, MetricsRow,
    RngState, Rollout, RolloutRunner, SequentialRunner, TrainSink, Trainer, TrainerState, Worker,
};
pub use update::{loss_and_gradient, normalize_advantages, ppo_update, Adam, Batch, LossWeights, TrainerConfig, UpdateStats};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PpoError {
    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("observation contains a non-finite value")]
    NonFiniteObservation,
    #[error("non-finite gradient; update aborted (batch hash {batch_hash:016x})")]
    NonFiniteGradient { batch_hash: u64 },
    #[error("empty batch")]
    EmptyBatch,
    #[error("invalid trainer configuration: {0}")]
    InvalidConfig(&'static str),
    #[error("environment error: {0}")]
    Environment(String),
    #[error("artifact sink failed: {0}")]
    Sink(String),
}
