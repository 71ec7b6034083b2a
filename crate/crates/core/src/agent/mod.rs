//! Discrete-action soft actor-critic for force-regulated pressing.
//!
//! The agent observes the end-effector position and chooses between one
//! step up and one step down in Z. Its reward is the mean pixel intensity of
//! the tactile frame after the move; exceeding the force limit ends the
//! episode with zero reward.

mod checkpoint;
mod env;
mod mlp;
mod replay;
mod sac;
mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use env::{EnvConfig, EnvObservation, ObsBounds, StepResult, TactileEnv};
pub use mlp::{Adam, ForwardCache, Mlp};
pub use replay::{ReplayBuffer, Transition};
pub use sac::{
    actor_loss_grad, alpha_loss_grad, critic_loss_grad, critic_targets, entropy, policy_distribution, polyak,
    softmax2, update_step, AgentModel, LossReport, SacConfig,
};
pub use train::{acquire_sequence, train, write_reward_trace, Acquisition, EpisodeRecord, TrainConfig};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sim::SimError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    Up,
    Down,
}

impl Action {
    pub const ALL: [Action; 2] = [Action::Up, Action::Down];

    pub fn index(self) -> usize {
        match self {
            Action::Up => 0,
            Action::Down => 1,
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum AgentError {
    #[error("invalid agent config: {0}")]
    InvalidConfig(String),
    #[error("non-finite {loss} loss ({value})")]
    NonFiniteLoss { loss: &'static str, value: f64 },
    #[error("no frame entered the force window [{lo}, {hi}] N within {steps} steps")]
    NoContact { lo: f64, hi: f64, steps: usize },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Sim(#[from] SimError),
}
