//! Multi-discrete PPO: networks, policy, advantage estimation, updates and
//! checkpoints.

pub mod checkpoint;
pub mod nn;
pub mod policy;
pub mod ppo;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use checkpoint::{load_checkpoint, load_checkpoint_with_meta, save_checkpoint, save_checkpoint_with_meta, Tensor};
pub use nn::{Adam, Linear, Mlp};
pub use policy::{ActionSample, Normalizer, Policy};
pub use ppo::{gae, loss_and_grads, ppo_update, Batch, LossParts, PpoConfig, UpdateStats};

pub const HIDDEN: [usize; 2] = [256, 128];

#[derive(Debug, thiserror::Error)]
pub enum RlError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("non-finite {0}")]
    NonFinite(String),
    #[error("action {0:?} is outside the action space")]
    InvalidAction(Vec<usize>),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Policy plus both optimizers: everything needed to continue training.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainState {
    pub policy: Policy,
    pub adam_actor: Adam,
    pub adam_critic: Adam,
}

impl TrainState {
    pub fn new(obs_dim: usize, hidden: &[usize], heads: &[usize], cfg: &PpoConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let policy = Policy::new(obs_dim, hidden, heads, &mut rng);
        let adam_actor = Adam::new(&policy.actor, cfg.lr_actor);
        let adam_critic = Adam::new(&policy.critic, cfg.lr_critic);
        Self { policy, adam_actor, adam_critic }
    }

    pub fn update(&mut self, batch: &Batch, cfg: &PpoConfig) -> Result<UpdateStats, RlError> {
        ppo_update(&mut self.policy, &mut self.adam_actor, &mut self.adam_critic, batch, cfg)
    }
}
