//! Dense actor-critic networks, PPO and the adversarial trainers.

mod mlp;
mod ppo;
mod train;

pub use mlp::{select_rows, stack_rows, Adam, ForwardCache, Mlp};
pub use ppo::{
    batch_values, gae, log_prob, loss_gradients, ppo_update, Batch, GaussianPolicy, Learner, LossGradients,
    PpoConfig, PpoStats,
    LOG_STD_MAX, LOG_STD_MIN,
};
pub use train::{seeded_rng, train, AgentParams, Checkpoint, CurveRow, TrainConfig, TrainReport, TrainerKind};
