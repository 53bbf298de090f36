//! Multi-agent actor-critic with an influence-weighted joint critic.

mod embed;
mod influence;
mod ppo;
mod trainer;

pub use embed::{EmbedPass, NodeEmbedder, ObsLayout, DENSITY_SCALE, EDGE_FEATURES, QUEUE_SCALE};
pub use influence::{aggregate, aggregate_backward, fit_influence, normalize_scores, pretrain_ehh, InfluenceModule, PretrainConfig, PretrainReport};
pub use ppo::{actor_step, advantages, clipped_logit_grad, clipped_objective, critic_loss_grad, critic_step, discounted_returns, softmax, PROB_FLOOR};
pub use trainer::{
    evaluate_policy, evaluate_with, evaluation_seed, training_seed, write_curve_csv, Checkpoint, CriticMode, CurveRow, EpisodeSummary, OptimizerKind, Policy, Trainer,
    TrainerConfig,
};
