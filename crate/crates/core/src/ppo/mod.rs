//! Recurrent PPO with generalised advantage estimation and a privileged
//! critic, trained over freshly sampled tasks every batch.

pub mod adam;
pub mod gae;
pub mod loss;
pub mod rollout;
pub mod train;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use adam::Adam;
pub use gae::{compute_gae, normalize_advantages};
pub use loss::{clipped_surrogate, episode_loss, replay_log_probs, EpisodeLoss, LossParams, LossStats};
pub use rollout::{collect_episode, EpisodeRecord, RolloutBatch};
pub use train::{train, MetricsRow, TrainOptions, TrainOutput, Trainer, METRICS_HEADER};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub clip_eps: f64,
    pub gae_lambda: f64,
    pub epochs: usize,
    pub tasks_per_batch: usize,
    /// Minibatches per epoch; episodes are split evenly between them.
    pub minibatches: usize,
    pub total_env_steps: u64,
    pub entropy_weight: f64,
    pub max_grad_norm: f64,
    /// Truncated-BPTT sequence length in agent steps.
    pub bptt_chunk: usize,
    /// Checkpoint every this many batches (0 disables periodic saves).
    pub checkpoint_every: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            actor_lr: 3e-4,
            critic_lr: 1e-3,
            clip_eps: 0.2,
            gae_lambda: 0.95,
            epochs: 10,
            tasks_per_batch: 16,
            minibatches: 4,
            total_env_steps: 1_000_000,
            entropy_weight: 0.001,
            max_grad_norm: 0.5,
            bptt_chunk: 220,
            checkpoint_every: 10,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |path: &str, message: String| {
            Err(Error::Config {
                path: format!("train.{path}"),
                message,
            })
        };
        if !(self.clip_eps > 0.0 && self.clip_eps < 1.0) {
            return fail("clip_eps", format!("must lie in (0, 1), got {}", self.clip_eps));
        }
        if !(0.0..=1.0).contains(&self.gae_lambda) {
            return fail("gae_lambda", format!("must lie in [0, 1], got {}", self.gae_lambda));
        }
        if !(self.actor_lr > 0.0) || !(self.critic_lr > 0.0) {
            return fail("actor_lr", "learning rates must be positive".into());
        }
        if self.tasks_per_batch == 0 {
            return fail("tasks_per_batch", "must be positive".into());
        }
        if self.minibatches == 0 || self.minibatches > self.tasks_per_batch {
            return fail("minibatches", format!("must lie in [1, tasks_per_batch], got {}", self.minibatches));
        }
        if self.bptt_chunk == 0 {
            return fail("bptt_chunk", "must be positive".into());
        }
        if !(self.max_grad_norm > 0.0) {
            return fail("max_grad_norm", "must be positive".into());
        }
        if !(self.entropy_weight >= 0.0) {
            return fail("entropy_weight", "must be non-negative".into());
        }
        Ok(())
    }
}
