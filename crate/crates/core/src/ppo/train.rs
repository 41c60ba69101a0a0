//! The offline meta-training loop.

use std::path::PathBuf;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::adam::Adam;
use super::gae::{compute_gae, normalize_advantages};
use super::loss::{episode_loss, replay_log_probs, LossParams, LossStats};
use super::rollout::{collect_episode, RolloutBatch};
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::io::write_csv;
use crate::nn::{ActorNet, Checkpoint, CriticNet, Parameterized};

pub const METRICS_HEADER: [&str; 7] = [
    "batch",
    "env_steps",
    "mean_ep_cost",
    "policy_loss",
    "value_loss",
    "entropy",
    "grad_norm",
];

pub const CHECKPOINT_FILE: &str = "checkpoint.json";
pub const METRICS_FILE: &str = "metrics.csv";

/// Largest tolerated gap between stored and replayed log-probabilities.
pub const REPLAY_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsRow {
    pub batch: usize,
    pub env_steps: u64,
    pub mean_ep_cost: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub grad_norm: f64,
}

/// Called with each completed batch's metrics row.
pub type BatchCallback<'a> = Box<dyn Fn(&MetricsRow) + Send + Sync + 'a>;

#[derive(Default)]
pub struct TrainOptions<'a> {
    /// Directory receiving `checkpoint.json` and `metrics.csv`.
    pub out_dir: Option<PathBuf>,
    /// Rayon worker threads; results do not depend on this.
    pub workers: usize,
    /// Start from these networks instead of a fresh initialisation.
    pub init: Option<(ActorNet, CriticNet)>,
    pub on_batch: Option<BatchCallback<'a>>,
}

#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub actor: ActorNet,
    pub critic: CriticNet,
    pub metrics: Vec<MetricsRow>,
    pub lr_halvings: usize,
    pub max_replay_error: f64,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct UpdateStats {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub grad_norm: f64,
    pub replay_error: f64,
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Seed of the random stream owned by one stream index under a base seed.
pub fn stream_seed(base: u64, index: u64) -> u64 {
    splitmix64(base ^ splitmix64(index))
}

#[derive(Debug, Clone)]
pub struct Trainer {
    cfg: RunConfig,
    pub actor: ActorNet,
    pub critic: CriticNet,
    actor_opt: Adam,
    critic_opt: Adam,
    shuffle_rng: ChaCha8Rng,
    batch: usize,
    env_steps: u64,
    episodes: u64,
    lr_halvings: usize,
    max_replay_error: f64,
}

impl Trainer {
    pub fn new(cfg: &RunConfig, init: Option<(ActorNet, CriticNet)>) -> Result<Self> {
        cfg.validate()?;
        let seed = cfg.train.seed;
        let (actor, critic) = match init {
            Some((a, c)) => {
                a.check_config(&cfg.network)?;
                c.check_config(&cfg.network)?;
                (a, c)
            }
            None => {
                let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(seed, u64::MAX));
                let actor = ActorNet::new(&cfg.network, &mut rng);
                let critic = CriticNet::new(&cfg.network, &mut rng);
                (actor, critic)
            }
        };
        Ok(Self {
            cfg: cfg.clone(),
            actor,
            critic,
            actor_opt: Adam::new(cfg.train.actor_lr),
            critic_opt: Adam::new(cfg.train.critic_lr),
            shuffle_rng: ChaCha8Rng::seed_from_u64(stream_seed(seed, u64::MAX - 1)),
            batch: 0,
            env_steps: 0,
            episodes: 0,
            lr_halvings: 0,
            max_replay_error: 0.0,
        })
    }

    pub fn config(&self) -> &RunConfig {
        &self.cfg
    }

    pub fn env_steps(&self) -> u64 {
        self.env_steps
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint::new(&self.cfg, &self.actor, &self.critic)
    }

    /// Samples one fresh task per episode and rolls the stochastic policy
    /// out on each, in parallel. Each episode owns a random stream derived
    /// from the run seed and its global episode index.
    pub fn collect_batch(&mut self) -> Result<RolloutBatch> {
        let n = self.cfg.train.tasks_per_batch as u64;
        let first = self.episodes;
        let (actor, critic, cfg) = (&self.actor, &self.critic, &self.cfg);
        let episodes = (first..first + n)
            .into_par_iter()
            .map(|idx| {
                let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(cfg.train.seed, idx));
                let task = cfg.tasks.sample(&mut rng);
                collect_episode(actor, critic, task, &cfg.episode, cfg.train.bptt_chunk, &mut rng)
            })
            .collect::<Result<Vec<_>>>()?;
        self.episodes += n;
        let batch = RolloutBatch { episodes };
        self.env_steps += batch.steps() as u64;
        Ok(batch)
    }

    /// Largest deviation between stored log-probabilities and those
    /// recomputed by replaying each stored sequence.
    pub fn replay_error(&self, batch: &RolloutBatch) -> f64 {
        batch
            .episodes
            .par_iter()
            .map(|ep| {
                replay_log_probs(&self.actor, ep)
                    .iter()
                    .zip(&ep.log_probs)
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max)
            })
            .collect::<Vec<_>>()
            .into_iter()
            .fold(0.0, f64::max)
    }

    /// Runs the PPO epochs over one batch.
    pub fn update(&mut self, batch: &RolloutBatch) -> Result<UpdateStats> {
        let tc = self.cfg.train.clone();
        let gamma = self.cfg.episode.gamma;

        let replay_error = self.replay_error(batch);
        self.max_replay_error = self.max_replay_error.max(replay_error);
        if !(replay_error <= REPLAY_TOLERANCE) {
            return Err(Error::Diverged(format!(
                "hidden-state replay mismatch: stored and replayed log-probs differ by {replay_error:e}"
            )));
        }

        let mut advantages = Vec::with_capacity(batch.episodes.len());
        let mut returns = Vec::with_capacity(batch.episodes.len());
        for ep in &batch.episodes {
            let (a, r) = compute_gae(&ep.costs, &ep.values, ep.terminal_value, gamma, tc.gae_lambda)?;
            advantages.push(a);
            returns.push(r);
        }
        let mut flat: Vec<f64> = advantages.concat();
        normalize_advantages(&mut flat);
        let mut offset = 0;
        for a in advantages.iter_mut() {
            let n = a.len();
            a.copy_from_slice(&flat[offset..offset + n]);
            offset += n;
        }

        let params = LossParams {
            clip_eps: tc.clip_eps,
            entropy_weight: tc.entropy_weight,
        };
        let mut order: Vec<usize> = (0..batch.episodes.len()).collect();
        let mut totals = UpdateStats {
            replay_error,
            ..UpdateStats::default()
        };
        let mut updates = 0usize;
        for _epoch in 0..tc.epochs {
            order.shuffle(&mut self.shuffle_rng);
            for mb in split_even(&order, tc.minibatches) {
                let steps: usize = mb.iter().map(|&i| batch.episodes[i].len()).sum();
                if steps == 0 {
                    continue;
                }
                let weight = 1.0 / steps as f64;
                let (actor, critic) = (&self.actor, &self.critic);
                let parts = mb
                    .par_iter()
                    .map(|&i| {
                        episode_loss(actor, critic, &batch.episodes[i], &advantages[i], &returns[i], params, weight)
                    })
                    .collect::<Result<Vec<_>>>()?;

                let mut actor_grad = self.actor.zeros_like();
                let mut critic_grad = self.critic.zeros_like();
                let mut stats = LossStats::default();
                for p in &parts {
                    actor_grad.accumulate(&p.actor_grad);
                    critic_grad.accumulate(&p.critic_grad);
                    stats.merge(&p.stats);
                }
                if stats.nonfinite * 100 > stats.samples {
                    return Err(Error::NonFiniteRatios {
                        bad: stats.nonfinite,
                        total: stats.samples,
                    });
                }

                let grad_norm = clip_grad(&mut actor_grad, tc.max_grad_norm);
                clip_grad(&mut critic_grad, tc.max_grad_norm);
                self.actor_opt.step(&mut self.actor, &actor_grad);
                self.critic_opt.step(&mut self.critic, &critic_grad);

                totals.policy_loss += stats.policy_loss;
                totals.value_loss += stats.value_loss;
                totals.entropy += stats.entropy;
                totals.grad_norm += grad_norm;
                updates += 1;
            }
        }
        if updates > 0 {
            let k = updates as f64;
            totals.policy_loss /= k;
            totals.value_loss /= k;
            totals.entropy /= k;
            totals.grad_norm /= k;
        }
        Ok(totals)
    }

    /// Collects and trains on one batch. A non-finite update rolls the
    /// networks and optimisers back and halves both learning rates; a
    /// second one aborts.
    pub fn run_batch(&mut self) -> Result<Option<MetricsRow>> {
        let batch = self.collect_batch()?;
        let snapshot = (
            self.actor.clone(),
            self.critic.clone(),
            self.actor_opt.clone(),
            self.critic_opt.clone(),
        );
        let result = self.update(&batch);
        let healthy = result.is_ok() && self.actor.is_finite() && self.critic.is_finite();
        self.batch += 1;
        if !healthy {
            let reason = match &result {
                Err(e @ Error::NonFiniteRatios { .. }) => e.to_string(),
                Err(e) => return Err(Error::Diverged(e.to_string())),
                Ok(_) => "non-finite parameters after update".to_string(),
            };
            (self.actor, self.critic, self.actor_opt, self.critic_opt) = snapshot;
            if self.lr_halvings >= 1 {
                return Err(Error::Diverged(format!(
                    "batch {}: {reason}; already recovered once (actor lr {:e}, critic lr {:e}, {} env steps)",
                    self.batch, self.actor_opt.lr, self.critic_opt.lr, self.env_steps
                )));
            }
            self.actor_opt.lr *= 0.5;
            self.critic_opt.lr *= 0.5;
            self.lr_halvings += 1;
            return Ok(None);
        }
        let stats = result?;
        Ok(Some(MetricsRow {
            batch: self.batch,
            env_steps: self.env_steps,
            mean_ep_cost: batch.mean_episode_cost(),
            policy_loss: stats.policy_loss,
            value_loss: stats.value_loss,
            entropy: stats.entropy,
            grad_norm: stats.grad_norm,
        }))
    }
}

/// Scales `grad` to at most `max_norm`; returns the norm before clipping.
fn clip_grad<M: Parameterized>(grad: &mut M, max_norm: f64) -> f64 {
    let norm = grad.global_norm();
    if norm > max_norm {
        grad.scale(max_norm / norm);
    }
    norm
}

fn split_even(items: &[usize], parts: usize) -> Vec<Vec<usize>> {
    let parts = parts.max(1).min(items.len().max(1));
    let base = items.len() / parts;
    let extra = items.len() % parts;
    let mut out = Vec::with_capacity(parts);
    let mut start = 0;
    for p in 0..parts {
        let len = base + usize::from(p < extra);
        out.push(items[start..start + len].to_vec());
        start += len;
    }
    out
}

/// Trains until the configured number of environment steps has been
/// collected. Writes an initial checkpoint, the metrics CSV after every
/// batch, periodic checkpoints and a final checkpoint.
pub fn train(cfg: &RunConfig, opts: TrainOptions<'_>) -> Result<TrainOutput> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.workers.max(1))
        .build()
        .map_err(|e| Error::InvalidArgument(format!("cannot build worker pool: {e}")))?;
    pool.install(|| run(cfg, opts))
}

fn run(cfg: &RunConfig, opts: TrainOptions<'_>) -> Result<TrainOutput> {
    let mut trainer = Trainer::new(cfg, opts.init)?;
    let ckpt_path = opts.out_dir.as_ref().map(|d| d.join(CHECKPOINT_FILE));
    let metrics_path = opts.out_dir.as_ref().map(|d| d.join(METRICS_FILE));
    let save = |t: &Trainer| -> Result<()> {
        match &ckpt_path {
            Some(p) => t.checkpoint().save(p),
            None => Ok(()),
        }
    };
    let mut metrics: Vec<MetricsRow> = Vec::new();
    save(&trainer)?;
    if let Some(p) = &metrics_path {
        write_csv(p, &METRICS_HEADER, &metrics)?;
    }

    while trainer.env_steps < cfg.train.total_env_steps {
        let Some(row) = trainer.run_batch()? else { continue };
        if let Some(cb) = &opts.on_batch {
            cb(&row);
        }
        metrics.push(row);
        if let Some(p) = &metrics_path {
            write_csv(p, &METRICS_HEADER, &metrics)?;
        }
        if cfg.train.checkpoint_every > 0 && trainer.batch % cfg.train.checkpoint_every == 0 {
            save(&trainer)?;
        }
    }
    save(&trainer)?;

    Ok(TrainOutput {
        actor: trainer.actor,
        critic: trainer.critic,
        metrics,
        lr_halvings: trainer.lr_halvings,
        max_replay_error: trainer.max_replay_error,
    })
}
