use rand::Rng;

use crate::env::{EpisodeConfig, PidEnv, PrivilegedVector, RlState};
use crate::error::Result;
use crate::nn::{normalize_state, policy_sample, ActorNet, CriticNet};
use crate::sim::TaskParams;

/// Everything recorded while the policy interacted with one task.
///
/// Index `t` of every per-step vector refers to the same step. `h1[t]` and
/// `h2[t]` are the actor hidden states *entering* step `t`.
#[derive(Debug, Clone)]
pub struct EpisodeRecord {
    pub task: TaskParams,
    pub states: Vec<RlState>,
    pub inputs: Vec<[f64; 5]>,
    /// Sampled actions before clipping to `[-1, 1]`.
    pub actions: Vec<[f64; 3]>,
    pub log_probs: Vec<f64>,
    pub costs: Vec<f64>,
    pub values: Vec<f64>,
    pub privileged: Vec<PrivilegedVector>,
    pub h1: Vec<Vec<f64>>,
    pub h2: Vec<Vec<f64>>,
    /// `true` where a replay sequence starts; its stored hidden state seeds
    /// the re-evaluation.
    pub sequence_start: Vec<bool>,
    pub terminal_value: f64,
}

impl EpisodeRecord {
    pub fn len(&self) -> usize {
        self.costs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.costs.is_empty()
    }

    pub fn total_cost(&self) -> f64 {
        self.costs.iter().sum()
    }

    /// Checks that every per-step sequence has the same length.
    pub fn is_consistent(&self) -> bool {
        let n = self.len();
        [
            self.states.len(),
            self.inputs.len(),
            self.actions.len(),
            self.log_probs.len(),
            self.values.len(),
            self.privileged.len(),
            self.h1.len(),
            self.h2.len(),
            self.sequence_start.len(),
        ]
        .iter()
        .all(|&l| l == n)
    }

    /// Start indices of the replay sequences.
    pub fn sequence_bounds(&self) -> Vec<(usize, usize)> {
        let starts: Vec<usize> = (0..self.len()).filter(|&t| self.sequence_start[t]).collect();
        starts
            .iter()
            .enumerate()
            .map(|(i, &s)| (s, starts.get(i + 1).copied().unwrap_or(self.len())))
            .collect()
    }
}

#[derive(Debug, Clone, Default)]
pub struct RolloutBatch {
    pub episodes: Vec<EpisodeRecord>,
}

impl RolloutBatch {
    pub fn steps(&self) -> usize {
        self.episodes.iter().map(EpisodeRecord::len).sum()
    }

    pub fn mean_episode_cost(&self) -> f64 {
        if self.episodes.is_empty() {
            return 0.0;
        }
        self.episodes.iter().map(EpisodeRecord::total_cost).sum::<f64>() / self.episodes.len() as f64
    }
}

/// Runs one full episode of the stochastic policy on `task`, evaluating the
/// privileged critic at every step.
pub fn collect_episode<R: Rng + ?Sized>(
    actor: &ActorNet,
    critic: &CriticNet,
    task: TaskParams,
    cfg: &EpisodeConfig,
    chunk_len: usize,
    rng: &mut R,
) -> Result<EpisodeRecord> {
    let (mut env, mut state) = PidEnv::reset(task, cfg.clone(), rng)?;
    let n = cfg.steps_per_episode;
    let mut rec = EpisodeRecord {
        task,
        states: Vec::with_capacity(n),
        inputs: Vec::with_capacity(n),
        actions: Vec::with_capacity(n),
        log_probs: Vec::with_capacity(n),
        costs: Vec::with_capacity(n),
        values: Vec::with_capacity(n),
        privileged: Vec::with_capacity(n),
        h1: Vec::with_capacity(n),
        h2: Vec::with_capacity(n),
        sequence_start: Vec::with_capacity(n),
        terminal_value: 0.0,
    };
    let chunk_len = chunk_len.max(1);
    let (mut h1, mut h2) = actor.initial_hidden();
    for t in 0..n {
        let input = normalize_state(&state);
        let out = actor.forward(&input, &h1, &h2)?;
        let (action, log_prob) = policy_sample(&out.mean, &out.log_std, rng);
        let privileged = env.privileged(&out.h2);
        let value = critic.forward(&input, &privileged)?;

        rec.states.push(state);
        rec.inputs.push(input);
        rec.actions.push(action);
        rec.log_probs.push(log_prob);
        rec.values.push(value);
        rec.privileged.push(privileged);
        rec.h1.push(std::mem::replace(&mut h1, out.h1));
        rec.h2.push(std::mem::replace(&mut h2, out.h2));
        rec.sequence_start.push(t % chunk_len == 0);

        let step = env.step(action)?;
        rec.costs.push(step.cost);
        state = step.state;
    }
    // Episodes are cut by a time limit, so bootstrap from the next state.
    let input = normalize_state(&state);
    let out = actor.forward(&input, &h1, &h2)?;
    rec.terminal_value = critic.forward(&input, &env.privileged(&out.h2))?;
    Ok(rec)
}
