//! Clipped-surrogate PPO loss over replayed recurrent sequences.

use crate::error::Result;
use crate::nn::policy::{entropy_var, log_prob_var};
use crate::nn::{ActorNet, CriticNet, Parameterized, Tape, Var};

use super::rollout::EpisodeRecord;

pub const VALUE_COEF: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossParams {
    pub clip_eps: f64,
    pub entropy_weight: f64,
}

/// `min(ρA, clip(ρ, 1−ε, 1+ε)A)`, the per-sample surrogate objective.
pub fn clipped_surrogate(ratio: f64, advantage: f64, clip_eps: f64) -> f64 {
    let clipped = ratio.clamp(1.0 - clip_eps, 1.0 + clip_eps);
    (ratio * advantage).min(clipped * advantage)
}

/// Scalar loss components, already weighted by the minibatch
/// normalisation.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LossStats {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub nonfinite: usize,
    pub samples: usize,
}

impl LossStats {
    pub fn merge(&mut self, o: &LossStats) {
        self.policy_loss += o.policy_loss;
        self.value_loss += o.value_loss;
        self.entropy += o.entropy;
        self.nonfinite += o.nonfinite;
        self.samples += o.samples;
    }
}

pub struct EpisodeLoss {
    pub actor_grad: ActorNet,
    pub critic_grad: CriticNet,
    pub stats: LossStats,
    /// Log-probabilities of the stored actions under the current policy.
    pub log_probs: Vec<f64>,
}

/// Builds the loss of one episode, replaying each stored sequence from its
/// recorded initial hidden state, and backpropagates it through time.
///
/// `weight` scales every per-step term, normally `1 / (steps in minibatch)`.
pub fn episode_loss(
    actor: &ActorNet,
    critic: &CriticNet,
    ep: &EpisodeRecord,
    advantages: &[f64],
    returns: &[f64],
    params: LossParams,
    weight: f64,
) -> Result<EpisodeLoss> {
    let mut actor_grad = actor.zeros_like();
    let mut critic_grad = critic.zeros_like();
    let mut stats = LossStats::default();
    let mut log_probs = Vec::with_capacity(ep.len());

    for (start, end) in ep.sequence_bounds() {
        let mut tape = Tape::new();
        let av = actor.bind(&mut tape);
        let cv = critic.bind(&mut tape);
        let log_std = av.clamped_log_std(&mut tape);
        let mut h1 = tape.leaf(ep.h1[start].clone());
        let mut h2 = tape.leaf(ep.h2[start].clone());
        let task = ep.task.as_array();

        let mut surrogates: Vec<Var> = Vec::with_capacity(end - start);
        let mut value_errs: Vec<Var> = Vec::with_capacity(end - start);
        for t in start..end {
            let s = tape.leaf(ep.inputs[t].to_vec());
            let step = av.step(&mut tape, s, h1, h2);
            (h1, h2) = (step.h1, step.h2);

            let lp = log_prob_var(&mut tape, &ep.actions[t], step.mean, log_std);
            log_probs.push(tape.scalar(lp));
            let log_ratio = tape.offset(lp, -ep.log_probs[t]);
            let ratio = tape.exp(log_ratio);
            stats.samples += 1;
            if tape.scalar(ratio).is_finite() {
                let a = advantages[t];
                let unclipped = tape.scale(ratio, a);
                let clipped = tape.clamp(ratio, 1.0 - params.clip_eps, 1.0 + params.clip_eps);
                let clipped = tape.scale(clipped, a);
                surrogates.push(tape.min(unclipped, clipped));
            } else {
                stats.nonfinite += 1;
            }

            let mut fixed = ep.inputs[t].to_vec();
            fixed.extend_from_slice(&task);
            let fixed = tape.leaf(fixed);
            let deep = tape.detach(step.h2);
            let x = tape.concat(vec![fixed, deep]);
            let v = cv.forward(&mut tape, x);
            let err = tape.offset(v, -returns[t]);
            value_errs.push(tape.square(err));
        }

        let mut terms = Vec::with_capacity(3);
        if !surrogates.is_empty() {
            let s = tape.add_n(surrogates);
            let policy = tape.scale(s, -weight);
            stats.policy_loss += tape.scalar(policy);
            terms.push(policy);
        }
        let v = tape.add_n(value_errs);
        let value = tape.scale(v, VALUE_COEF * weight);
        stats.value_loss += tape.scalar(v) * weight;
        terms.push(value);
        let h = entropy_var(&mut tape, log_std);
        let steps = (end - start) as f64;
        stats.entropy += tape.scalar(h) * steps * weight;
        terms.push(tape.scale(h, -params.entropy_weight * steps * weight));
        let loss = tape.add_n(terms);

        let grads = tape.backward(loss)?;
        actor_grad.accumulate(&av.gradient(actor, &grads));
        critic_grad.accumulate(&cv.gradient(critic, &grads));
    }

    Ok(EpisodeLoss {
        actor_grad,
        critic_grad,
        stats,
        log_probs,
    })
}

/// Re-evaluates the stored actions' log-probabilities by replaying every
/// sequence through the same taped path the loss uses.
pub fn replay_log_probs(actor: &ActorNet, ep: &EpisodeRecord) -> Vec<f64> {
    let mut out = Vec::with_capacity(ep.len());
    for (start, end) in ep.sequence_bounds() {
        let mut tape = Tape::new();
        let av = actor.bind(&mut tape);
        let log_std = av.clamped_log_std(&mut tape);
        let mut h1 = tape.leaf(ep.h1[start].clone());
        let mut h2 = tape.leaf(ep.h2[start].clone());
        for t in start..end {
            let s = tape.leaf(ep.inputs[t].to_vec());
            let step = av.step(&mut tape, s, h1, h2);
            (h1, h2) = (step.h1, step.h2);
            let lp = log_prob_var(&mut tape, &ep.actions[t], step.mean, log_std);
            out.push(tape.scalar(lp));
        }
    }
    out
}
