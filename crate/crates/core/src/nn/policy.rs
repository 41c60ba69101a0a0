//! Diagonal Gaussian policy head.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::tape::{Tape, Var};

pub const LOG_STD_MIN: f64 = -5.0;
pub const LOG_STD_MAX: f64 = 1.0;

const HALF_LOG_TWO_PI: f64 = 0.918_938_533_204_672_8;

/// Log-density of `action` under `N(mean, diag(exp(log_std))²)`.
pub fn gaussian_log_prob(action: &[f64], mean: &[f64], log_std: &[f64]) -> f64 {
    action
        .iter()
        .zip(mean)
        .zip(log_std)
        .map(|((a, m), ls)| {
            let z = (a - m) * (-ls).exp();
            -0.5 * z * z - ls - HALF_LOG_TWO_PI
        })
        .sum()
}

pub fn gaussian_entropy(log_std: &[f64]) -> f64 {
    log_std.iter().map(|ls| ls + 0.5 + HALF_LOG_TWO_PI).sum()
}

/// Draws `mean + σ ε`; the log-probability refers to the unclipped draw.
pub fn policy_sample<R: Rng + ?Sized>(mean: &[f64; 3], log_std: &[f64; 3], rng: &mut R) -> ([f64; 3], f64) {
    let mut action = [0.0; 3];
    for i in 0..3 {
        let eps: f64 = StandardNormal.sample(rng);
        action[i] = mean[i] + log_std[i].exp() * eps;
    }
    let lp = gaussian_log_prob(&action, mean, log_std);
    (action, lp)
}

/// Taped log-density; `action` is a constant.
pub fn log_prob_var(tape: &mut Tape, action: &[f64], mean: Var, log_std: Var) -> Var {
    let a = tape.leaf(action.to_vec());
    let diff = tape.sub(a, mean);
    let neg_ls = tape.scale(log_std, -1.0);
    let inv_std = tape.exp(neg_ls);
    let z = tape.mul(diff, inv_std);
    let z2 = tape.square(z);
    let quad = tape.scale(z2, -0.5);
    let per_dim = tape.sub(quad, log_std);
    let shifted = tape.offset(per_dim, -HALF_LOG_TWO_PI);
    tape.sum(shifted)
}

pub fn entropy_var(tape: &mut Tape, log_std: Var) -> Var {
    let shifted = tape.offset(log_std, 0.5 + HALF_LOG_TWO_PI);
    tape.sum(shifted)
}
