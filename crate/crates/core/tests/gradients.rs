//! Reverse-mode gradients against central finite differences.

mod common;

use common::checks::{self, LossCase, TOL};
use metatune::nn::Parameterized;
use metatune::ppo::episode_loss;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const DRAWS: usize = 100;

#[test]
fn dense_layer() {
    let worst = checks::dense_layer(DRAWS);
    assert!(worst <= TOL, "worst relative error {worst}");
}

#[test]
fn gru_two_step_bptt() {
    let worst = checks::gru_two_step(DRAWS);
    assert!(worst <= TOL, "worst relative error {worst}");
}

#[test]
fn gaussian_log_prob_gradient() {
    let worst = checks::log_prob_gradient(DRAWS);
    assert!(worst <= TOL, "worst relative error {worst}");
}

#[test]
fn full_actor_critic_loss() {
    let worst = checks::actor_critic_loss(DRAWS);
    assert!(worst <= TOL, "worst relative error {worst}");
}

#[test]
fn value_loss_does_not_reach_actor() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let mut case = LossCase::draw(&mut rng);
    case.adv.iter_mut().for_each(|a| *a = 0.0);
    case.params.entropy_weight = 0.0;
    let out = episode_loss(&case.actor, &case.critic, &case.ep, &case.adv, &case.ret, case.params, 0.1).unwrap();
    assert_eq!(out.actor_grad.global_norm(), 0.0);
    assert!(out.critic_grad.global_norm() > 0.0);
}
