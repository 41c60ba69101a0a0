mod common;

use metatune::nn::Parameterized;
use metatune::ppo::{compute_gae, episode_loss, normalize_advantages, Adam, LossParams};
use metatune::{train, NetworkConfig, RunConfig, TrainOptions, Trainer};
use proptest::prelude::*;

fn tiny_config(steps: u64) -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.network = NetworkConfig {
        gru1_hidden: 8,
        gru2_hidden: 8,
        fc_hidden: 8,
        critic_hidden: 8,
        ..NetworkConfig::default()
    };
    cfg.train.tasks_per_batch = 4;
    cfg.train.minibatches = 2;
    cfg.train.epochs = 2;
    cfg.train.bptt_chunk = 55;
    cfg.train.total_env_steps = steps;
    cfg
}

#[test]
fn gae_lambda_one_is_monte_carlo() {
    let err = common::checks::gae_lambda_one(50);
    assert!(err < 1e-10, "max abs error {err}");
}

proptest! {
    #[test]
    fn normalized_advantages_are_standard(v in prop::collection::vec(-100.0f64..100.0, 2..200)) {
        let mut a = v.clone();
        normalize_advantages(&mut a);
        let n = a.len() as f64;
        let mean = a.iter().sum::<f64>() / n;
        prop_assert!(mean.abs() < 1e-9);
        let spread = v.iter().cloned().fold(f64::MIN, f64::max) - v.iter().cloned().fold(f64::MAX, f64::min);
        if spread > 1e-6 {
            let var = a.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
            prop_assert!((var - 1.0).abs() < 1e-6);
        }
    }
}

#[test]
fn replayed_log_probs_match_rollout() {
    let mut cfg = RunConfig::default();
    cfg.train.bptt_chunk = 50;
    let mut trainer = Trainer::new(&cfg, None).unwrap();
    let batch = trainer.collect_batch().unwrap();
    assert!(batch.episodes.iter().all(|e| e.is_consistent()));
    assert!(trainer.replay_error(&batch) <= 1e-8);
}

#[test]
fn stored_hidden_states_survive_updates() {
    let mut trainer = Trainer::new(&tiny_config(0), None).unwrap();
    let batch = trainer.collect_batch().unwrap();
    let before: Vec<Vec<f64>> = batch.episodes[0].h2.clone();
    trainer.update(&batch).unwrap();
    assert_eq!(before, batch.episodes[0].h2);
    // After an update the policy moved, so replay no longer matches.
    assert!(trainer.replay_error(&batch) > 0.0);
}

#[test]
fn value_loss_falls_on_frozen_batch() {
    let cfg = tiny_config(0);
    let mut trainer = Trainer::new(&cfg, None).unwrap();
    let batch = trainer.collect_batch().unwrap();
    let targets: Vec<(Vec<f64>, Vec<f64>)> = batch
        .episodes
        .iter()
        .map(|e| compute_gae(&e.costs, &e.values, e.terminal_value, cfg.episode.gamma, cfg.train.gae_lambda).unwrap())
        .collect();
    let params = LossParams {
        clip_eps: 0.2,
        entropy_weight: 0.0,
    };
    let w = 1.0 / batch.steps() as f64;
    let mut critic = trainer.critic.clone();
    let mut opt = Adam::new(1e-3);
    let mut history = Vec::new();
    for _ in 0..40 {
        let mut grad = critic.zeros_like();
        let mut loss = 0.0;
        for (ep, (adv, ret)) in batch.episodes.iter().zip(&targets) {
            let out = episode_loss(&trainer.actor, &critic, ep, adv, ret, params, w).unwrap();
            grad.accumulate(&out.critic_grad);
            loss += out.stats.value_loss;
        }
        history.push(loss);
        opt.step(&mut critic, &grad);
    }
    assert!(history.windows(2).all(|w| w[1] < w[0]), "value loss {history:?}");
}

#[test]
fn training_is_deterministic_across_worker_counts() {
    let cfg = tiny_config(3 * 4 * 220);
    let dirs: Vec<tempfile::TempDir> = (0..3).map(|_| tempfile::tempdir().unwrap()).collect();
    for (dir, workers) in dirs.iter().zip([1, 1, 3]) {
        train(
            &cfg,
            TrainOptions {
                out_dir: Some(dir.path().to_path_buf()),
                workers,
                ..Default::default()
            },
        )
        .unwrap();
    }
    let read = |d: &tempfile::TempDir, f: &str| std::fs::read(d.path().join(f)).unwrap();
    for f in ["metrics.csv", "checkpoint.json"] {
        assert_eq!(read(&dirs[0], f), read(&dirs[1], f), "{f}");
        assert_eq!(read(&dirs[0], f), read(&dirs[2], f), "{f} with 3 workers");
    }
    let csv = String::from_utf8(read(&dirs[0], "metrics.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4);
}

#[test]
fn zero_steps_writes_initial_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(0);
    let out = train(
        &cfg,
        TrainOptions {
            out_dir: Some(dir.path().to_path_buf()),
            workers: 1,
            ..Default::default()
        },
    )
    .unwrap();
    assert!(out.metrics.is_empty());
    let ck = metatune::Checkpoint::load(&dir.path().join("checkpoint.json")).unwrap();
    assert_eq!(ck.config, cfg);
    let (actor, _) = ck.networks().unwrap();
    assert_eq!(actor, out.actor);
}
