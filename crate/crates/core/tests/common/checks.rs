//! Oracle checks shared by the focused suites and the acceptance run.
//! Each returns the worst error it saw.

use super::{central_diff, rel_err, rk4_step_response, monte_carlo_advantages};
use metatune::eval::pca_top2;
use metatune::nn::layers::{gru_step, Dense, GruCellParams};
use metatune::nn::policy::{gaussian_log_prob, log_prob_var};
use metatune::nn::{Parameterized, Tape};
use metatune::ppo::{collect_episode, compute_gae, episode_loss, EpisodeRecord, LossParams};
use metatune::{ActorNet, CriticNet, EpisodeConfig, NetworkConfig, PlantState, TaskParams};
use rand::{Rng, SeedableRng};
use nalgebra::{DMatrix, SymmetricEigen};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Largest deviation of a first-order plant from `K(1 - e^{-t/τ})`.
pub fn first_order_analytic() -> f64 {
    let mut worst: f64 = 0.0;
    for &(k, tau1, dt) in &[(1.0, 1.0, 0.1), (0.4, 0.3, 0.05), (2.0, 0.7, 0.02)] {
        let task = TaskParams::new(k, tau1, 0.0, 0.0).unwrap();
        let mut p = PlantState::new(&task, dt).unwrap();
        for n in 1..=200 {
            let y = p.step(&task, 1.0).unwrap();
            worst = worst.max((y - k * (1.0 - (-(n as f64) * dt / tau1).exp())).abs());
        }
    }
    worst
}

/// Max abs error of the discrete cascade against a fine RK4 integration.
pub fn cascade_vs_rk4(task: &TaskParams, h: f64, samples: usize) -> f64 {
    let dt = 0.05;
    let oracle = rk4_step_response(task, h, dt, samples);
    let mut p = PlantState::new(task, dt).unwrap();
    (0..samples)
        .map(|i| (p.step(task, 1.0).unwrap() - oracle[i]).abs())
        .fold(0.0, f64::max)
}

/// GAE at λ = 1 against direct discounted sums over random short episodes.
pub fn gae_lambda_one(episodes: usize) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst: f64 = 0.0;
    for _ in 0..episodes {
        let n = rng.random_range(1..=20);
        let costs: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..3.0)).collect();
        let values: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..1.0)).collect();
        let terminal = rng.random_range(-5.0..1.0);
        let gamma = rng.random_range(0.8..0.999);
        let (adv, ret) = compute_gae(&costs, &values, terminal, gamma, 1.0).unwrap();
        let mc = monte_carlo_advantages(&costs, &values, terminal, gamma);
        for t in 0..n {
            worst = worst.max((adv[t] - mc[t]).abs());
            assert!((ret[t] - adv[t] - values[t]).abs() < 1e-12);
        }
    }
    worst
}

pub const H: f64 = 1e-6;
pub const TOL: f64 = 1e-4;

fn uniform(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

fn randomize<M: Parameterized>(m: &mut M, rng: &mut ChaCha8Rng, scale: f64) {
    for t in m.tensors_mut() {
        t.data.iter_mut().for_each(|x| *x = scale * rng.random_range(-1.0..1.0));
    }
}

pub fn dense_layer(draws: usize) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst: f64 = 0.0;
    for _ in 0..draws {
        let (ni, no) = (rng.random_range(2..7), rng.random_range(1..6));
        let mut layer = Dense::zeros(ni, no);
        for t in layer.tensors_mut() {
            t.data = uniform(&mut rng, t.len());
        }
        let x = uniform(&mut rng, ni);
        let c = uniform(&mut rng, no);

        let mut tape = Tape::new();
        let dv = layer.bind(&mut tape);
        let xv = tape.leaf(x.clone());
        let y = dv.forward(&mut tape, xv);
        let a = tape.tanh(y);
        let cv = tape.leaf(c.clone());
        let m = tape.mul(a, cv);
        let loss = tape.sum(m);
        let g = tape.backward(loss).unwrap();

        let eval = |l: &Dense, x: &[f64]| -> f64 {
            l.forward(x).unwrap().iter().zip(&c).map(|(v, c)| v.tanh() * c).sum()
        };
        let gw = g.wrt(dv.weight);
        let w0 = layer.weight.data.clone();
        for i in 0..w0.len() {
            let n = central_diff(
                |w| {
                    let mut l = layer.clone();
                    l.weight.data = w.to_vec();
                    eval(&l, &x)
                },
                &w0,
                i,
                H,
            );
            worst = worst.max(rel_err(gw[i], n));
        }
        let gb = g.wrt(dv.bias);
        let b0 = layer.bias.data.clone();
        for i in 0..b0.len() {
            let n = central_diff(
                |b| {
                    let mut l = layer.clone();
                    l.bias.data = b.to_vec();
                    eval(&l, &x)
                },
                &b0,
                i,
                H,
            );
            worst = worst.max(rel_err(gb[i], n));
        }
        let gx = g.wrt(xv);
        for i in 0..ni {
            worst = worst.max(rel_err(gx[i], central_diff(|x| eval(&layer, x), &x, i, H)));
        }
    }
    worst
}

pub fn gru_two_step(draws: usize) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut worst: f64 = 0.0;
    for _ in 0..draws {
        let (ni, nh) = (rng.random_range(1..5), rng.random_range(1..6));
        let mut cell = GruCellParams::zeros(ni, nh);
        for t in cell.tensors_mut() {
            t.data = uniform(&mut rng, t.len());
        }
        let x1 = uniform(&mut rng, ni);
        let x2 = uniform(&mut rng, ni);
        let h0 = uniform(&mut rng, nh);
        let c = uniform(&mut rng, nh);

        let mut tape = Tape::new();
        let gv = cell.bind(&mut tape);
        let hv = tape.leaf(h0.clone());
        let x1v = tape.leaf(x1.clone());
        let x2v = tape.leaf(x2.clone());
        let h1 = gv.step(&mut tape, x1v, hv);
        let h2 = gv.step(&mut tape, x2v, h1);
        let cv = tape.leaf(c.clone());
        let m = tape.mul(h2, cv);
        let loss = tape.sum(m);
        let g = tape.backward(loss).unwrap();

        let eval = |cell: &GruCellParams, h0: &[f64]| -> f64 {
            let h1 = gru_step(cell, &x1, h0).unwrap();
            let h2 = gru_step(cell, &x2, &h1).unwrap();
            h2.iter().zip(&c).map(|(a, b)| a * b).sum()
        };
        for (ti, v) in gv.vars().into_iter().enumerate() {
            let ga = g.wrt(v);
            let p0 = cell.tensors()[ti].data.clone();
            for i in 0..p0.len() {
                let n = central_diff(
                    |p| {
                        let mut c2 = cell.clone();
                        c2.tensors_mut()[ti].data = p.to_vec();
                        eval(&c2, &h0)
                    },
                    &p0,
                    i,
                    H,
                );
                worst = worst.max(rel_err(ga[i], n));
            }
        }
        let gh = g.wrt(hv);
        for i in 0..nh {
            worst = worst.max(rel_err(gh[i], central_diff(|h| eval(&cell, h), &h0, i, H)));
        }
    }
    worst
}

pub fn log_prob_gradient(draws: usize) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let mut worst: f64 = 0.0;
    for _ in 0..draws {
        let action = uniform(&mut rng, 3).iter().map(|a| 2.0 * a).collect::<Vec<_>>();
        let mean = uniform(&mut rng, 3);
        let log_std: Vec<f64> = uniform(&mut rng, 3).iter().map(|v| v - 0.5).collect();

        let mut tape = Tape::new();
        let mv = tape.leaf(mean.clone());
        let lv = tape.leaf(log_std.clone());
        let lp = log_prob_var(&mut tape, &action, mv, lv);
        assert!((tape.scalar(lp) - gaussian_log_prob(&action, &mean, &log_std)).abs() < 1e-12);
        let g = tape.backward(lp).unwrap();
        let (gm, gl) = (g.wrt(mv), g.wrt(lv));
        for i in 0..3 {
            let nm = central_diff(|m| gaussian_log_prob(&action, m, &log_std), &mean, i, H);
            let nl = central_diff(|l| gaussian_log_prob(&action, &mean, l), &log_std, i, H);
            worst = worst.max(rel_err(gm[i], nm)).max(rel_err(gl[i], nl));
        }
    }
    worst
}

fn small_net() -> NetworkConfig {
    NetworkConfig {
        gru1_hidden: 5,
        gru2_hidden: 4,
        fc_hidden: 6,
        critic_hidden: 5,
        critic_layers: 2,
        ..NetworkConfig::default()
    }
}

fn short_episode_config() -> EpisodeConfig {
    EpisodeConfig {
        setpoint_period: 0.5,
        steps_per_episode: 12,
        ..EpisodeConfig::default()
    }
}

pub struct LossCase {
    pub actor: ActorNet,
    pub critic: CriticNet,
    pub ep: EpisodeRecord,
    pub adv: Vec<f64>,
    pub ret: Vec<f64>,
    pub params: LossParams,
}

impl LossCase {
    pub fn draw(rng: &mut ChaCha8Rng) -> Self {
        let net = small_net();
        let mut actor = ActorNet::new(&net, rng);
        randomize(&mut actor, rng, 0.6);
        let mut critic = CriticNet::new(&net, rng);
        randomize(&mut critic, rng, 0.6);
        let task = TaskParams::from_ratios(
            rng.random_range(0.25..1.0),
            rng.random_range(0.25..1.0),
            rng.random_range(0.0..1.0),
            rng.random_range(0.0..1.0),
        )
        .unwrap();
        let mut ep = collect_episode(&actor, &critic, task, &short_episode_config(), 5, rng).unwrap();
        // Move the ratios away from 1 so the clipped branch is exercised.
        for lp in ep.log_probs.iter_mut() {
            *lp += rng.random_range(-0.4..0.4);
        }
        let n = ep.len();
        let adv = uniform(rng, n);
        let ret = uniform(rng, n);
        LossCase {
            actor,
            critic,
            ep,
            adv,
            ret,
            params: LossParams {
                clip_eps: 0.2,
                entropy_weight: 0.05,
            },
        }
    }

    fn stats(&self, actor: &ActorNet, critic: &CriticNet) -> metatune::ppo::LossStats {
        let w = 1.0 / self.ep.len() as f64;
        episode_loss(actor, critic, &self.ep, &self.adv, &self.ret, self.params, w)
            .unwrap()
            .stats
    }

    /// The actor's objective. The critic sees the deep hidden state only
    /// through a detached copy, so the value term is excluded here.
    fn actor_loss(&self, actor: &ActorNet) -> f64 {
        let s = self.stats(actor, &self.critic);
        s.policy_loss - self.params.entropy_weight * s.entropy
    }

    fn total_loss(&self, critic: &CriticNet) -> f64 {
        let s = self.stats(&self.actor, critic);
        s.policy_loss + 0.5 * s.value_loss - self.params.entropy_weight * s.entropy
    }
}

fn check_coords<M: Parameterized + Clone>(
    model: &M,
    grad: &M,
    rng: &mut ChaCha8Rng,
    picks: usize,
    loss: impl Fn(&M) -> f64,
) -> f64 {
    let sizes: Vec<usize> = model.tensors().iter().map(|t| t.len()).collect();
    let mut worst: f64 = 0.0;
    for _ in 0..picks {
        let ti = rng.random_range(0..sizes.len());
        let i = rng.random_range(0..sizes[ti]);
        let p0 = model.tensors()[ti].data.clone();
        let n = central_diff(
            |p| {
                let mut m = model.clone();
                m.tensors_mut()[ti].data = p.to_vec();
                loss(&m)
            },
            &p0,
            i,
            H,
        );
        worst = worst.max(rel_err(grad.tensors()[ti].data[i], n));
    }
    worst
}

pub fn actor_critic_loss(draws: usize) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let mut worst: f64 = 0.0;
    for _ in 0..draws {
        let case = LossCase::draw(&mut rng);
        let w = 1.0 / case.ep.len() as f64;
        let out = episode_loss(&case.actor, &case.critic, &case.ep, &case.adv, &case.ret, case.params, w).unwrap();
        let wa = check_coords(&case.actor, &out.actor_grad, &mut rng, 6, |a| case.actor_loss(a));
        let wc = check_coords(&case.critic, &out.critic_grad, &mut rng, 3, |c| case.total_loss(c));
        worst = worst.max(wa).max(wc);
    }
    worst
}

pub fn random_data(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Vec<Vec<f64>> {
    // Anisotropic so the leading eigenvalues are well separated.
    let scales: Vec<f64> = (0..d).map(|j| 3.0 / (1.0 + j as f64)).collect();
    (0..n)
        .map(|_| (0..d).map(|j| scales[j] * rng.sample::<f64, _>(StandardNormal) + rng.random_range(-0.1..0.1)).collect())
        .collect()
}

/// Top-2 eigenvectors of the sample covariance from a dense solver.
fn oracle_subspace(data: &[Vec<f64>]) -> DMatrix<f64> {
    let (n, d) = (data.len(), data[0].len());
    let x = DMatrix::from_fn(n, d, |i, j| data[i][j]);
    let mean = x.row_mean();
    let centred = DMatrix::from_fn(n, d, |i, j| x[(i, j)] - mean[j]);
    let cov = centred.transpose() * &centred / (n as f64 - 1.0);
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    DMatrix::from_fn(d, 2, |i, k| eig.eigenvectors[(i, order[k])])
}

/// Sine of the largest principal angle between two orthonormal bases.
fn max_principal_sine(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let residual = a - b * (b.transpose() * a);
    residual.singular_values().max()
}

/// Largest principal angle between our top-2 PCA subspace and the dense
/// eigensolver's, over random anisotropic data sets.
pub fn pca_oracle_angle(draws: usize) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mut worst: f64 = 0.0;
    for _ in 0..draws {
        let data = random_data(&mut rng, 50, 8);
        let p = pca_top2(&data).unwrap();
        let ours = DMatrix::from_fn(8, 2, |i, k| p.components[k][i]);
        worst = worst.max(max_principal_sine(&ours, &oracle_subspace(&data)).asin());
    }
    worst
}
