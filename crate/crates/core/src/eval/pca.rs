//! Principal components of the deep hidden state after adaptation.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::{Controller, Runner};
use crate::env::{EpisodeConfig, TaskDistribution};
use crate::error::{Error, Result};
use crate::nn::ActorNet;
use crate::ppo::train::stream_seed;
use crate::sim::TaskParams;

pub const PCA_HEADER: [&str; 6] = ["k", "tau1", "tau2", "theta", "pc1", "pc2"];

const MAX_POWER_ITERS: usize = 200_000;
const POWER_TOL: f64 = 1e-14;

#[derive(Debug, Clone, PartialEq)]
pub struct Pca {
    pub mean: Vec<f64>,
    /// Unit principal directions, largest variance first. Each is signed
    /// so its largest-magnitude entry is positive.
    pub components: [Vec<f64>; 2],
    pub variances: [f64; 2],
    /// Projections of the centred rows, in input order.
    pub scores: Vec<[f64; 2]>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn normalize(v: &mut [f64]) -> f64 {
    let n = dot(v, v).sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
    n
}

fn orthogonalize(v: &mut [f64], basis: &[Vec<f64>]) {
    for b in basis {
        let c = dot(v, b);
        v.iter_mut().zip(b).for_each(|(x, y)| *x -= c * y);
    }
}

fn fix_sign(v: &mut [f64]) {
    let mut idx = 0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[idx].abs() {
            idx = i;
        }
    }
    if v[idx] < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

/// Leading eigenpair of the symmetric matrix `c` (row-major, `d × d`)
/// orthogonal to `found`, by power iteration.
fn power_iteration(c: &[f64], d: usize, found: &[Vec<f64>]) -> (Vec<f64>, f64) {
    let matvec = |v: &[f64]| -> Vec<f64> { (0..d).map(|i| dot(&c[i * d..(i + 1) * d], v)).collect() };

    // Start from the largest column, falling back to coordinate vectors.
    let mut start: Vec<f64> = (0..d)
        .map(|j| (0..d).map(|i| c[i * d + j]).collect::<Vec<f64>>())
        .max_by(|a, b| dot(a, a).total_cmp(&dot(b, b)))
        .unwrap_or_default();
    orthogonalize(&mut start, found);
    if normalize(&mut start) < 1e-300 {
        for j in 0..d {
            let mut e = vec![0.0; d];
            e[j] = 1.0;
            orthogonalize(&mut e, found);
            if normalize(&mut e) > 1e-8 {
                start = e;
                break;
            }
        }
    }

    let mut v = start;
    for _ in 0..MAX_POWER_ITERS {
        let mut w = matvec(&v);
        orthogonalize(&mut w, found);
        if normalize(&mut w) == 0.0 {
            break;
        }
        let s = if dot(&w, &v) < 0.0 { -1.0 } else { 1.0 };
        let delta: f64 = w.iter().zip(&v).map(|(a, b)| (a - s * b).powi(2)).sum::<f64>().sqrt();
        v = w;
        if delta < POWER_TOL {
            break;
        }
    }
    let lambda = dot(&v, &matvec(&v));
    (v, lambda)
}

/// Top two principal components of the rows of `data`, by power
/// iteration with deflation on the sample covariance.
pub fn pca_top2(data: &[Vec<f64>]) -> Result<Pca> {
    let n = data.len();
    if n < 3 {
        return Err(Error::InvalidArgument(format!("PCA needs at least 3 samples, got {n}")));
    }
    let d = data[0].len();
    if d < 2 {
        return Err(Error::InvalidArgument(format!("PCA needs at least 2 dimensions, got {d}")));
    }
    if let Some(bad) = data.iter().find(|r| r.len() != d) {
        return Err(Error::DimensionMismatch {
            context: "pca row",
            expected: d,
            actual: bad.len(),
        });
    }
    if data.iter().flatten().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("pca input"));
    }

    let mut mean = vec![0.0; d];
    for r in data {
        mean.iter_mut().zip(r).for_each(|(m, x)| *m += x);
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let centred: Vec<Vec<f64>> = data
        .iter()
        .map(|r| r.iter().zip(&mean).map(|(x, m)| x - m).collect())
        .collect();

    let mut cov = vec![0.0; d * d];
    for r in &centred {
        for i in 0..d {
            for j in i..d {
                cov[i * d + j] += r[i] * r[j];
            }
        }
    }
    for i in 0..d {
        for j in i..d {
            let v = cov[i * d + j] / (n - 1) as f64;
            cov[i * d + j] = v;
            cov[j * d + i] = v;
        }
    }

    let (mut v1, l1) = power_iteration(&cov, d, &[]);
    for i in 0..d {
        for j in 0..d {
            cov[i * d + j] -= l1 * v1[i] * v1[j];
        }
    }
    let (mut v2, l2) = power_iteration(&cov, d, std::slice::from_ref(&v1));
    fix_sign(&mut v1);
    fix_sign(&mut v2);

    let scores = centred.iter().map(|r| [dot(r, &v1), dot(r, &v2)]).collect();
    Ok(Pca {
        mean,
        components: [v1, v2],
        variances: [l1, l2.max(0.0)],
        scores,
    })
}

/// Coefficient of determination of the least-squares fit
/// `y ≈ a + b·x₀ + c·x₁`.
pub fn linear_fit_r2(x: &[[f64; 2]], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 3 {
        return Err(Error::InvalidArgument(format!(
            "linear fit needs matching inputs of at least 3 samples, got {} and {}",
            x.len(),
            y.len()
        )));
    }
    let mut a = [[0.0; 4]; 3];
    for (xi, &yi) in x.iter().zip(y) {
        let f = [1.0, xi[0], xi[1]];
        for r in 0..3 {
            for c in 0..3 {
                a[r][c] += f[r] * f[c];
            }
            a[r][3] += f[r] * yi;
        }
    }
    for col in 0..3 {
        let piv = (col..3).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs())).unwrap();
        a.swap(col, piv);
        if a[col][col].abs() < 1e-300 {
            return Err(Error::InvalidArgument("linear fit is rank deficient".into()));
        }
        for r in 0..3 {
            if r != col {
                let k = a[r][col] / a[col][col];
                let pivot = a[col];
                for (x, p) in a[r][col..].iter_mut().zip(&pivot[col..]) {
                    *x -= k * p;
                }
            }
        }
    }
    let coef = [a[0][3] / a[0][0], a[1][3] / a[1][1], a[2][3] / a[2][2]];
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let ss_tot: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
    if ss_tot == 0.0 {
        return Err(Error::InvalidArgument("fit target has zero variance".into()));
    }
    let ss_res: f64 = x
        .iter()
        .zip(y)
        .map(|(xi, yi)| (yi - coef[0] - coef[1] * xi[0] - coef[2] * xi[1]).powi(2))
        .sum();
    Ok(1.0 - ss_res / ss_tot)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PcaRow {
    pub k: f64,
    pub tau1: f64,
    pub tau2: f64,
    pub theta: f64,
    pub pc1: f64,
    pub pc2: f64,
}

/// Adapts the agent on `n_tasks` sampled tasks, collects the final deep
/// hidden state of each, and projects them onto their top two principal
/// components. `fix` pins `(K, τ₁)` while the ratios stay random.
pub fn pca_hidden(
    actor: &ActorNet,
    cfg: &EpisodeConfig,
    dist: &TaskDistribution,
    n_tasks: usize,
    fix: Option<(f64, f64)>,
    adapt_time: f64,
    seed: u64,
) -> Result<(Vec<PcaRow>, Pca)> {
    if n_tasks < 3 {
        return Err(Error::InvalidArgument(format!("PCA needs at least 3 tasks, got {n_tasks}")));
    }
    let mut dist = *dist;
    if let Some((k, tau1)) = fix {
        dist.k_gain = (k, k);
        dist.tau1 = (tau1, tau1);
    }
    let steps = ((adapt_time / cfg.dt_ctrl).round() as usize).max(1);
    let cfg = EpisodeConfig {
        steps_per_episode: steps,
        ..cfg.clone()
    };
    let runs = (0..n_tasks as u64)
        .into_par_iter()
        .map(|i| -> Result<(TaskParams, Vec<f64>)> {
            let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(seed, i));
            let task = dist.sample(&mut rng);
            task.validate()?;
            let mut runner = Runner::new(Controller::Agent(actor));
            let (mut env, mut state) = runner.reset(task, &cfg)?;
            while !env.is_done() {
                state = env.step(runner.action(&state)?)?.state;
            }
            Ok((task, runner.deep_hidden().to_vec()))
        })
        .collect::<Result<Vec<_>>>()?;
    let hidden: Vec<Vec<f64>> = runs.iter().map(|(_, h)| h.clone()).collect();
    let pca = pca_top2(&hidden)?;
    let rows = runs
        .iter()
        .zip(&pca.scores)
        .map(|((t, _), s)| PcaRow {
            k: t.k_gain,
            tau1: t.tau1,
            tau2: t.tau2,
            theta: t.theta,
            pc1: s[0],
            pc2: s[1],
        })
        .collect();
    Ok((rows, pca))
}
