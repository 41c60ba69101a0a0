#![allow(dead_code)]

pub mod checks;

use metatune::TaskParams;

/// Output of `K e^{-θs}/((τ₁s+1)(τ₂s+1))` for a unit step applied at
/// `t = 0`, integrated with classical RK4 at step `h` and sampled every
/// `sample` time units.
pub fn rk4_step_response(task: &TaskParams, h: f64, sample: f64, samples: usize) -> Vec<f64> {
    let u = |t: f64| if t - task.theta >= -1e-12 { 1.0 } else { 0.0 };
    let f = |t: f64, s: [f64; 2]| -> [f64; 2] {
        let dx1 = (task.k_gain * u(t) - s[0]) / task.tau1;
        let dy = (s[0] - s[1]) / task.tau2;
        [dx1, dy]
    };
    let per_sample = (sample / h).round() as usize;
    let mut s = [0.0, 0.0];
    let mut out = Vec::with_capacity(samples);
    let mut k = 0usize;
    for _ in 0..samples {
        for _ in 0..per_sample {
            let t = k as f64 * h;
            let k1 = f(t, s);
            let k2 = f(t + h / 2.0, [s[0] + h / 2.0 * k1[0], s[1] + h / 2.0 * k1[1]]);
            let k3 = f(t + h / 2.0, [s[0] + h / 2.0 * k2[0], s[1] + h / 2.0 * k2[1]]);
            let k4 = f(t + h, [s[0] + h * k3[0], s[1] + h * k3[1]]);
            for i in 0..2 {
                s[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
            k += 1;
        }
        out.push(s[1]);
    }
    out
}

/// Central finite difference of `f` along coordinate `i` of `x`.
pub fn central_diff(mut f: impl FnMut(&[f64]) -> f64, x: &[f64], i: usize, h: f64) -> f64 {
    let mut xp = x.to_vec();
    xp[i] += h;
    let fp = f(&xp);
    xp[i] = x[i] - h;
    let fm = f(&xp);
    (fp - fm) / (2.0 * h)
}

/// Relative error with a small absolute floor so that gradients which are
/// zero up to rounding compare as equal.
pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

/// Discounted return minus baseline, summed directly from the definition.
pub fn monte_carlo_advantages(costs: &[f64], values: &[f64], terminal: f64, gamma: f64) -> Vec<f64> {
    let n = costs.len();
    (0..n)
        .map(|t| {
            let mut g = 0.0;
            let mut discount = 1.0;
            for c in &costs[t..] {
                g += discount * -c;
                discount *= gamma;
            }
            g + discount * terminal - values[t]
        })
        .collect()
}
