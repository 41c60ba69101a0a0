use crate::error::{Error, Result};

/// Generalised advantage estimation over one episode of costs.
///
/// Rewards are `-cost`. The episode is bootstrapped with `terminal_value`
/// after its last step. Returns `(advantages, returns)` with
/// `returns[t] = advantages[t] + values[t]`.
pub fn compute_gae(
    costs: &[f64],
    values: &[f64],
    terminal_value: f64,
    gamma: f64,
    lambda: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if costs.len() != values.len() {
        return Err(Error::DimensionMismatch {
            context: "gae values",
            expected: costs.len(),
            actual: values.len(),
        });
    }
    let n = costs.len();
    let mut adv = vec![0.0; n];
    let mut next_adv = 0.0;
    let mut next_value = terminal_value;
    for t in (0..n).rev() {
        let delta = -costs[t] + gamma * next_value - values[t];
        next_adv = delta + gamma * lambda * next_adv;
        adv[t] = next_adv;
        next_value = values[t];
    }
    let returns = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    Ok((adv, returns))
}

/// Shifts and scales to zero mean, unit variance (population statistics).
pub fn normalize_advantages(adv: &mut [f64]) {
    if adv.is_empty() {
        return;
    }
    let n = adv.len() as f64;
    let mean = adv.iter().sum::<f64>() / n;
    let var = adv.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt().max(1e-8);
    adv.iter_mut().for_each(|a| *a = (*a - mean) / std);
}
