//! SIMC tuning rules, converted to the parallel PID form.

use crate::control::PidParams;
use crate::error::{Error, Result};
use crate::sim::{closed_loop_tau, TaskParams};

/// Series gains `(Kc, τ_I, τ_D)` from the SIMC rules with `τ_c = τ_cl`.
pub fn simc_series(task: &TaskParams) -> Result<[f64; 3]> {
    task.validate()?;
    if task.k_gain == 0.0 {
        return Err(Error::InvalidArgument("process gain K = 0 has no SIMC tuning".into()));
    }
    let lag = closed_loop_tau(task) + task.theta;
    let kc = task.tau1 / (task.k_gain * lag);
    let tau_i = task.tau1.min(4.0 * lag);
    Ok([kc, tau_i, task.tau2])
}

/// SIMC gains for `task` in parallel form.
pub fn simc_baseline(task: &TaskParams) -> Result<PidParams> {
    let [kc, tau_i, tau_d] = simc_series(task)?;
    let f = 1.0 + tau_d / tau_i;
    PidParams::new(kc * f, tau_i * f, tau_d / f)
}
