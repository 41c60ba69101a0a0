//! Parallel-form PID controller with a filtered derivative, and the
//! incremental parameter update the agent acts through.

use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};

/// Derivative filter time constant as a fraction of `τ_D` (`N = 10`).
pub const DERIVATIVE_FILTER_RATIO: f64 = 10.0;

pub const KC_BOUNDS: (f64, f64) = (0.0, 20.0);
pub const TAU_I_BOUNDS: (f64, f64) = (0.05, 50.0);
pub const TAU_D_BOUNDS: (f64, f64) = (0.0, 10.0);

/// Per-step scale applied to the raw `[-1, 1]` action components.
pub const DEFAULT_ACTION_SCALE: [f64; 3] = [0.1, 0.1, 0.05];

/// Controller gains for `u = Kc (e + ∫e/τ_I + τ_D de/dt)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PidParams {
    pub kc: f64,
    pub tau_i: f64,
    pub tau_d: f64,
}

impl PidParams {
    /// Gains every episode starts from.
    pub const INITIAL: PidParams = PidParams {
        kc: 0.05,
        tau_i: 1.0,
        tau_d: 0.2,
    };

    pub fn new(kc: f64, tau_i: f64, tau_d: f64) -> Result<Self> {
        let p = Self { kc, tau_i, tau_d };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        ensure_finite(self.kc, "pid kc")?;
        ensure_finite(self.tau_i, "pid tau_i")?;
        ensure_finite(self.tau_d, "pid tau_d")?;
        if self.kc < 0.0 || self.tau_i <= 0.0 || self.tau_d < 0.0 {
            return Err(Error::InvalidArgument(format!(
                "pid parameters out of range: {self:?}"
            )));
        }
        Ok(())
    }

    pub fn clamped(self) -> Self {
        Self {
            kc: self.kc.clamp(KC_BOUNDS.0, KC_BOUNDS.1),
            tau_i: self.tau_i.clamp(TAU_I_BOUNDS.0, TAU_I_BOUNDS.1),
            tau_d: self.tau_d.clamp(TAU_D_BOUNDS.0, TAU_D_BOUNDS.1),
        }
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.kc, self.tau_i, self.tau_d]
    }
}

impl Default for PidParams {
    fn default() -> Self {
        Self::INITIAL
    }
}

/// Integrator and derivative-filter memory.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PidState {
    pub integral: f64,
    pub d_filt: f64,
    pub e_prev: f64,
}

/// One controller update with the standard derivative filter.
pub fn pid_output(params: &PidParams, state: &PidState, e: f64, dt: f64) -> Result<(f64, PidState)> {
    pid_output_with_filter(params, state, e, dt, DERIVATIVE_FILTER_RATIO)
}

/// One controller update with derivative filter constant `τ_d / filter_ratio`.
pub fn pid_output_with_filter(
    params: &PidParams,
    state: &PidState,
    e: f64,
    dt: f64,
    filter_ratio: f64,
) -> Result<(f64, PidState)> {
    ensure_finite(e, "setpoint error")?;
    if !(dt > 0.0) {
        return Err(Error::InvalidArgument(format!("dt must be positive, got {dt}")));
    }
    let integral = state.integral + e * dt;
    let d_raw = (e - state.e_prev) / dt;
    let tau_f = params.tau_d / filter_ratio;
    let alpha = tau_f / (tau_f + dt);
    let d_filt = alpha * state.d_filt + (1.0 - alpha) * d_raw;
    let u = params.kc * (e + integral / params.tau_i + params.tau_d * d_filt);
    Ok((
        u,
        PidState {
            integral,
            d_filt,
            e_prev: e,
        },
    ))
}

/// Applies a scaled parameter change and clamps the result into the
/// admissible box.
pub fn apply_action(params: &PidParams, delta: [f64; 3], scale: [f64; 3]) -> PidParams {
    PidParams {
        kc: params.kc + scale[0] * delta[0],
        tau_i: params.tau_i + scale[1] * delta[1],
        tau_d: params.tau_d + scale[2] * delta[2],
    }
    .clamped()
}
