//! Discrete-time simulation of second-order-plus-dead-time (SOPTD) processes,
//! the square-wave setpoint schedule, and the delayed first-order target
//! trajectory the tuning cost is measured against.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};

/// Below this secondary time constant the second lag is bypassed.
pub const TAU2_FIRST_ORDER: f64 = 1e-6;

/// Default simulation resolution (time units).
pub const DT_SIM: f64 = 0.05;

/// Default setpoint half-period (time units).
pub const SETPOINT_PERIOD: f64 = 11.0;

/// Bounds of the training task distribution.
pub const GAIN_RANGE: (f64, f64) = (0.25, 1.0);
pub const TAU1_RANGE: (f64, f64) = (0.25, 1.0);

/// Slack applied when snapping accumulated times and lags onto the grid.
const GRID_EPS: f64 = 1e-9;

/// One SOPTD process `K e^{-θs} / ((τ₁s + 1)(τ₂s + 1))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TaskParams {
    pub k_gain: f64,
    pub tau1: f64,
    pub tau2: f64,
    pub theta: f64,
}

impl TaskParams {
    /// Checked constructor; enforces `τ₁ ≥ τ₂ ≥ 0`, `θ ≥ 0`, `τ₁ > 0`.
    pub fn new(k_gain: f64, tau1: f64, tau2: f64, theta: f64) -> Result<Self> {
        let task = Self {
            k_gain,
            tau1,
            tau2,
            theta,
        };
        task.validate()?;
        Ok(task)
    }

    /// Builds a task from `K`, `τ₁` and the two ratios `τ₂/τ₁`, `θ/τ₁`.
    pub fn from_ratios(k_gain: f64, tau1: f64, tau2_ratio: f64, theta_ratio: f64) -> Result<Self> {
        Self::new(k_gain, tau1, tau1 * tau2_ratio, tau1 * theta_ratio)
    }

    pub fn validate(&self) -> Result<()> {
        for (v, name) in [
            (self.k_gain, "task gain"),
            (self.tau1, "task tau1"),
            (self.tau2, "task tau2"),
            (self.theta, "task theta"),
        ] {
            ensure_finite(v, name)?;
        }
        if self.tau1 <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "tau1 must be positive, got {}",
                self.tau1
            )));
        }
        if self.tau2 < 0.0 || self.tau2 > self.tau1 {
            return Err(Error::InvalidArgument(format!(
                "need tau1 >= tau2 >= 0, got tau1={} tau2={}",
                self.tau1, self.tau2
            )));
        }
        if self.theta < 0.0 {
            return Err(Error::InvalidArgument(format!(
                "dead time must be non-negative, got {}",
                self.theta
            )));
        }
        Ok(())
    }

    pub fn tau2_ratio(&self) -> f64 {
        self.tau2 / self.tau1
    }

    pub fn theta_ratio(&self) -> f64 {
        self.theta / self.tau1
    }

    /// True when the task lies inside the training distribution.
    pub fn in_training_distribution(&self) -> bool {
        let within = |x: f64, (lo, hi): (f64, f64)| x >= lo && x <= hi;
        within(self.k_gain, GAIN_RANGE)
            && within(self.tau1, TAU1_RANGE)
            && within(self.tau2_ratio(), (0.0, 1.0))
            && within(self.theta_ratio(), (0.0, 1.0))
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.k_gain, self.tau1, self.tau2, self.theta]
    }
}

/// Internal state of a simulated plant: two cascaded lags plus an input
/// delay line sampled at the simulation resolution.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantState {
    pub x1: f64,
    pub y: f64,
    /// Past inputs, most recent first. `delay_line[j]` is the input applied
    /// `j` steps ago.
    delay_line: VecDeque<f64>,
    dt: f64,
    steps: u64,
}

impl PlantState {
    /// Zero-state plant for `task` at resolution `dt`.
    pub fn new(task: &TaskParams, dt: f64) -> Result<Self> {
        Self::with_outputs(task, dt, 0.0, 0.0)
    }

    pub fn with_outputs(task: &TaskParams, dt: f64, x1: f64, y: f64) -> Result<Self> {
        task.validate()?;
        ensure_finite(dt, "simulation step")?;
        if dt <= 0.0 {
            return Err(Error::InvalidArgument(format!("dt must be positive, got {dt}")));
        }
        if dt > task.tau1 / 5.0 + GRID_EPS {
            return Err(Error::InvalidArgument(format!(
                "dt = {dt} is too coarse for tau1 = {} (need dt <= tau1/5)",
                task.tau1
            )));
        }
        ensure_finite(x1, "plant state")?;
        ensure_finite(y, "plant state")?;
        let len = delay_len(task.theta, dt);
        Ok(Self {
            x1,
            y,
            delay_line: VecDeque::from(vec![0.0; len]),
            dt,
            steps: 0,
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Simulation time, computed from the step count so it does not drift.
    pub fn t(&self) -> f64 {
        self.steps as f64 * self.dt
    }

    pub fn delay_len(&self) -> usize {
        self.delay_line.len()
    }

    /// Resizes the delay line after an in-place change of the dead time.
    /// Recent input history is kept; new slots repeat the oldest input.
    pub fn retarget_delay(&mut self, theta: f64) {
        let len = delay_len(theta, self.dt);
        let oldest = self.delay_line.back().copied().unwrap_or(0.0);
        self.delay_line.resize(len, oldest);
    }

    /// Advances the plant by one step of length `dt` under input `u`,
    /// returning the new output.
    ///
    /// The input delay is read from the delay line with linear interpolation
    /// between slots, then held constant over the step; the two lags are
    /// integrated exactly for that held input.
    pub fn step(&mut self, task: &TaskParams, u: f64) -> Result<f64> {
        ensure_finite(u, "plant input")?;
        if !self.x1.is_finite() || !self.y.is_finite() {
            return Err(Error::NonFinite("plant state"));
        }
        let needed = delay_len(task.theta, self.dt);
        if needed != self.delay_line.len() {
            return Err(Error::InvalidArgument(format!(
                "plant delay line has {} slots but theta = {} needs {needed}",
                self.delay_line.len(),
                task.theta
            )));
        }

        self.delay_line.pop_back();
        self.delay_line.push_front(u);
        let u_d = self.delayed_input(task.theta);

        let dt = self.dt;
        let x_inf = task.k_gain * u_d;
        let a1 = (-dt / task.tau1).exp();
        let x1_next = a1 * self.x1 + (1.0 - a1) * x_inf;

        let y_next = if task.tau2 < TAU2_FIRST_ORDER {
            x1_next
        } else {
            let a2 = (-dt / task.tau2).exp();
            let coupling = lag_coupling(task.tau1, task.tau2, dt, a1, a2);
            a2 * self.y + (1.0 - a2) * x_inf + (self.x1 - x_inf) * coupling
        };

        self.x1 = x1_next;
        self.y = y_next;
        self.steps += 1;
        Ok(self.y)
    }

    fn delayed_input(&self, theta: f64) -> f64 {
        let lag = snap(theta / self.dt);
        let whole = lag.floor();
        let frac = lag - whole;
        let m = whole as usize;
        if frac == 0.0 {
            self.delay_line[m]
        } else {
            (1.0 - frac) * self.delay_line[m] + frac * self.delay_line[m + 1]
        }
    }
}

/// Response of the second lag at the end of a step to a unit initial
/// deviation of the first lag: `∫₀^dt e^{-s/τ₁} e^{-(dt-s)/τ₂} ds / τ₂`.
fn lag_coupling(tau1: f64, tau2: f64, dt: f64, a1: f64, a2: f64) -> f64 {
    if (tau1 - tau2).abs() < 1e-9 * tau1 {
        dt / tau2 * a2
    } else {
        tau1 / (tau1 - tau2) * (a1 - a2)
    }
}

fn snap(x: f64) -> f64 {
    let r = x.round();
    if (x - r).abs() < GRID_EPS {
        r
    } else {
        x
    }
}

fn delay_len(theta: f64, dt: f64) -> usize {
    snap(theta / dt).ceil() as usize + 1
}

/// Free-function form of [`PlantState::step`].
pub fn plant_step(state: &mut PlantState, task: &TaskParams, u: f64, dt: f64) -> Result<f64> {
    if !(dt > 0.0) {
        return Err(Error::InvalidArgument(format!("dt must be positive, got {dt}")));
    }
    if (dt - state.dt).abs() > GRID_EPS * state.dt {
        return Err(Error::InvalidArgument(format!(
            "plant was built for dt = {}, stepped with dt = {dt}",
            state.dt
        )));
    }
    state.step(task, u)
}

/// Square wave alternating `+1`/`-1`, starting at `+1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SetpointSchedule {
    pub period: f64,
}

impl Default for SetpointSchedule {
    fn default() -> Self {
        Self {
            period: SETPOINT_PERIOD,
        }
    }
}

impl SetpointSchedule {
    pub fn value_at(&self, t: f64) -> Result<f64> {
        if !(t >= -GRID_EPS) {
            return Err(Error::InvalidArgument(format!(
                "setpoint queried at negative time {t}"
            )));
        }
        let interval = (t / self.period + GRID_EPS).floor() as i64;
        Ok(if interval % 2 == 0 { 1.0 } else { -1.0 })
    }
}

/// Standard schedule: switches between `+1` and `-1` every 11 time units.
pub fn setpoint(t: f64) -> Result<f64> {
    SetpointSchedule::default().value_at(t)
}

/// Desired closed-loop time constant `2τ₁ + τ₂`.
pub fn closed_loop_tau(task: &TaskParams) -> f64 {
    2.0 * task.tau1 + task.tau2
}

/// One step of the first-order target filter driven by the (already
/// delayed) setpoint.
pub fn target_step(y_des: f64, y_sp_delayed: f64, tau_cl: f64, dt: f64) -> Result<f64> {
    if !(tau_cl > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "closed-loop time constant must be positive, got {tau_cl}"
        )));
    }
    let a = (-dt / tau_cl).exp();
    Ok(a * y_des + (1.0 - a) * y_sp_delayed)
}

/// The target trajectory: the setpoint schedule delayed by `θ` and passed
/// through a first-order filter with time constant `τ_cl`.
///
/// Before `t = θ` the delayed setpoint is the trajectory's initial value.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetTrajectory {
    pub value: f64,
    initial: f64,
    tau_cl: f64,
    theta: f64,
    schedule: SetpointSchedule,
}

impl TargetTrajectory {
    pub fn new(task: &TaskParams, schedule: SetpointSchedule, initial: f64) -> Self {
        Self {
            value: initial,
            initial,
            tau_cl: closed_loop_tau(task),
            theta: task.theta,
            schedule,
        }
    }

    pub fn tau_cl(&self) -> f64 {
        self.tau_cl
    }

    pub fn delayed_setpoint(&self, t: f64) -> Result<f64> {
        let lagged = t - self.theta;
        if lagged < -GRID_EPS {
            Ok(self.initial)
        } else {
            self.schedule.value_at(lagged.max(0.0))
        }
    }

    /// Advances the filter over `[t, t + dt)`, holding the delayed setpoint
    /// sampled at `t`.
    pub fn advance(&mut self, t: f64, dt: f64) -> Result<f64> {
        let sp = self.delayed_setpoint(t)?;
        self.value = target_step(self.value, sp, self.tau_cl, dt)?;
        Ok(self.value)
    }
}
