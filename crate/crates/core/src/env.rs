//! The tuning environment: closed-loop PID control of a sampled SOPTD task,
//! where each agent action nudges the PID parameters.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::control::{apply_action, pid_output, PidParams, PidState, DEFAULT_ACTION_SCALE};
use crate::error::{Error, Result};
use crate::sim::{PlantState, SetpointSchedule, TargetTrajectory, TaskParams, DT_SIM, SETPOINT_PERIOD};

/// Standard deviation of the random initial plant state.
pub const INIT_STATE_STD: f64 = 0.1;

/// Tracking term of the cost is capped here so a destabilised loop still
/// yields a bounded per-step cost.
pub const TRACKING_COST_CAP: f64 = 100.0;

/// Beyond this output magnitude the plant is frozen for the rest of the
/// episode; the capped cost keeps accruing.
pub const DIVERGENCE_LIMIT: f64 = 1e6;

/// The five-component observation `[Kc, τ_I, τ_D, e, ∫e]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RlState {
    pub kc: f64,
    pub tau_i: f64,
    pub tau_d: f64,
    pub e: f64,
    pub ie: f64,
}

impl RlState {
    pub const DIM: usize = 5;

    pub fn as_array(&self) -> [f64; 5] {
        [self.kc, self.tau_i, self.tau_d, self.e, self.ie]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EpisodeConfig {
    pub dt_sim: f64,
    pub dt_ctrl: f64,
    pub steps_per_episode: usize,
    pub setpoint_period: f64,
    /// Weights on the absolute scaled parameter changes.
    pub beta: [f64; 3],
    pub gamma: f64,
    pub action_scale: [f64; 3],
}

impl Default for EpisodeConfig {
    fn default() -> Self {
        Self {
            dt_sim: DT_SIM,
            dt_ctrl: 0.1,
            steps_per_episode: 220,
            setpoint_period: SETPOINT_PERIOD,
            beta: [0.1; 3],
            gamma: 0.99,
            action_scale: DEFAULT_ACTION_SCALE,
        }
    }
}

impl EpisodeConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if !(self.dt_sim > 0.0) || !(self.dt_ctrl > 0.0) {
            return bad(format!("time steps must be positive: dt_sim={} dt_ctrl={}", self.dt_sim, self.dt_ctrl));
        }
        let ratio = self.dt_ctrl / self.dt_sim;
        if (ratio - ratio.round()).abs() > 1e-9 || ratio.round() < 1.0 {
            return bad(format!("dt_ctrl must be a whole multiple of dt_sim, got ratio {ratio}"));
        }
        if (self.steps_per_episode as f64) * self.dt_ctrl < 2.0 * self.setpoint_period - 1e-9 {
            return bad(format!(
                "episode of {} steps is shorter than two setpoint intervals",
                self.steps_per_episode
            ));
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return bad(format!("gamma must lie in (0, 1), got {}", self.gamma));
        }
        if self.beta.iter().chain(&self.action_scale).any(|v| !(v.is_finite() && *v >= 0.0)) {
            return bad("beta and action_scale must be finite and non-negative".into());
        }
        Ok(())
    }

    pub fn substeps(&self) -> usize {
        (self.dt_ctrl / self.dt_sim).round() as usize
    }

    pub fn schedule(&self) -> SetpointSchedule {
        SetpointSchedule {
            period: self.setpoint_period,
        }
    }
}

/// Uniform task distribution over `K`, `τ₁` and the ratios `τ₂/τ₁`, `θ/τ₁`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TaskDistribution {
    pub k_gain: (f64, f64),
    pub tau1: (f64, f64),
    pub tau2_ratio: (f64, f64),
    pub theta_ratio: (f64, f64),
}

impl Default for TaskDistribution {
    fn default() -> Self {
        Self {
            k_gain: (0.25, 1.0),
            tau1: (0.25, 1.0),
            tau2_ratio: (0.0, 1.0),
            theta_ratio: (0.0, 1.0),
        }
    }
}

impl TaskDistribution {
    /// Maps four unit-interval draws onto a task.
    pub fn from_unit(&self, u: [f64; 4]) -> TaskParams {
        let lerp = |(lo, hi): (f64, f64), x: f64| lo + (hi - lo) * x;
        let tau1 = lerp(self.tau1, u[1]);
        TaskParams {
            k_gain: lerp(self.k_gain, u[0]),
            tau1,
            tau2: tau1 * lerp(self.tau2_ratio, u[2]),
            theta: tau1 * lerp(self.theta_ratio, u[3]),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> TaskParams {
        self.from_unit([rng.random(), rng.random(), rng.random(), rng.random()])
    }
}

/// Samples one task from the training distribution.
pub fn sample_task<R: Rng + ?Sized>(rng: &mut R) -> TaskParams {
    TaskDistribution::default().sample(rng)
}

/// Training-only critic inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct PrivilegedVector {
    pub k_gain: f64,
    pub tau1: f64,
    pub tau2: f64,
    pub theta: f64,
    pub deep_hidden: Vec<f64>,
}

impl PrivilegedVector {
    pub fn task_array(&self) -> [f64; 4] {
        [self.k_gain, self.tau1, self.tau2, self.theta]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepInfo {
    pub t: f64,
    pub setpoint: f64,
    pub y: f64,
    pub y_des: f64,
    pub u: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub state: RlState,
    pub cost: f64,
    pub info: StepInfo,
    pub done: bool,
}

/// Closed-loop environment for one task.
#[derive(Debug, Clone)]
pub struct PidEnv {
    task: TaskParams,
    cfg: EpisodeConfig,
    plant: PlantState,
    pid: PidParams,
    pid_state: PidState,
    target: TargetTrajectory,
    ie: f64,
    steps: usize,
    last_u: f64,
    diverged: bool,
}

impl PidEnv {
    /// Resets with the plant state drawn from `N(0, 0.1²)`.
    pub fn reset<R: Rng + ?Sized>(task: TaskParams, cfg: EpisodeConfig, rng: &mut R) -> Result<(Self, RlState)> {
        let normal = Normal::new(0.0, INIT_STATE_STD).expect("valid normal");
        let x1 = normal.sample(rng);
        let y = normal.sample(rng);
        Self::reset_with_plant(task, cfg, x1, y)
    }

    /// Resets from an explicit initial plant state.
    pub fn reset_with_plant(task: TaskParams, cfg: EpisodeConfig, x1: f64, y: f64) -> Result<(Self, RlState)> {
        cfg.validate()?;
        let plant = PlantState::with_outputs(&task, cfg.dt_sim, x1, y)?;
        let target = TargetTrajectory::new(&task, cfg.schedule(), 0.0);
        let env = Self {
            task,
            cfg,
            plant,
            pid: PidParams::INITIAL,
            pid_state: PidState::default(),
            target,
            ie: 0.0,
            steps: 0,
            last_u: 0.0,
            diverged: false,
        };
        let state = env.observe()?;
        Ok((env, state))
    }

    pub fn task(&self) -> &TaskParams {
        &self.task
    }

    pub fn config(&self) -> &EpisodeConfig {
        &self.cfg
    }

    pub fn pid(&self) -> PidParams {
        self.pid
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn t(&self) -> f64 {
        self.plant.t()
    }

    pub fn y(&self) -> f64 {
        self.plant.y
    }

    pub fn y_des(&self) -> f64 {
        self.target.value
    }

    pub fn diverged(&self) -> bool {
        self.diverged
    }

    pub fn is_done(&self) -> bool {
        self.steps >= self.cfg.steps_per_episode
    }

    /// Overrides the controller gains (baseline evaluation, frozen tuning).
    pub fn set_pid(&mut self, params: PidParams) -> Result<()> {
        params.validate()?;
        self.pid = params;
        Ok(())
    }

    /// Swaps the plant parameters in place, keeping every piece of state.
    pub fn set_task(&mut self, task: TaskParams) -> Result<()> {
        task.validate()?;
        if task.tau1 < 5.0 * self.cfg.dt_sim - 1e-9 {
            return Err(Error::InvalidArgument(format!(
                "tau1 = {} is too small for dt_sim = {}",
                task.tau1, self.cfg.dt_sim
            )));
        }
        self.plant.retarget_delay(task.theta);
        let value = self.target.value;
        self.target = TargetTrajectory::new(&task, self.cfg.schedule(), 0.0);
        self.target.value = value;
        self.task = task;
        Ok(())
    }

    /// Current observation.
    pub fn observe(&self) -> Result<RlState> {
        let sp = self.cfg.schedule().value_at(self.plant.t())?;
        Ok(RlState {
            kc: self.pid.kc,
            tau_i: self.pid.tau_i,
            tau_d: self.pid.tau_d,
            e: sp - self.plant.y,
            ie: self.ie,
        })
    }

    pub fn privileged(&self, deep_hidden: &[f64]) -> PrivilegedVector {
        PrivilegedVector {
            k_gain: self.task.k_gain,
            tau1: self.task.tau1,
            tau2: self.task.tau2,
            theta: self.task.theta,
            deep_hidden: deep_hidden.to_vec(),
        }
    }

    /// Applies a parameter change, then runs the closed loop for one
    /// control interval.
    pub fn step(&mut self, action: [f64; 3]) -> Result<StepOutcome> {
        if self.is_done() {
            return Err(Error::EpisodeTerminated(self.steps));
        }
        if action.iter().any(|a| !a.is_finite()) {
            return Err(Error::NonFinite("action"));
        }
        let action = action.map(|a| a.clamp(-1.0, 1.0));
        self.pid = apply_action(&self.pid, action, self.cfg.action_scale);

        let schedule = self.cfg.schedule();
        let dt = self.cfg.dt_sim;
        for _ in 0..self.cfg.substeps() {
            let t = self.plant.t();
            if !self.diverged {
                let e = schedule.value_at(t)? - self.plant.y;
                let (u, pid_state) = pid_output(&self.pid, &self.pid_state, e, dt)?;
                self.pid_state = pid_state;
                self.last_u = u;
                self.plant.step(&self.task, u)?;
                if !(self.plant.y.abs() <= DIVERGENCE_LIMIT) || !u.is_finite() {
                    self.diverged = true;
                }
            } else {
                self.plant.step(&self.task, 0.0).ok();
            }
            self.target.advance(t, dt)?;
        }
        self.steps += 1;

        let mut state = self.observe()?;
        if self.diverged {
            state.e = state.e.clamp(-DIVERGENCE_LIMIT, DIVERGENCE_LIMIT);
        }
        self.ie += state.e * self.cfg.dt_ctrl;
        state.ie = self.ie;

        let tracking = (self.target.value - self.plant.y).powi(2).min(TRACKING_COST_CAP);
        let tracking = if tracking.is_nan() { TRACKING_COST_CAP } else { tracking };
        let regularization: f64 = (0..3)
            .map(|i| self.cfg.beta[i] * (action[i] * self.cfg.action_scale[i]).abs())
            .sum();

        Ok(StepOutcome {
            state,
            cost: tracking + regularization,
            info: StepInfo {
                t: self.plant.t(),
                setpoint: schedule.value_at(self.plant.t())?,
                y: self.plant.y,
                y_des: self.target.value,
                u: self.last_u,
            },
            done: self.is_done(),
        })
    }
}

/// Cost of one step given the tracking error and the raw action.
pub fn step_cost(tracking_error: f64, action: [f64; 3], cfg: &EpisodeConfig) -> f64 {
    tracking_error.powi(2).min(TRACKING_COST_CAP)
        + (0..3)
            .map(|i| cfg.beta[i] * (action[i] * cfg.action_scale[i]).abs())
            .sum::<f64>()
}
