//! Deployment-time evaluation: tracking MSE after adaptation, parameter
//! grids, traces, the drift scenario, the SIMC baseline and PCA of the
//! deep hidden state.

pub mod adapt;
pub mod grid;
pub mod pca;
pub mod simc;

use serde::Serialize;

use crate::control::PidParams;
use crate::env::{EpisodeConfig, PidEnv, RlState};
use crate::error::{Error, Result};
use crate::nn::{normalize_state, ActorNet};
use crate::sim::TaskParams;

pub use adapt::{adapt_scenario, AdaptScenario, ADAPT_PHASE1, ADAPT_TAU2_AFTER};
pub use grid::{grid, Axis, GridCell, GridResult, GridSpec, GRID_HEADER};
pub use pca::{linear_fit_r2, pca_hidden, pca_top2, Pca, PcaRow, PCA_HEADER};
pub use simc::simc_baseline;

/// Plant outputs beyond this magnitude mark the closed loop unstable.
pub const INSTABILITY_LIMIT: f64 = 100.0;

pub const TRACE_HEADER: [&str; 8] = ["t", "sp", "y", "y_des", "u", "kc", "tau_i", "tau_d"];

/// Who moves the PID parameters during an evaluation run.
#[derive(Debug, Clone, Copy)]
pub enum Controller<'a> {
    /// The policy's mean action, hidden state carried across steps.
    Agent(&'a ActorNet),
    /// Constant gains, never changed.
    Fixed(PidParams),
}

impl<'a> Controller<'a> {
    /// The frozen initial policy: zero actions from the initial gains.
    pub fn zero_action() -> Self {
        Controller::Fixed(PidParams::INITIAL)
    }
}

/// Steps a controller along one run, owning the recurrent state.
pub struct Runner<'a> {
    ctrl: Controller<'a>,
    h1: Vec<f64>,
    h2: Vec<f64>,
}

impl<'a> Runner<'a> {
    pub fn new(ctrl: Controller<'a>) -> Self {
        let (h1, h2) = match ctrl {
            Controller::Agent(a) => a.initial_hidden(),
            Controller::Fixed(_) => (Vec::new(), Vec::new()),
        };
        Self { ctrl, h1, h2 }
    }

    /// Starts an environment in the deterministic evaluation state: plant
    /// at rest, gains as the controller dictates.
    pub fn reset(&self, task: TaskParams, cfg: &EpisodeConfig) -> Result<(PidEnv, RlState)> {
        let (mut env, mut state) = PidEnv::reset_with_plant(task, cfg.clone(), 0.0, 0.0)?;
        if let Controller::Fixed(p) = self.ctrl {
            env.set_pid(p)?;
            state = env.observe()?;
        }
        Ok((env, state))
    }

    pub fn action(&mut self, state: &RlState) -> Result<[f64; 3]> {
        match self.ctrl {
            Controller::Agent(actor) => {
                let out = actor.forward(&normalize_state(state), &self.h1, &self.h2)?;
                self.h1 = out.h1;
                self.h2 = out.h2;
                Ok(out.mean)
            }
            Controller::Fixed(_) => Ok([0.0; 3]),
        }
    }

    /// Latest deep hidden state (empty for fixed gains).
    pub fn deep_hidden(&self) -> &[f64] {
        &self.h2
    }
}

/// Timing of the post-adaptation MSE measurement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalProtocol {
    /// Closed-loop time granted to the agent before gains are frozen.
    pub adapt_time: f64,
    /// Length of the scored window after the setpoint step.
    pub window: f64,
}

impl Default for EvalProtocol {
    fn default() -> Self {
        Self {
            adapt_time: 44.0,
            window: 11.0,
        }
    }
}

impl EvalProtocol {
    /// Agent steps of adaptation and of scoring.
    pub fn steps(&self, cfg: &EpisodeConfig) -> Result<(usize, usize)> {
        let to_steps = |t: f64| (t / cfg.dt_ctrl).round() as usize;
        let period = cfg.setpoint_period;
        let cycles = self.adapt_time / (2.0 * period);
        if !(self.adapt_time > 0.0) || (cycles - cycles.round()).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!(
                "adaptation time {} must be a whole number of setpoint cycles ({} time units) so the scored step goes from -1 to +1",
                self.adapt_time,
                2.0 * period
            )));
        }
        if !(self.window > 0.0 && self.window <= period + 1e-9) {
            return Err(Error::InvalidArgument(format!(
                "evaluation window {} must lie in (0, {period}]",
                self.window
            )));
        }
        Ok((to_steps(self.adapt_time), to_steps(self.window)))
    }
}

/// Result of one scored run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MseOutcome {
    Stable(f64),
    /// `|y|` crossed the instability limit; `peak` is the largest `|y|` seen.
    Unstable { peak: f64 },
}

impl MseOutcome {
    pub fn mse(&self) -> Option<f64> {
        match self {
            MseOutcome::Stable(m) => Some(*m),
            MseOutcome::Unstable { .. } => None,
        }
    }

    pub fn is_unstable(&self) -> bool {
        matches!(self, MseOutcome::Unstable { .. })
    }
}

fn with_steps(cfg: &EpisodeConfig, steps: usize) -> EpisodeConfig {
    EpisodeConfig {
        steps_per_episode: steps,
        ..cfg.clone()
    }
}

/// Lets the controller adapt under the square-wave schedule, freezes the
/// gains, and scores tracking over the window following the `-1 → +1`
/// setpoint step.
pub fn eval_mse(ctrl: Controller<'_>, task: TaskParams, cfg: &EpisodeConfig, protocol: &EvalProtocol) -> Result<MseOutcome> {
    let (adapt, window) = protocol.steps(cfg)?;
    let cfg = with_steps(cfg, adapt + window);
    let mut runner = Runner::new(ctrl);
    let (mut env, mut state) = runner.reset(task, &cfg)?;
    let mut peak: f64 = 0.0;
    let mut sq = 0.0;
    for k in 0..adapt + window {
        let action = if k < adapt { runner.action(&state)? } else { [0.0; 3] };
        let out = env.step(action)?;
        state = out.state;
        peak = peak.max(out.info.y.abs());
        if !(peak <= INSTABILITY_LIMIT) || env.diverged() {
            return Ok(MseOutcome::Unstable { peak });
        }
        if k >= adapt {
            sq += (out.info.y_des - out.info.y).powi(2);
        }
    }
    Ok(MseOutcome::Stable(sq / window as f64))
}

/// Mean total episode cost of a controller over a fixed task set, from
/// rest and with deterministic actions.
pub fn evaluate_mean_cost(ctrl: Controller<'_>, tasks: &[TaskParams], cfg: &EpisodeConfig) -> Result<f64> {
    if tasks.is_empty() {
        return Err(Error::InvalidArgument("empty evaluation task set".into()));
    }
    let mut total = 0.0;
    for &task in tasks {
        let mut runner = Runner::new(ctrl);
        let (mut env, mut state) = runner.reset(task, cfg)?;
        while !env.is_done() {
            let out = env.step(runner.action(&state)?)?;
            total += out.cost;
            state = out.state;
        }
    }
    Ok(total / tasks.len() as f64)
}

/// One control-step sample of a closed-loop run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TraceRow {
    pub t: f64,
    pub sp: f64,
    pub y: f64,
    pub y_des: f64,
    pub u: f64,
    pub kc: f64,
    pub tau_i: f64,
    pub tau_d: f64,
}

impl TraceRow {
    fn capture(env: &PidEnv, sp: f64, u: f64) -> Self {
        let p = env.pid();
        Self {
            t: env.t(),
            sp,
            y: env.y(),
            y_des: env.y_des(),
            u,
            kc: p.kc,
            tau_i: p.tau_i,
            tau_d: p.tau_d,
        }
    }
}

/// Runs the controller for `duration` time units and records every
/// control step, starting with the initial sample at `t = 0`.
pub fn trace(ctrl: Controller<'_>, task: TaskParams, cfg: &EpisodeConfig, duration: f64) -> Result<Vec<TraceRow>> {
    let steps = (duration / cfg.dt_ctrl).round() as usize;
    let cfg = with_steps(cfg, steps.max(1));
    let mut runner = Runner::new(ctrl);
    let (mut env, state) = runner.reset(task, &cfg)?;
    run_traced(&mut runner, &mut env, state, steps, None)
}

/// Steps `env` for `steps` control intervals, recording rows. Stops early
/// once the instability limit is crossed. `switch` swaps the plant in place
/// before the given step index.
pub(crate) fn run_traced(
    runner: &mut Runner<'_>,
    env: &mut PidEnv,
    mut state: RlState,
    steps: usize,
    switch: Option<(usize, TaskParams)>,
) -> Result<Vec<TraceRow>> {
    let sp0 = env.config().schedule().value_at(env.t())?;
    let mut rows = vec![TraceRow::capture(env, sp0, 0.0)];
    for k in 0..steps {
        if let Some((at, task)) = switch {
            if k == at {
                env.set_task(task)?;
            }
        }
        let out = env.step(runner.action(&state)?)?;
        state = out.state;
        rows.push(TraceRow::capture(env, out.info.setpoint, out.info.u));
        if !(out.info.y.abs() <= INSTABILITY_LIMIT) {
            break;
        }
    }
    Ok(rows)
}

/// Fixed evaluation task set: `n` draws from `dist` under `seed`.
pub fn eval_tasks(dist: &crate::env::TaskDistribution, n: usize, seed: u64) -> Vec<TaskParams> {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| dist.sample(&mut rng)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn open_loop_mse_is_target_energy() {
        let task = TaskParams::new(0.5, 0.5, 0.25, 0.25).unwrap();
        let cfg = EpisodeConfig::default();
        let protocol = EvalProtocol::default();
        let off = PidParams::new(0.0, 1.0, 0.0).unwrap();
        let mse = eval_mse(Controller::Fixed(off), task, &cfg, &protocol).unwrap().mse().unwrap();

        // Independent replay of the target alone; the plant never moves.
        let (adapt, window) = protocol.steps(&cfg).unwrap();
        let mut target = crate::sim::TargetTrajectory::new(&task, cfg.schedule(), 0.0);
        let dt = cfg.dt_sim;
        let mut energy = 0.0;
        for k in 0..(adapt + window) * cfg.substeps() {
            let v = target.advance(k as f64 * dt, dt).unwrap();
            if k >= adapt * cfg.substeps() && (k + 1) % cfg.substeps() == 0 {
                energy += v * v;
            }
        }
        assert!((mse - energy / window as f64).abs() < 1e-12, "{mse} vs {}", energy / window as f64);
    }

    #[test]
    fn eval_is_deterministic() {
        let task = TaskParams::new(0.7, 0.6, 0.2, 0.1).unwrap();
        let cfg = EpisodeConfig::default();
        let a = eval_mse(Controller::zero_action(), task, &cfg, &EvalProtocol::default()).unwrap();
        let b = eval_mse(Controller::zero_action(), task, &cfg, &EvalProtocol::default()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn protocol_rejects_misaligned_horizon() {
        let p = EvalProtocol {
            adapt_time: 33.0,
            window: 11.0,
        };
        assert!(p.steps(&EpisodeConfig::default()).is_err());
    }

    #[test]
    fn unstable_loop_is_flagged() {
        let task = TaskParams::new(1.0, 0.25, 0.25, 0.25).unwrap();
        let hot = PidParams::new(20.0, 0.05, 0.0).unwrap();
        let out = eval_mse(Controller::Fixed(hot), task, &EpisodeConfig::default(), &EvalProtocol::default()).unwrap();
        assert!(out.is_unstable());
    }

    #[test]
    fn trace_rows_stride_dt_ctrl() {
        let task = TaskParams::new(0.5, 0.8, 0.1, 0.05).unwrap();
        let cfg = EpisodeConfig::default();
        let rows = trace(Controller::zero_action(), task, &cfg, 22.0).unwrap();
        assert_eq!(rows.len(), 221);
        for w in rows.windows(2) {
            assert!((w[1].t - w[0].t - cfg.dt_ctrl).abs() < 1e-9);
        }
    }
}
