//! Online adaptation to a change of the secondary time constant.

use super::{run_traced, Controller, Runner, TraceRow};
use crate::env::EpisodeConfig;
use crate::error::Result;
use crate::sim::TaskParams;

/// The system the agent tunes before the switch.
pub const ADAPT_PHASE1: TaskParams = TaskParams {
    k_gain: 0.5,
    tau1: 0.8,
    tau2: 0.1,
    theta: 0.05,
};

/// `τ₂` after the switch.
pub const ADAPT_TAU2_AFTER: f64 = 0.8;

#[derive(Debug, Clone, PartialEq)]
pub struct AdaptScenario {
    /// Time units per phase.
    pub phase_time: f64,
    /// When false the plant is left unchanged, giving a control run.
    pub switch: bool,
}

impl Default for AdaptScenario {
    fn default() -> Self {
        Self {
            phase_time: 44.0,
            switch: true,
        }
    }
}

impl AdaptScenario {
    pub fn switch_time(&self) -> f64 {
        self.phase_time
    }
}

/// Runs the controller on the first system, then raises `τ₂` in place with
/// gains and hidden state carried over. Returns both phases as one trace.
pub fn adapt_scenario(ctrl: Controller<'_>, cfg: &EpisodeConfig, scenario: &AdaptScenario) -> Result<Vec<TraceRow>> {
    let phase = (scenario.phase_time / cfg.dt_ctrl).round() as usize;
    let cfg = EpisodeConfig {
        steps_per_episode: 2 * phase,
        ..cfg.clone()
    };
    let after = TaskParams::new(ADAPT_PHASE1.k_gain, ADAPT_PHASE1.tau1, ADAPT_TAU2_AFTER, ADAPT_PHASE1.theta)?;
    let mut runner = Runner::new(ctrl);
    let (mut env, state) = runner.reset(ADAPT_PHASE1, &cfg)?;
    let switch = scenario.switch.then_some((phase, after));
    run_traced(&mut runner, &mut env, state, 2 * phase, switch)
}

/// Total absolute change of the gains between two trace indices.
pub fn parameter_drift(rows: &[TraceRow], from: usize, to: usize) -> f64 {
    rows[from..=to]
        .windows(2)
        .map(|w| (w[1].kc - w[0].kc).abs() + (w[1].tau_i - w[0].tau_i).abs() + (w[1].tau_d - w[0].tau_d).abs())
        .sum()
}
