//! Meta-reinforcement-learning PID autotuning for second-order-plus-dead-time
//! processes.
//!
//! A recurrent policy is trained offline across a distribution of simulated
//! plants. Deployed with frozen weights, it adjusts PID gains online and its
//! hidden state performs the system identification implicitly.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod control;
pub mod env;
pub mod error;
pub mod eval;
pub mod io;
pub mod nn;
pub mod ppo;
pub mod sim;

pub use config::{RunConfig, SEED_ENV_VAR};
pub use control::{apply_action, pid_output, PidParams, PidState};
pub use env::{EpisodeConfig, PidEnv, PrivilegedVector, RlState, TaskDistribution};
pub use error::{Error, Result};
pub use eval::{eval_mse, simc_baseline, Controller, EvalProtocol, MseOutcome, TraceRow};
pub use nn::{ActorNet, Checkpoint, CriticNet, NetworkConfig};
pub use ppo::{train, TrainConfig, TrainOptions, TrainOutput, Trainer};
pub use sim::{plant_step, setpoint, PlantState, TargetTrajectory, TaskParams};
