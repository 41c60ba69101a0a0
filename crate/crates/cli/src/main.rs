mod spec;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use metatune::eval::{
    self, adapt::parameter_drift, AdaptScenario, Controller, EvalProtocol, GridSpec, GRID_HEADER, PCA_HEADER,
    TRACE_HEADER,
};
use metatune::io::write_csv;
use metatune::ppo::train::{CHECKPOINT_FILE, METRICS_FILE};
use metatune::{ActorNet, Checkpoint, Error, Result, RunConfig, TrainConfig, TrainOptions, SEED_ENV_VAR};

fn train_defaults() -> TrainConfig {
    TrainConfig::default()
}

#[derive(Parser)]
#[command(name = "metatune", version, about = "Meta-RL PID autotuner for SOPTD processes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train the recurrent tuner across the task distribution.
    Train(TrainArgs),
    /// Evaluate a trained checkpoint.
    #[command(subcommand)]
    Eval(EvalCommand),
    /// Print SIMC gains (parallel form) for one task.
    Baseline {
        /// Task as K=..,tau1=..,tau2=..,theta=..
        #[arg(long)]
        task: String,
    },
}

#[derive(Args)]
struct TrainArgs {
    /// Run config JSON; built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory for checkpoint.json and metrics.csv.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, env = SEED_ENV_VAR, help = format!("Run seed [config default: {}]", train_defaults().seed))]
    seed: Option<u64>,
    #[arg(long, help = format!("Total environment steps [config default: {}]", train_defaults().total_env_steps))]
    steps: Option<u64>,
    /// Worker threads; results do not depend on this.
    #[arg(long, default_value_t = 1)]
    workers: usize,
    /// Continue from the networks of this checkpoint.
    #[arg(long)]
    init_ckpt: Option<PathBuf>,
}

#[derive(Args)]
struct CkptArgs {
    /// Checkpoint to evaluate.
    #[arg(long)]
    ckpt: PathBuf,
    /// Check the checkpoint against this run config's network shapes.
    #[arg(long)]
    config: Option<PathBuf>,
    /// CSV output path.
    #[arg(long)]
    out: PathBuf,
    /// Agent time before gains are frozen and scoring starts.
    #[arg(long, default_value_t = EvalProtocol::default().adapt_time)]
    adapt_time: f64,
    /// Scored window after the -1 to +1 setpoint step.
    #[arg(long, default_value_t = EvalProtocol::default().window)]
    window: f64,
}

#[derive(Subcommand)]
enum EvalCommand {
    /// MSE over a two-parameter grid of tasks.
    Grid {
        #[command(flatten)]
        common: CkptArgs,
        /// Two of K, tau1, tau2_ratio, theta_ratio.
        #[arg(long, default_value = "K,tau1")]
        vary: String,
        #[arg(long, default_value_t = 9)]
        points: usize,
        /// Values of the other axes, e.g. tau2_ratio=0.5,theta_ratio=0.5.
        #[arg(long, default_value = "K=0.5,tau1=0.5,tau2_ratio=0.5,theta_ratio=0.5")]
        fixed: String,
        /// Score the SIMC baseline instead of the agent.
        #[arg(long)]
        simc: bool,
    },
    /// Closed-loop trace of the agent on one task.
    Trace {
        #[command(flatten)]
        common: CkptArgs,
        /// Task as K=..,tau1=..,tau2=..,theta=..
        #[arg(long)]
        task: String,
        /// Time units to simulate.
        #[arg(long, default_value_t = 44.0)]
        duration: f64,
    },
    /// Trace through a step increase of tau2 from 0.1 to 0.8.
    Adapt {
        #[command(flatten)]
        common: CkptArgs,
        /// Time units on each side of the switch.
        #[arg(long, default_value_t = AdaptScenario::default().phase_time)]
        phase_time: f64,
        /// Keep the plant unchanged (control run).
        #[arg(long)]
        no_switch: bool,
    },
    /// Principal components of the adapted deep hidden state.
    Pca {
        #[command(flatten)]
        common: CkptArgs,
        #[arg(long, default_value_t = 200)]
        tasks: usize,
        /// Pin K and tau1, e.g. K=1,tau1=1.
        #[arg(long)]
        fix: Option<String>,
        #[arg(long, env = SEED_ENV_VAR, default_value_t = 0)]
        seed: u64,
    },
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::ShapeMismatch(_) => 3,
        Error::Config { .. } | Error::InvalidArgument(_) | Error::NonFinite(_) => 2,
        _ => 1,
    }
}

fn load_config(path: &Path) -> Result<RunConfig> {
    RunConfig::load(path).map_err(|e| match e {
        Error::Io { path, source } => Error::Config {
            path: "<file>".into(),
            message: format!("cannot read config {}: {source}", path.display()),
        },
        other => other,
    })
}

fn cmd_train(args: TrainArgs) -> Result<()> {
    let mut cfg = match &args.config {
        Some(p) => load_config(p)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = args.seed {
        cfg.train.seed = seed;
    }
    if let Some(steps) = args.steps {
        cfg.train.total_env_steps = steps;
    }
    cfg.validate()?;
    let init = match &args.init_ckpt {
        Some(p) => Some(Checkpoint::load(p)?.networks()?),
        None => None,
    };
    let out = metatune::train(
        &cfg,
        TrainOptions {
            out_dir: Some(args.out.clone()),
            workers: args.workers,
            init,
            on_batch: Some(Box::new(|r| {
                eprintln!(
                    "batch {:>5}  steps {:>9}  cost {:>10.4}  value {:>10.4}  entropy {:.4}",
                    r.batch, r.env_steps, r.mean_ep_cost, r.value_loss, r.entropy
                )
            })),
        },
    )?;
    let last = out.metrics.last();
    println!(
        "trained {} batches ({} env steps); final mean episode cost {}; wrote {} and {}",
        out.metrics.len(),
        last.map_or(0, |r| r.env_steps),
        last.map_or("n/a".to_string(), |r| format!("{:.4}", r.mean_ep_cost)),
        args.out.join(CHECKPOINT_FILE).display(),
        args.out.join(METRICS_FILE).display(),
    );
    Ok(())
}

struct Loaded {
    cfg: RunConfig,
    actor: ActorNet,
    protocol: EvalProtocol,
}

fn load_ckpt(args: &CkptArgs) -> Result<Loaded> {
    let ckpt = Checkpoint::load(&args.ckpt)?;
    let (actor, critic) = ckpt.networks()?;
    if let Some(p) = &args.config {
        let cfg = load_config(p)?;
        actor.check_config(&cfg.network)?;
        critic.check_config(&cfg.network)?;
    }
    Ok(Loaded {
        cfg: ckpt.config,
        actor,
        protocol: EvalProtocol {
            adapt_time: args.adapt_time,
            window: args.window,
        },
    })
}

fn cmd_eval(cmd: EvalCommand) -> Result<()> {
    match cmd {
        EvalCommand::Grid {
            common,
            vary,
            points,
            fixed,
            simc,
        } => {
            let l = load_ckpt(&common)?;
            let spec = GridSpec {
                vary: spec::parse_axes(&vary)?,
                points,
                fixed: spec::parse_fixed(&fixed, GridSpec::default().fixed)?,
                protocol: l.protocol,
            };
            let actor = &l.actor;
            let g = eval::grid(&spec, &l.cfg.episode, |task| {
                Ok(if simc {
                    Controller::Fixed(eval::simc_baseline(task)?)
                } else {
                    Controller::Agent(actor)
                })
            })?;
            write_csv(&common.out, &GRID_HEADER, &g.cells)?;
            let (a, b) = spec.vary;
            let show = |i: Option<usize>| match i {
                Some(i) => {
                    let c = g.cells[i];
                    format!("{a}={} {b}={} mse={}", c.p1, c.p2, if c.flag == 0 { format!("{:.6}", c.mse) } else { "unstable".into() })
                }
                None => "none".into(),
            };
            println!(
                "grid {points}x{points} over ({a}, {b}): best {}; worst {}; unstable {}",
                show(g.best()),
                show(g.worst()),
                g.unstable_count()
            );
        }
        EvalCommand::Trace { common, task, duration } => {
            let l = load_ckpt(&common)?;
            let task = spec::parse_task(&task)?;
            let rows = eval::trace(Controller::Agent(&l.actor), task, &l.cfg.episode, duration)?;
            write_csv(&common.out, &TRACE_HEADER, &rows)?;
            let mse = rows.iter().map(|r| (r.y_des - r.y).powi(2)).sum::<f64>() / rows.len() as f64;
            let last = rows.last().expect("trace has an initial row");
            println!(
                "trace of {} rows to t={:.1}; tracking mse {:.6}; final gains kc={:.4} tau_i={:.4} tau_d={:.4}",
                rows.len(),
                last.t,
                mse,
                last.kc,
                last.tau_i,
                last.tau_d
            );
        }
        EvalCommand::Adapt {
            common,
            phase_time,
            no_switch,
        } => {
            let l = load_ckpt(&common)?;
            let scenario = AdaptScenario {
                phase_time,
                switch: !no_switch,
            };
            let rows = eval::adapt_scenario(Controller::Agent(&l.actor), &l.cfg.episode, &scenario)?;
            write_csv(&common.out, &TRACE_HEADER, &rows)?;
            let mid = ((phase_time / l.cfg.episode.dt_ctrl).round() as usize).min(rows.len() - 1);
            println!(
                "adapt: {} rows, tau2 {} at t={:.1}; gain drift before {:.4}, after {:.4}",
                rows.len(),
                if no_switch { "unchanged" } else { "0.1 -> 0.8" },
                scenario.switch_time(),
                parameter_drift(&rows, 0, mid),
                parameter_drift(&rows, mid, rows.len() - 1)
            );
        }
        EvalCommand::Pca { common, tasks, fix, seed } => {
            let l = load_ckpt(&common)?;
            let fix = fix.as_deref().map(spec::parse_fix).transpose()?;
            let (rows, pca) = eval::pca_hidden(
                &l.actor,
                &l.cfg.episode,
                &l.cfg.tasks,
                tasks,
                fix,
                l.protocol.adapt_time,
                seed,
            )?;
            write_csv(&common.out, &PCA_HEADER, &rows)?;
            let x: Vec<[f64; 2]> = rows.iter().map(|r| [r.pc1, r.pc2]).collect();
            let k: Vec<f64> = rows.iter().map(|r| r.k).collect();
            let r2 = match eval::linear_fit_r2(&x, &k) {
                Ok(v) => format!("{v:.4}"),
                Err(_) => "n/a (K fixed)".into(),
            };
            println!(
                "pca over {} tasks: variances ({:.4e}, {:.4e}); R^2 of K from (pc1, pc2) = {r2}",
                rows.len(),
                pca.variances[0],
                pca.variances[1]
            );
        }
    }
    Ok(())
}

fn cmd_baseline(task: &str) -> Result<()> {
    let task = spec::parse_task(task)?;
    let p = eval::simc_baseline(&task)?;
    println!(
        "Kc={:.4} tau_i={:.4} tau_d={:.4} tau_cl={:.4}",
        p.kc,
        p.tau_i,
        p.tau_d,
        metatune::sim::closed_loop_tau(&task)
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train(args) => cmd_train(args),
        Command::Eval(cmd) => cmd_eval(cmd),
        Command::Baseline { task } => cmd_baseline(&task),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
