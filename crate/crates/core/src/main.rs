use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use fogsim::experiment::{self, AllocatorKind, ExperimentConfig};
use fogsim::scenario::Scenario;
use fogsim::Error;

#[derive(Parser)]
#[command(
    name = "fogsim",
    version,
    about = "Fog node resource allocation simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a learnable allocator and write its checkpoint and history.
    Train {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        allocator: Option<AllocatorKind>,
        /// Overrides the agent seed and the base scenario seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        epochs: Option<u32>,
        #[arg(long, env = "FOGSIM_OUT_DIR")]
        out: Option<PathBuf>,
    },
    /// Evaluate allocators over a workload sweep.
    Sweep {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Restricts the sweep to one allocator.
        #[arg(long)]
        allocator: Option<AllocatorKind>,
        /// Evaluates a single seed instead of the configured list.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, env = "FOGSIM_OUT_DIR")]
        out: Option<PathBuf>,
        /// Train missing checkpoints instead of failing.
        #[arg(long)]
        train: bool,
    },
    /// Exhaustive optimum for a small static instance.
    Oracle {
        instance: PathBuf,
        #[arg(long)]
        json: bool,
    },
    /// Run a stored scenario with one allocator and write per-task results.
    Replay {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "ora")]
        allocator: AllocatorKind,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Per-task CSV destination; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a generated scenario file.
    Generate {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the default configuration as JSON.
    DefaultConfig,
}

fn load_config(path: Option<&PathBuf>) -> Result<ExperimentConfig, Error> {
    match path {
        Some(p) => ExperimentConfig::load(p),
        None => Ok(ExperimentConfig::default()),
    }
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::InvalidConfig(_)
        | Error::InvalidCapacity(_)
        | Error::Parse(_)
        | Error::Json(_)
        | Error::DimensionMismatch { .. } => 2,
        Error::MissingArtifact(_) => 3,
        Error::InstanceTooLarge(_) => 4,
        _ => 1,
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Train {
            config,
            allocator,
            seed,
            epochs,
            out,
        } => {
            let mut cfg = load_config(config.as_ref())?;
            if let Some(s) = seed {
                cfg.agent.seed = s;
                cfg.scenario.seed = s;
            }
            if let Some(e) = epochs {
                cfg.agent.epochs = e;
            }
            if let Some(o) = out {
                cfg.output_dir = o;
            }
            let kind = allocator.unwrap_or(cfg.allocator);
            if !kind.is_learnable() {
                return Err(Error::InvalidConfig(format!("{kind} has nothing to train")).into());
            }
            let res = experiment::cmd_train(&cfg, kind)?;
            let tail = res.epochs.len().div_ceil(10);
            let last: f64 = res
                .epochs
                .iter()
                .rev()
                .take(tail)
                .map(|e| e.mean_reward)
                .sum::<f64>()
                / tail.max(1) as f64;
            println!(
                "trained {kind}: {} epochs, last-10% mean reward {last:.4}",
                res.epochs.len()
            );
            println!("checkpoint {}", res.checkpoint.display());
            println!("history {}", res.history.display());
        }
        Command::Sweep {
            config,
            allocator,
            seed,
            out,
            train,
        } => {
            let mut cfg = load_config(config.as_ref())?;
            if let Some(k) = allocator {
                cfg.allocators = vec![k];
            }
            if let Some(s) = seed {
                cfg.seeds = vec![s];
            }
            if let Some(o) = out {
                cfg.output_dir = o;
            }
            cfg.train_on_the_fly |= train;
            let (result, path) = experiment::cmd_sweep(&cfg)?;
            for a in &result.aggregates {
                println!(
                    "{}={} {:<9} D={:.4}±{:.4} drop={:.3}",
                    result.variable.as_str(),
                    a.value,
                    a.allocator.as_str(),
                    a.total_s.mean,
                    a.total_s.std,
                    a.drop_rate.mean
                );
            }
            println!("wrote {}", path.display());
        }
        Command::Oracle { instance, json } => {
            let res = experiment::cmd_oracle(&instance)?;
            if json {
                println!("{}", serde_json::to_string_pretty(&res)?);
            } else {
                for (id, g) in res.task_ids.iter().zip(&res.grants) {
                    println!("task {id}: x={} y={}", g.blocks, g.units);
                }
                println!("objective {}", res.objective_s);
            }
        }
        Command::Replay {
            scenario,
            config,
            allocator,
            checkpoint,
            seed,
            out,
        } => {
            let cfg = load_config(config.as_ref())?;
            let report =
                experiment::cmd_replay(&cfg, &scenario, allocator, checkpoint.as_deref(), seed)?;
            match out {
                Some(p) => {
                    report.save_csv(&p)?;
                    eprintln!(
                        "mean delay {:.6} s, drops {}, wrote {}",
                        report.mean_total_s,
                        report.drop_count,
                        p.display()
                    );
                }
                None => report.write_csv(std::io::stdout().lock())?,
            }
        }
        Command::Generate { config, seed, out } => {
            let mut cfg = load_config(config.as_ref())?;
            if let Some(s) = seed {
                cfg.scenario.seed = s;
            }
            let sc = Scenario::generate(&cfg.scenario, cfg.system_capacity()?)?;
            sc.write_to(&out)?;
        }
        Command::DefaultConfig => println!("{}", ExperimentConfig::default().to_json()),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let code = e.downcast_ref::<Error>().map(exit_code).unwrap_or(1);
            ExitCode::from(code)
        }
    }
}
