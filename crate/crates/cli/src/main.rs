//! `ccm-aae`: train, evaluate and export constant-curvature adversarial
//! autoencoders.
//!
//! Exit codes: 0 on success, 1 on a runtime failure, 2 on a configuration
//! or usage error (including unreadable input files).

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use ccm_core::experiment::Task;
use ccm_core::Curvature;
use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::config::Overrides;

#[derive(Parser, Debug)]
#[command(
    name = "ccm-aae",
    version,
    about = "Adversarial autoencoders on spheres and hyperboloids"
)]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct GlobalArgs {
    /// TOML experiment configuration; flags override its values.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Base seed; every named seed is derived from it.
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,
    /// Curvature of the latent manifold, +1 or -1.
    #[arg(long, global = true, allow_hyphen_values = true, value_parser = parse_kappa)]
    kappa: Option<Curvature>,
    /// Manifold dimension d (the latent space is R^{d+1}).
    #[arg(long, global = true, value_name = "D")]
    latent_dim: Option<usize>,
    #[arg(long, global = true, value_enum)]
    task: Option<TaskArg>,
    /// Directory with the MNIST IDX files [default: $CCM_AAE_DATA].
    #[arg(long, global = true, value_name = "DIR")]
    data_dir: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum TaskArg {
    Mnist,
    Synthetic,
}

fn parse_kappa(s: &str) -> Result<Curvature, String> {
    let v: f64 = s.parse().map_err(|_| format!("`{s}` is not a number"))?;
    Curvature::new(v).map_err(|e| e.to_string())
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train a model; writes checkpoint.json and history.csv.
    Train,
    /// K-NN accuracy on the test split; writes report.csv.
    Eval(CheckpointArg),
    /// Decode prior samples; writes samples.csv.
    Sample {
        #[command(flatten)]
        checkpoint: CheckpointArg,
        /// Number of samples.
        #[arg(long, default_value_t = 16)]
        n: usize,
    },
    /// Decode a latent path; writes traversal.csv.
    Traverse {
        #[command(flatten)]
        checkpoint: CheckpointArg,
        #[arg(long, value_enum, default_value_t = Mode::Equator)]
        mode: Mode,
        #[arg(long, default_value_t = 64)]
        steps: usize,
        /// Test-set index of the geodesic start.
        #[arg(long, default_value_t = 0)]
        from: usize,
        /// Test-set index of the geodesic end.
        #[arg(long, default_value_t = 1)]
        to: usize,
    },
    /// Chart the test embeddings in 2-D; writes chart.csv.
    Project {
        #[command(flatten)]
        checkpoint: CheckpointArg,
        /// Defaults to aitoff for +1 and poincare for -1.
        #[arg(long, value_enum)]
        chart: Option<Chart>,
    },
}

#[derive(Args, Debug)]
struct CheckpointArg {
    /// Model checkpoint [default: <out>/checkpoint.json].
    #[arg(long, value_name = "PATH")]
    checkpoint: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Equator,
    Geodesic,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Chart {
    Poincare,
    Aitoff,
}

/// Failure classes mapped onto exit codes.
#[derive(Debug)]
pub enum Failure {
    Usage(anyhow::Error),
    Runtime(anyhow::Error),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 2,
            Failure::Runtime(_) => 1,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let g = cli.global;
    let flags = Overrides {
        out: g.out,
        seed: g.seed,
        kappa: g.kappa,
        latent_dim: g.latent_dim,
        task: g.task.map(|t| match t {
            TaskArg::Mnist => Task::Mnist,
            TaskArg::Synthetic => Task::Synthetic,
        }),
        data_dir: g.data_dir,
    };
    let env_data = std::env::var_os(config::DATA_ENV).map(PathBuf::from);
    let result = config::load(g.config.as_deref(), &flags, env_data)
        .map_err(Failure::Usage)
        .and_then(|cfg| match cli.command {
            Command::Train => commands::train(&cfg),
            Command::Eval(c) => commands::eval(&cfg, c.checkpoint),
            Command::Sample { checkpoint, n } => commands::sample(&cfg, checkpoint.checkpoint, n),
            Command::Traverse {
                checkpoint,
                mode,
                steps,
                from,
                to,
            } => commands::traverse(&cfg, checkpoint.checkpoint, mode, steps, from, to),
            Command::Project { checkpoint, chart } => {
                commands::project(&cfg, checkpoint.checkpoint, chart)
            }
        });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let code = f.code();
            let (Failure::Usage(e) | Failure::Runtime(e)) = f;
            eprintln!("error: {e:#}");
            ExitCode::from(code)
        }
    }
}
