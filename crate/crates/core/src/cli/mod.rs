//! Command-line front end. Every subcommand reads its inputs, writes plot-ready
//! CSV / JSON / JSONL into `--output-dir`, and maps failures to exit codes:
//! 0 on success, 1 for input or parse errors, 2 when the solver finds no
//! feasible motion.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

pub use commands::run;

/// Environment variable holding the log filter (`error`, `warn`, `info`, `debug`, `trace`).
pub const LOG_ENV: &str = "RETARGET_LOG";

#[derive(Debug, Parser)]
#[command(
    name = "retarget",
    version,
    about = "Gripper-trajectory retargeting and DHB invariant tools"
)]
pub struct Cli {
    /// Pipeline configuration (TOML, or JSON by extension).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Seed for randomized fixtures.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Directory for output files, created if missing.
    #[arg(long, global = true, default_value = ".")]
    pub output_dir: PathBuf,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the closed-loop retargeter; writes ticks.jsonl and summary.json.
    Retarget {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        trajectory: PathBuf,
    },
    /// DHB invariants over sliding windows; writes invariants.csv.
    Invariants {
        #[arg(long)]
        trajectory: PathBuf,
        #[arg(long, default_value_t = 10)]
        window: usize,
        /// Treat the whole trajectory as one window.
        #[arg(long)]
        single: bool,
    },
    /// Invariant-space distance between two trajectories; writes compare.json.
    Compare {
        a: PathBuf,
        b: PathBuf,
        #[arg(long, default_value_t = 10)]
        window: usize,
    },
    /// One prioritized IK step towards a gripper target; writes ik_solution.json.
    IkSolve {
        #[arg(long)]
        model: PathBuf,
        /// `x,y,z` or `x,y,z,w,qx,qy,qz`.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        target: Vec<f64>,
        /// Start configuration; the config's q0 or zeros when omitted.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        q0: Option<Vec<f64>>,
        /// Current joint velocity, zeros when omitted.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        qdot: Option<Vec<f64>>,
    },
    /// Evaluate the loss terms of an episode; writes losses.json.
    LossEval {
        #[arg(long)]
        params: PathBuf,
        #[arg(long)]
        episode: PathBuf,
    },
    /// Retarget one trajectory onto several robots; writes comparison.csv.
    CompareEmbodiments {
        #[arg(long = "model", required = true, num_args = 1)]
        models: Vec<PathBuf>,
        /// Per-model pipeline configs, in model order. Defaults to `--config`.
        #[arg(long = "model-config", num_args = 1)]
        model_configs: Vec<PathBuf>,
        #[arg(long)]
        trajectory: PathBuf,
    },
    /// Write a synthetic trajectory or loss input to `<output-dir>/<name>`.
    Fixture {
        #[arg(value_enum)]
        kind: FixtureKind,
        /// Output file name inside the output directory.
        #[arg(long)]
        name: Option<String>,
        /// Rigidly move the result.
        #[arg(long, value_enum)]
        transform: Option<TransformKind>,
        #[arg(long, default_value_t = 60)]
        samples: usize,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum FixtureKind {
    /// 0.1 m circle at 0.1 Hz, 30 s at 10 Hz, in reach of the planar3 model.
    Circle,
    Line,
    Stationary,
    Asymmetric,
    /// Dyadic polyline without rotation; exact under half-turn transforms.
    Zigzag,
    /// Seeded smooth random walk.
    RandomWalk,
    /// Seeded loss-evaluation episode.
    Episode,
    /// Seeded five-mode mixture.
    Gmm,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum TransformKind {
    /// Seeded random rotation and translation.
    Random,
    /// Half turn about z plus an integer translation.
    HalfTurn,
}

/// Parses arguments, runs, and converts the outcome to an exit code.
pub fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or(LOG_ENV, "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
