mod commands;
mod config;

use std::fmt::Display;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use facefill::training::TrainingError;

pub const EXIT_USAGE: u8 = 1;
pub const EXIT_DATA: u8 = 2;
pub const EXIT_NUMERICAL: u8 = 3;

/// An error with the process exit code it maps to.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn usage(m: impl Display) -> Self {
        Self {
            code: EXIT_USAGE,
            message: m.to_string(),
        }
    }

    pub fn data(m: impl Display) -> Self {
        Self {
            code: EXIT_DATA,
            message: m.to_string(),
        }
    }
}

impl From<TrainingError> for Failure {
    fn from(e: TrainingError) -> Self {
        let code = if e.is_numerical() {
            EXIT_NUMERICAL
        } else if matches!(e, TrainingError::InvalidConfig(_)) {
            EXIT_USAGE
        } else {
            EXIT_DATA
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

#[derive(Parser)]
#[command(
    name = "facefill",
    version,
    about = "Synthetic scar data, mesh autoencoder training and wound-filling extraction"
)]
struct Cli {
    /// JSON run configuration; flags override its keys.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Maximum number of worker threads.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Log verbosity (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic heads, scarred variants and a manifest.
    GenData(GenDataArgs),
    /// Keep the largest component of each mesh and fill its holes.
    Preprocess(PreprocessArgs),
    /// Train the autoencoder on the train split of a dataset.
    Train(TrainArgs),
    /// Evaluate a checkpoint on one split and write per-vertex error meshes.
    Eval(EvalArgs),
    /// Extract the wound filling from an (input, output) mesh pair.
    ExtractFill(ExtractArgs),
    /// Print topology and geometry statistics of meshes.
    Stats(StatsArgs),
}

#[derive(Args)]
pub struct GenDataArgs {
    /// Output directory for meshes and manifest.json.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Number of ground-truth heads.
    #[arg(long)]
    pub count: Option<usize>,
    /// Scarred variants per head.
    #[arg(long)]
    pub scars: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Train, val and test fractions of heads.
    #[arg(long, num_args = 3, value_names = ["TRAIN", "VAL", "TEST"])]
    pub ratios: Option<Vec<f64>>,
    /// Icosphere subdivisions of each head (10*4^s+2 vertices).
    #[arg(long)]
    pub subdivisions: Option<u32>,
    /// Inclusive scar radius range in hops.
    #[arg(long, num_args = 2, value_names = ["MIN", "MAX"])]
    pub radius: Option<Vec<usize>>,
    /// Inclusive scar depth range in mean edge lengths.
    #[arg(long, num_args = 2, value_names = ["MIN", "MAX"])]
    pub depth: Option<Vec<f64>>,
}

#[derive(Args)]
pub struct PreprocessArgs {
    /// Mesh files (OBJ, PLY or STL).
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
    /// Directory for cleaned meshes; file names are kept.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
pub struct ArchArgs {
    /// Vertex fraction kept at each level, starting with 1.
    #[arg(long, num_args = 1.., value_name = "RATIO")]
    pub level_ratios: Option<Vec<f64>>,
    /// Feature width at each level, starting with 3.
    #[arg(long, num_args = 1.., value_name = "WIDTH")]
    pub widths: Option<Vec<usize>>,
    /// elu or relu.
    #[arg(long)]
    pub activation: Option<String>,
}

#[derive(Args)]
pub struct TrainArgs {
    /// Dataset manifest written by gen-data.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Checkpoint path for the best model.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// CSV file that per-epoch losses are appended to.
    #[arg(long)]
    pub metrics: Option<PathBuf>,
    #[command(flatten)]
    pub arch: ArchArgs,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub patience: Option<usize>,
    /// Stop after this many optimizer steps.
    #[arg(long)]
    pub max_steps: Option<u64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// ground-truth or input.
    #[arg(long)]
    pub loss_target: Option<String>,
    /// l2 or l1.
    #[arg(long)]
    pub loss_metric: Option<String>,
}

#[derive(Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Trained checkpoint.
    #[arg(long, conflicts_with = "identity")]
    pub checkpoint: Option<PathBuf>,
    /// Evaluate the wounded input itself (output = input).
    #[arg(long)]
    pub identity: bool,
    #[arg(long, default_value = "test")]
    pub split: String,
    /// Directory for report.json and error-colored PLYs.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
pub struct ExtractArgs {
    /// Wounded mesh given to the network.
    #[arg(long)]
    pub input: PathBuf,
    /// Reconstructed mesh.
    #[arg(long)]
    pub output: PathBuf,
    /// Directory for filling.stl, filling.ply and fill_report.json.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Outlier threshold in standard deviations.
    #[arg(long)]
    pub k_sigma: Option<f64>,
}

#[derive(Args)]
pub struct StatsArgs {
    #[arg(required = true)]
    pub meshes: Vec<PathBuf>,
    /// Reference mesh; adds vertex distance statistics for each mesh.
    #[arg(long)]
    pub against: Option<PathBuf>,
}

fn run(cli: Cli) -> Result<(), Failure> {
    let mut config = config::RunConfig::load(cli.config.as_deref())?;
    if cli.threads.is_some() {
        config.threads = cli.threads;
    }
    if let Some(n) = config.threads {
        if n == 0 {
            return Err(Failure::usage("threads must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(Failure::usage)?;
    }
    match cli.command {
        Command::GenData(a) => commands::gen_data(config, a),
        Command::Preprocess(a) => commands::preprocess(config, a),
        Command::Train(a) => commands::train(config, a),
        Command::Eval(a) => commands::eval(config, a),
        Command::ExtractFill(a) => commands::extract_fill(config, a),
        Command::Stats(a) => commands::stats(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
