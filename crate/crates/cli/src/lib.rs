//! The `coopra` command line: one subcommand per pipeline stage plus
//! `pipeline`, which runs them all with one seed.

pub mod artifacts;
pub mod commands;
pub mod error;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use coopra_core::Direction;
use coopra_learn::ModelKind;

pub use error::{CliError, CliResult, ExitKind};

/// JSON schema of `report.json`.
pub const REPORT_SCHEMA: &str = include_str!("../schema/report.schema.json");

#[derive(Debug, Parser)]
#[command(
    name = "coopra",
    version,
    about = "Cooperative data-rate prediction from client-side indicators and cell load",
    after_help = "Environment:\n  COOPRA_THREADS  worker threads for folds, grid cells and candidates (0 = one per core)\n  RUST_LOG        log filter (default: warn)"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a scenario; writes transmissions.csv and tti_allocations.csv
    Simulate(SimulateArgs),
    /// Condense a TTI grant trace into windowed cell-load features
    Aggregate(AggregateArgs),
    /// Join transmissions with the load window preceding each transfer
    Fuse(FuseArgs),
    /// Greedy forward feature selection over client and load features
    Select(SelectArgs),
    /// Train a model on a feature set and save it
    Train(TrainArgs),
    /// Cross-validate one model on one feature set
    Evaluate(EvaluateArgs),
    /// Compare client-only, load-only and cooperative feature sets
    Compare(CompareArgs),
    /// Run every stage from a scenario config to the comparison report
    Pipeline(PipelineArgs),
    /// Fit a 95% band to (measured, predicted) pairs
    #[command(name = "gpr-band")]
    GprBand(GprBandArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Scenario config (TOML)
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides the seed in the config
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory (created if missing)
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct AggregateArgs {
    /// TTI allocation trace written by `simulate`
    #[arg(long)]
    pub tti_trace: PathBuf,
    /// Aggregation window length in milliseconds
    #[arg(long, default_value_t = 1000)]
    pub window_ms: u64,
    /// Output net_features.csv
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct FuseArgs {
    /// transmissions.csv written by `simulate`
    #[arg(long)]
    pub transmissions: PathBuf,
    /// net_features.csv written by `aggregate`
    #[arg(long)]
    pub net_features: PathBuf,
    /// Window length the net features were aggregated with
    #[arg(long, default_value_t = 1000)]
    pub window_ms: u64,
    /// Output fused.csv
    #[arg(long)]
    pub out: PathBuf,
}

/// Options shared by the commands that fit one model on fused data.
#[derive(Debug, Args)]
pub struct ModelArgs {
    /// Model kind: rf, m5, mlp or svr
    #[arg(long, value_parser = parse_model)]
    pub model: ModelKind,
    /// Transmission direction: ul or dl
    #[arg(long, value_parser = parse_direction)]
    pub direction: Direction,
    /// fused.csv written by `fuse`
    #[arg(long)]
    pub data: PathBuf,
    /// Cross-validation folds (also used by the SVR grid search)
    #[arg(long, default_value_t = 10)]
    pub cv: usize,
    /// Seed for folds and model randomness (default: the seed recorded in the data file)
    #[arg(long)]
    pub seed: Option<u64>,
    /// Hyperparameters as a JSON object overriding the defaults, e.g. '{"n_trees":50}'.
    /// Without it SVR is grid-searched on all features.
    #[arg(long)]
    pub params: Option<String>,
}

#[derive(Debug, Args)]
pub struct SelectArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Output selection.json
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Feature set: ue, net, all, @selection.json or a comma-separated list
    #[arg(long)]
    pub features: String,
    /// Output model file
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Feature set: ue, net, all, @selection.json or a comma-separated list
    #[arg(long)]
    pub features: String,
    /// Write metrics and per-fold values as JSON
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Write out-of-fold (measured, predicted) pairs as CSV
    #[arg(long)]
    pub pairs_out: Option<PathBuf>,
}

/// Options shared by `compare` and `pipeline`.
#[derive(Debug, Args)]
pub struct CompareOpts {
    /// Models to compare (comma-separated)
    #[arg(long, value_delimiter = ',', value_parser = parse_model, default_values_t = ModelKind::COMPARED.to_vec())]
    pub models: Vec<ModelKind>,
    /// Models to leave out (comma-separated)
    #[arg(long, value_delimiter = ',', value_parser = parse_model)]
    pub skip_models: Vec<ModelKind>,
    /// Cross-validation folds
    #[arg(long, default_value_t = 10)]
    pub cv: usize,
    /// Band samples per (model, feature set); 0 disables the bands
    #[arg(long, default_value_t = 50)]
    pub band_samples: usize,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    /// fused.csv written by `fuse`
    #[arg(long)]
    pub data: PathBuf,
    /// ul, dl or both
    #[arg(long, default_value = "both", value_parser = parse_directions)]
    pub direction: DirectionChoice,
    /// Output report.json
    #[arg(long)]
    pub out: PathBuf,
    /// Seed for folds and models (default: the seed recorded in the data file)
    #[arg(long)]
    pub seed: Option<u64>,
    /// Replace every record's load features with those of a random other
    /// record, making them independent of the label
    #[arg(long)]
    pub noise_control: bool,
    #[command(flatten)]
    pub opts: CompareOpts,
}

#[derive(Debug, Args)]
pub struct PipelineArgs {
    /// Scenario config (TOML)
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides the seed in the config; used by every stage
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory for all artifacts
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub opts: CompareOpts,
}

#[derive(Debug, Args)]
pub struct GprBandArgs {
    /// CSV with measured and predicted columns, e.g. from `evaluate --pairs-out`
    #[arg(long)]
    pub pairs: PathBuf,
    /// Output band.json
    #[arg(long)]
    pub out: PathBuf,
    /// Pairs the process is fitted on (random subsample above this)
    #[arg(long, default_value_t = 250)]
    pub max_points: usize,
    /// Evenly spaced points the band is sampled at
    #[arg(long, default_value_t = 50)]
    pub samples: usize,
    /// Seed for the subsample (default: the seed recorded in the pairs file)
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DirectionChoice {
    One(Direction),
    Both,
}

impl DirectionChoice {
    pub fn directions(self) -> Vec<Direction> {
        match self {
            DirectionChoice::One(d) => vec![d],
            DirectionChoice::Both => Direction::ALL.to_vec(),
        }
    }
}

fn parse_model(s: &str) -> Result<ModelKind, String> {
    s.parse::<ModelKind>()
        .ok()
        .filter(|k| ModelKind::COMPARED.contains(k))
        .ok_or_else(|| format!("unknown model {s:?} (expected rf, m5, mlp or svr)"))
}

fn parse_direction(s: &str) -> Result<Direction, String> {
    s.parse().map_err(|e: coopra_core::Error| e.to_string())
}

fn parse_directions(s: &str) -> Result<DirectionChoice, String> {
    if s.eq_ignore_ascii_case("both") {
        Ok(DirectionChoice::Both)
    } else {
        parse_direction(s).map(DirectionChoice::One)
    }
}

fn init_threads() {
    let Ok(v) = std::env::var("COOPRA_THREADS") else {
        return;
    };
    match v.trim().parse::<usize>() {
        Ok(0) => {}
        // Fails if the pool already exists (repeated in-process runs); the
        // first setting stays.
        Ok(n) => {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
        Err(_) => log::warn!("ignoring COOPRA_THREADS={v:?}: not a number"),
    }
}

/// Parses `argv` (including the program name), runs the command and returns
/// the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).try_init();
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitKind::Usage as i32 } else { 0 };
        }
    };
    init_threads();
    match commands::dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("coopra: {e}");
            e.kind as i32
        }
    }
}
