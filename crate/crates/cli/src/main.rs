mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use config::{ConfigFile, Format};
use error::CliError;

#[derive(Parser, Debug)]
#[command(
    name = "grmc",
    version,
    about = "Graph-regularized completion of sensor network matrices"
)]
struct Cli {
    #[command(flatten)]
    global: GlobalFlags,

    /// TOML file with defaults for any option; flags take precedence. Run
    /// manifests can be passed here to replay a run.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Serialize)]
struct GlobalFlags {
    /// Seed for every random choice of the run.
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,

    /// Directory receiving all outputs.
    #[arg(long, global = true, env = "GRMC_OUTPUT_DIR")]
    #[serde(skip_serializing_if = "Option::is_none")]
    output_dir: Option<PathBuf>,

    /// Format of the summary printed to stdout.
    #[arg(long, global = true, value_parser = parse_format)]
    #[serde(skip_serializing_if = "Option::is_none")]
    format: Option<Format>,
}

fn parse_format(s: &str) -> Result<Format, String> {
    match s {
        "text" => Ok(Format::Text),
        "json" => Ok(Format::Json),
        _ => Err(format!("unknown format {s:?} (expected text|json)")),
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic station network.
    Synth(SynthFlags),
    /// Load a dataset and report its shape, coverage and gap-free weeks.
    IngestCheck(DatasetFlags),
    /// Build a spatial or temporal graph and write its edge list.
    #[command(subcommand)]
    Graph(GraphCommand),
    /// Generate a synthetic holdout mask.
    Mask(MaskFlags),
    /// Complete a dataset with one method, optionally scoring a mask.
    Complete(Box<CompleteFlags>),
    /// Randomized hyperparameter search with Monte Carlo cross-validation.
    Tune(ExperimentFlags),
    /// Compare every method on the same test folds.
    Benchmark(ExperimentFlags),
    /// Evaluate GRALS under the ablation constraints.
    Ablate(ExperimentFlags),
}

#[derive(Subcommand, Debug)]
enum GraphCommand {
    /// K-nearest-neighbor graph over stations.
    Spatial(SpatialFlags),
    /// Lag graph over the time axis.
    Temporal(TemporalFlags),
}

// The flag structs mirror the resolved configs in `config`; absent flags
// are skipped so the config file or default applies.

#[derive(Args, Debug, Serialize)]
struct SynthFlags {
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    stations: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    weeks: Option<usize>,
}

#[derive(Args, Debug, Serialize)]
struct DatasetFlags {
    /// Observations CSV (timestamp,station_id,temperature_c).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    observations: Option<PathBuf>,
    /// Station metadata CSV (station_id,latitude,longitude,altitude_m).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    stations: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
struct SpatialFlags {
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    stations: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    k: Option<usize>,
    /// Weight edges by inverse distance.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    #[serde(skip_serializing_if = "Option::is_none")]
    weighted: Option<bool>,
    /// Forbid edges whose altitude difference exceeds this many meters.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    altitude_limit: Option<f64>,
}

#[derive(Args, Debug, Serialize)]
struct TemporalFlags {
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    rows: Option<usize>,
    /// Comma-separated lags, e.g. 1,2,3.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    lags: Option<String>,
    /// unit or inverse.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    weights: Option<String>,
}

#[derive(Args, Debug, Serialize)]
struct MaskFlags {
    #[command(flatten)]
    #[serde(flatten)]
    data: DatasetFlags,
    /// block or spread.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    scenario: Option<String>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    fraction: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    min_len: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    max_len: Option<usize>,
    /// Restrict the mask to this week (ordinal of the 1009-row slice).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    week: Option<usize>,
}

#[derive(Args, Debug, Serialize)]
struct CompleteFlags {
    #[command(flatten)]
    #[serde(flatten)]
    data: DatasetFlags,
    /// Mask CSV; its entries are hidden from the solver and scored.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    mask: Option<PathBuf>,
    /// grals, softimpute, idw, pca or mean.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    method: Option<String>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    rank: Option<usize>,
    #[arg(long = "lambda-L", alias = "lambda-l")]
    #[serde(skip_serializing_if = "Option::is_none")]
    lambda_l: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    lambda_a: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    lambda_b: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    k: Option<usize>,
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    #[serde(skip_serializing_if = "Option::is_none")]
    weighted: Option<bool>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    altitude_limit: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    lags: Option<String>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    lag_weights: Option<String>,
    /// Use an empty spatial graph.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    #[serde(skip_serializing_if = "Option::is_none")]
    no_spatial: Option<bool>,
    /// Use an empty temporal graph.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    #[serde(skip_serializing_if = "Option::is_none")]
    no_temporal: Option<bool>,
    /// SoftImpute shrinkage.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    lambda: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pca_rank: Option<usize>,
    /// IDW distance power.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    power: Option<f64>,
    /// Outer iterations (GRALS) or iterations (SoftImpute, PCA).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    max_iter: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    tol: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    cg_tol: Option<f64>,
}

#[derive(Args, Debug, Serialize)]
struct ExperimentFlags {
    #[command(flatten)]
    #[serde(flatten)]
    data: DatasetFlags,
    /// block, spread or both.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    scenario: Option<String>,
    /// Train/test boundary timestamp; without it the whole dataset is used.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    split: Option<String>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    train_weeks: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    masks_per_week_train: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    test_weeks: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    masks_per_week_test: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    fraction: Option<f64>,
    /// Number of hyperparameter combinations to sample.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    samples: Option<usize>,
    /// Hyperparameters written by `tune` (best_params.toml).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    params: Option<PathBuf>,
    /// Ablation case 1-6 (all when omitted).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    case: Option<u8>,
}

fn run(cli: Cli) -> Result<(), CliError> {
    let file = cli.config.as_deref().map(ConfigFile::load).transpose()?;
    let file = file.as_ref();
    let global = config::resolve_global(file, &cli.global)?;
    std::fs::create_dir_all(&global.output_dir).map_err(|e| {
        CliError::usage(format!(
            "cannot create output directory {}: {e}",
            global.output_dir.display()
        ))
    })?;
    match cli.command {
        Command::Synth(f) => commands::synth(&global, config::resolve(file, "synth", &f)?),
        Command::IngestCheck(f) => {
            commands::ingest_check(&global, config::resolve(file, "ingest_check", &f)?)
        }
        Command::Graph(GraphCommand::Spatial(f)) => {
            commands::graph_spatial(&global, config::resolve(file, "graph_spatial", &f)?)
        }
        Command::Graph(GraphCommand::Temporal(f)) => {
            commands::graph_temporal(&global, config::resolve(file, "graph_temporal", &f)?)
        }
        Command::Mask(f) => commands::mask(&global, config::resolve(file, "mask", &f)?),
        Command::Complete(f) => commands::complete(&global, config::resolve(file, "complete", &f)?),
        Command::Tune(f) => commands::tune(&global, config::resolve(file, "tune", &f)?),
        Command::Benchmark(f) => {
            commands::benchmark(&global, config::resolve(file, "benchmark", &f)?)
        }
        Command::Ablate(f) => commands::ablate(&global, config::resolve(file, "ablate", &f)?),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code as u8)
        }
    }
}
