use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use wahls_core::benchmark::GroupSelection;
use wahls_core::dataset::Split;
use wahls_core::synth::FamilyMix;
use wahls_surrogates::ModelKind;

#[derive(Debug, Parser)]
#[command(name = "wahls", version, about = "Resource and latency surrogates for HLS-compiled neural networks")]
pub struct Cli {
    /// TOML settings file (port, host, ckpt_dir, checkpoints).
    #[arg(long, global = true, env = "WAHLS_CONFIG")]
    pub config: Option<PathBuf>,

    /// Run every data-parallel loop on the calling thread.
    #[arg(long, global = true)]
    pub sequential: bool,

    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a labeled pseudo-synthesis dataset.
    Generate(GenerateArgs),
    /// Check a dataset for schema and consistency problems.
    Validate(ValidateArgs),
    /// Train one estimator and write its checkpoint.
    Train(TrainArgs),
    /// Score a checkpoint or a prediction file on a dataset.
    Evaluate(EvaluateArgs),
    /// Print (and optionally re-render) a metrics bundle.
    Report(ReportArgs),
    /// Predict one design with a checkpoint.
    Estimate(EstimateArgs),
    /// Serve the /api/v1 HTTP endpoints.
    Serve(ServeArgs),
    /// BOPs vs target statistics for a dataset.
    Stats(StatsArgs),
    /// Print the per-layer feature layout.
    DescribeFeatures,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long, default_value_t = 2000)]
    pub n: usize,
    /// Dense, conv1d and conv2d fractions.
    #[arg(long, default_value = "0.6,0.2,0.2")]
    pub mix: FamilyMix,
    /// Output directory, or a `.jsonl` archive path.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value = "train")]
    pub split: Split,
    /// Write the exemplar sweep instead of random designs.
    #[arg(long)]
    pub exemplars: bool,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    pub path: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    /// Reduced widths sized for a single workstation.
    Desk,
    /// Full-size recipe.
    Paper,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub model: ModelKind,
    #[arg(long)]
    pub dataset: PathBuf,
    /// Validation set; when absent a tail slice of the dataset is held out.
    #[arg(long)]
    pub val: Option<PathBuf>,
    #[arg(long, default_value_t = 0.1)]
    pub val_fraction: f64,
    #[arg(long, value_enum, default_value_t = Preset::Desk)]
    pub preset: Preset,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    /// Checkpoint file; defaults to `<ckpt-dir>/<kind>-<hash12>.ckpt`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, env = "WAHLS_CKPT_DIR")]
    pub ckpt_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long, conflicts_with = "predictions", required_unless_present = "predictions")]
    pub model_ckpt: Option<PathBuf>,
    /// CSV with header `id,bram,dsp,ff,lut,cycles,ii`.
    #[arg(long)]
    pub predictions: Option<PathBuf>,
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long, default_value = "test")]
    pub split: Split,
    /// Comma list of family, tag, exemplar; or all / none.
    #[arg(long, default_value = "all")]
    pub groups: GroupSelection,
    /// Bundle output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Leave inference timing out so the bundle is reproducible byte for byte.
    #[arg(long)]
    pub no_timing: bool,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Bundle directory or its metrics.json.
    #[arg(long)]
    pub metrics: PathBuf,
    /// Re-render the bundle into this directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    /// Neutral layer list or Keras `to_json` output.
    #[arg(long, conflicts_with = "exemplar", required_unless_present = "exemplar")]
    pub arch_file: Option<PathBuf>,
    /// Exemplar model name, e.g. `Jet`.
    #[arg(long)]
    pub exemplar: Option<String>,
    /// JSON object overriding default HLS settings.
    #[arg(long)]
    pub config_file: Option<PathBuf>,
    #[arg(long)]
    pub model_ckpt: PathBuf,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, env = "WAHLS_PORT")]
    pub port: Option<u16>,
    #[arg(long)]
    pub host: Option<String>,
    /// Checkpoint to load; repeatable.
    #[arg(long = "ckpt")]
    pub ckpts: Vec<PathBuf>,
    /// Every `*.ckpt` in this directory is loaded too.
    #[arg(long, env = "WAHLS_CKPT_DIR")]
    pub ckpt_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    /// Write the per-sample scatter as CSV.
    #[arg(long)]
    pub out: Option<PathBuf>,
}
