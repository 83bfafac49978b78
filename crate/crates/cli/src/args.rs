use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "hsnc", version, about = "Hyperspectral neural codec: train, compress, evaluate and probe")]
pub struct Cli {
    /// Force single-threaded numerics (also `HSNC_DETERMINISTIC=1`).
    #[arg(long, global = true)]
    pub deterministic: bool,

    /// Log progress to stderr.
    #[arg(short, long, global = true)]
    pub verbose: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset of tiles and L2 products.
    Synth(SynthArgs),
    /// Fit radiance statistics and L2 normalizers over a file list.
    Stats(StatsArgs),
    /// Train the unsupervised VAE.
    TrainVae(TrainArgs),
    /// Train the VAE jointly with the per-product heads.
    TrainSupervised(TrainArgs),
    /// Compress raw tiles into latent files.
    Encode(EncodeArgs),
    /// Reconstruct raw tiles from latent files.
    Decode(DecodeArgs),
    /// Compress, reconstruct and score a set of tiles.
    EvalRecon(EvalReconArgs),
    /// Fit linear and MLP probes on frozen latent means.
    TrainProbes(ProbeArgs),
    /// Merge run outputs into plot-ready CSV and JSON.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct Common {
    /// JSON config; fields override the defaults shown by `--print-config`.
    #[arg(long)]
    pub config: Option<PathBuf>,

    /// Print the merged config as JSON and exit.
    #[arg(long)]
    pub print_config: bool,

    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub count: Option<usize>,
    #[arg(long)]
    pub channels: Option<usize>,
    #[arg(long)]
    pub tile: Option<usize>,
}

#[derive(Debug, Args)]
pub struct FileList {
    /// Comma-separated tile ids or paths.
    #[arg(long, value_delimiter = ',', conflicts_with = "files_from")]
    pub files: Vec<String>,

    /// Text file with one tile id or path per line.
    #[arg(long)]
    pub files_from: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    #[command(flatten)]
    pub common: Common,
    /// Directory of `.tile` / `.l2` files.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[command(flatten)]
    pub list: FileList,
    #[arg(long, value_delimiter = ',')]
    pub products: Option<Vec<String>>,
    #[arg(long)]
    pub pool_factor: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    Full,
    Desk,
    Tiny,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Starting point for the model and optimizer settings.
    #[arg(long, value_enum, default_value = "desk")]
    pub preset: Preset,
    /// Normalization JSON from `hsnc stats`; fitted on the train split if absent.
    #[arg(long)]
    pub stats: Option<PathBuf>,
    #[arg(long)]
    pub resume: Option<PathBuf>,
    #[arg(long)]
    pub steps: Option<u64>,
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DtypeArg {
    F32,
    F16,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ContentArg {
    Mean,
    MeanLogvar,
}

#[derive(Debug, Args)]
pub struct CodecArgs {
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Radiance stats or normalization JSON; defaults to the checkpoint's own.
    #[arg(long)]
    pub stats: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub dtype: Option<DtypeArg>,
    #[arg(long, value_enum)]
    pub content: Option<ContentArg>,
}

#[derive(Debug, Args)]
pub struct EncodeArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub codec: CodecArgs,
    /// A tile file, or a directory of them.
    #[arg(long = "in")]
    pub input: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DecodeArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub codec: CodecArgs,
    /// A latent file, or a directory of them.
    #[arg(long = "in")]
    pub input: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalReconArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub codec: CodecArgs,
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[command(flatten)]
    pub list: FileList,
}

#[derive(Debug, Args)]
pub struct ProbeArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Normalization JSON providing the L2 normalizers.
    #[arg(long)]
    pub stats: Option<PathBuf>,
    #[command(flatten)]
    pub list: FileList,
    #[arg(long, value_delimiter = ',')]
    pub products: Option<Vec<String>>,
    #[arg(long, value_delimiter = ',')]
    pub kinds: Option<Vec<String>>,
    #[arg(long)]
    pub max_epochs: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[command(flatten)]
    pub common: Common,
    /// Run directories to merge.
    #[arg(long, value_delimiter = ',')]
    pub runs: Vec<PathBuf>,
}
