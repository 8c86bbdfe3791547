use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

/// Environment variable naming the default output root.
pub const OUTPUT_ROOT_ENV: &str = "TAGASC_OUTPUT_ROOT";

#[derive(Debug, Parser)]
#[command(
    name = "tagasc",
    version,
    about = "Tag-fused acoustic scene classification pipeline"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset with scene-dependent tag vectors.
    Synth(SynthArgs),
    /// Train a backbone (with optional tag fusion) and save a checkpoint.
    Train(TrainArgs),
    /// Write infer-mode codes for one split.
    Extract(ExtractArgs),
    /// Fit the one-vs-rest SVM back end on a codes file.
    FitSvm(FitSvmArgs),
    /// Score a checkpoint + SVM on the test split.
    Eval(EvalArgs),
    /// Run a fusion grid mirroring one of the reference tables.
    Grid(GridArgs),
    /// Finite-difference gradient checks.
    Gradcheck(GradcheckArgs),
    /// Summarize a checkpoint, SVM model, codes file, WAV or dataset.
    Inspect(InspectArgs),
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Flat `key = value` config file; keys mirror the long flag names.
    #[arg(long)]
    pub config: Option<PathBuf>,

    /// Output directory. Defaults to `$TAGASC_OUTPUT_ROOT/<command>`.
    #[arg(long, short)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[command(flatten)]
    pub common: Common,

    /// JSON file with synthetic-dataset parameters; omitted fields keep
    /// their defaults.
    #[arg(long)]
    pub spec: Option<PathBuf>,

    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Scale {
    Desk,
    Full,
}

impl std::str::FromStr for Scale {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "desk" => Ok(Scale::Desk),
            "full" => Ok(Scale::Full),
            _ => Err("expected 'desk' or 'full'".into()),
        }
    }
}

#[derive(Debug, Clone, Default, Args)]
pub struct ModelArgs {
    #[arg(long)]
    pub fusion: Option<String>,
    #[arg(long)]
    pub heads: Option<usize>,
    #[arg(long)]
    pub layers: Option<usize>,
    #[arg(long = "layers-concat")]
    pub layers_concat: Option<usize>,
    #[arg(long = "layers-att")]
    pub layers_att: Option<usize>,
    /// Width of hidden transform layers.
    #[arg(long)]
    pub hidden: Option<usize>,
    #[arg(long)]
    pub scale: Option<Scale>,
    #[arg(long)]
    pub filters: Option<usize>,
    #[arg(long = "res-blocks")]
    pub res_blocks: Option<usize>,
    #[arg(long = "code-dim")]
    pub code_dim: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long = "batch-size")]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub optimizer: Option<String>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub mixup: Option<bool>,
    #[arg(long = "mixup-alpha")]
    pub mixup_alpha: Option<f64>,
    #[arg(long = "pre-emphasis")]
    pub pre_emphasis: Option<f64>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct SvmArgs {
    #[arg(long)]
    pub kernel: Option<String>,
    /// Kernel width; defaults to 1 / code dimension.
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub coef0: Option<f64>,
    /// Soft-margin penalty C.
    #[arg(long = "c")]
    pub c: Option<f64>,
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long = "max-passes")]
    pub max_passes: Option<usize>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: Common,
    /// Dataset directory.
    #[arg(long)]
    pub data: PathBuf,
    #[command(flatten)]
    pub model: ModelArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Args)]
pub struct ExtractArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_enum, default_value = "train")]
    pub split: Split,
    #[arg(long = "pre-emphasis")]
    pub pre_emphasis: Option<f64>,
}

#[derive(Debug, Args)]
pub struct FitSvmArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub codes: PathBuf,
    /// Number of scene classes; defaults to the largest label + 1.
    #[arg(long)]
    pub classes: Option<usize>,
    #[command(flatten)]
    pub svm: SvmArgs,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub svm: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long = "pre-emphasis")]
    pub pre_emphasis: Option<f64>,
}

#[derive(Debug, Args)]
pub struct GridArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub mirror: String,
    #[arg(long)]
    pub data: PathBuf,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub svm: SvmArgs,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    #[arg(long, default_value = "ops")]
    pub scope: Vec<String>,
    /// Breaks the backward rule of the named op (negative control).
    #[arg(long, hide = true)]
    pub corrupt: Option<String>,
}

#[derive(Debug, Args)]
pub struct InspectArgs {
    pub path: PathBuf,
}
