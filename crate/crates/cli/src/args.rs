use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use gglink_core::encoder::EncoderKind;
use gglink_core::graph::NeighborMode;
use gglink_core::sampling::{DEFAULT_TEST_FRAC, DEFAULT_VAL_FRAC};
use gglink_core::training::{DecoderChoice, StopMetric, TrainConfig};

#[derive(Debug, Parser)]
#[command(
    name = "gglink",
    version,
    about = "Directed link prediction with GraphSAGE and a gravity decoder"
)]
pub struct Cli {
    /// Only print warnings and errors.
    #[arg(short, long, global = true)]
    pub quiet: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Hold out validation and test edges and write a split directory.
    Split(SplitArgs),
    /// Train on a split directory; writes a checkpoint and a report.
    Train(TrainArgs),
    /// Score the test edges of a split with a checkpoint.
    Eval(EvalArgs),
    /// Resampled k-fold cross-validation from raw CSV files.
    Crossval(CrossvalArgs),
}

#[derive(Debug, Clone, Copy, Default, ValueEnum)]
pub enum PrecisionArg {
    #[default]
    F64,
    F32,
}

impl From<PrecisionArg> for gglink_core::graph::Precision {
    fn from(p: PrecisionArg) -> Self {
        match p {
            PrecisionArg::F64 => gglink_core::graph::Precision::F64,
            PrecisionArg::F32 => gglink_core::graph::Precision::F32,
        }
    }
}

#[derive(Debug, Args)]
pub struct InputArgs {
    /// Edge list CSV (`src,dst` per line, optional header).
    pub edges: PathBuf,
    /// Node feature CSV; identity features when omitted.
    pub features: Option<PathBuf>,
    /// Densify arbitrary integer ids and write `id_map.csv` to the output directory.
    #[arg(long)]
    pub remap_ids: bool,
    /// Storage precision for feature values.
    #[arg(long, value_enum, default_value_t = PrecisionArg::F64)]
    pub precision: PrecisionArg,
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long, default_value_t = DEFAULT_VAL_FRAC)]
    pub val: f64,
    #[arg(long, default_value_t = DEFAULT_TEST_FRAC)]
    pub test: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

/// Hyperparameter flags; each overrides the config file when given.
#[derive(Debug, Default, Args)]
pub struct HyperArgs {
    /// TOML file with `TrainConfig` fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub decoder: Option<DecoderChoice>,
    #[arg(long)]
    pub encoder: Option<EncoderKind>,
    #[arg(long)]
    pub neighbor_mode: Option<NeighborMode>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long = "lr")]
    pub learning_rate: Option<f64>,
    #[arg(long = "epochs")]
    pub max_epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub hidden_dim: Option<usize>,
    #[arg(long)]
    pub embedding_dim: Option<usize>,
    #[arg(long)]
    pub patience: Option<usize>,
    #[arg(long)]
    pub stop_metric: Option<StopMetric>,
    #[arg(long)]
    pub eps_dist: Option<f64>,
    /// Keep the mass coordinate out of the final L2 normalization.
    #[arg(long)]
    pub mass_outside_norm: bool,
    /// Cap on sampled neighbors per node.
    #[arg(long)]
    pub max_neighbors: Option<usize>,
    /// Log every N-th epoch (0 disables epoch logging).
    #[arg(long, default_value_t = 10)]
    pub log_every: usize,
}

impl HyperArgs {
    pub fn apply(&self, cfg: &mut TrainConfig) {
        macro_rules! set {
            ($($field:ident),*) => {
                $(if let Some(v) = self.$field { cfg.$field = v; })*
            };
        }
        set!(
            decoder,
            encoder,
            neighbor_mode,
            seed,
            learning_rate,
            max_epochs,
            batch_size,
            hidden_dim,
            embedding_dim,
            patience,
            stop_metric,
            eps_dist
        );
        if self.mass_outside_norm {
            cfg.mass_outside_norm = true;
        }
        if self.max_neighbors.is_some() {
            cfg.max_neighbors = self.max_neighbors;
        }
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Split directory written by `gglink split`.
    pub split: PathBuf,
    #[command(flatten)]
    pub hyper: HyperArgs,
    /// Output directory for checkpoint.json, report.json and manifest.json.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    pub checkpoint: PathBuf,
    pub split: PathBuf,
    /// Expected decoder; refused if it differs from the checkpoint's.
    #[arg(long)]
    pub decoder: Option<DecoderChoice>,
    /// Write the metrics JSON here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CrossvalArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long, default_value_t = 5)]
    pub folds: usize,
    #[arg(long, default_value_t = DEFAULT_VAL_FRAC)]
    pub val: f64,
    #[arg(long, default_value_t = DEFAULT_TEST_FRAC)]
    pub test: f64,
    /// Dataset name recorded in the outputs; defaults to the edge file stem.
    #[arg(long)]
    pub dataset: Option<String>,
    #[command(flatten)]
    pub hyper: HyperArgs,
    /// Output directory for experiment.json, properties.csv and manifest.json.
    #[arg(long)]
    pub out: PathBuf,
}
