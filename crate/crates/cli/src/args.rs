use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use scgfm::ot::SolverKind;
use scgfm::trainer::{OptimizerKind, TrainConfig};

#[derive(Debug, Parser)]
#[command(name = "scgfm", version, about = "Structure-centric graph embeddings with Gromov-Wasserstein bases")]
pub struct Cli {
    /// Worker threads [default: all cores]
    #[arg(long, global = true, env = "SCGFM_THREADS")]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a base dictionary and decoder on a graph corpus
    Pretrain(PretrainArgs),
    /// Embed graphs with a trained checkpoint
    Embed(EmbedArgs),
    /// Few-shot prototypical evaluation of labeled embeddings
    Eval(EvalArgs),
    /// Diagnostics and benchmarks
    #[command(subcommand)]
    Diagnose(Diagnose),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DataFormat {
    /// TUDataset directory
    Tu,
    /// JSON-lines graph file
    Json,
    /// Generated cliques-with-tails vs cycles-with-chords corpus; --data is ignored
    Synthetic,
}

#[derive(Debug, Clone, Args)]
pub struct DataArgs {
    /// Dataset path (directory for tu, file for json)
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Dataset format
    #[arg(long, value_enum, default_value_t = DataFormat::Json)]
    pub format: DataFormat,
    /// Graphs in the synthetic corpus
    #[arg(long, default_value_t = 200)]
    pub synthetic_graphs: usize,
    /// Smallest synthetic graph
    #[arg(long, default_value_t = 10)]
    pub synthetic_min_nodes: usize,
    /// Largest synthetic graph
    #[arg(long, default_value_t = 20)]
    pub synthetic_max_nodes: usize,
    /// Seed of the synthetic corpus
    #[arg(long, default_value_t = 42)]
    pub synthetic_seed: u64,
    /// Replace every graph by one PPR ego-subgraph per node, capped at this many nodes (node-level tasks)
    #[arg(long)]
    pub ego_cap: Option<usize>,
}

/// Overrides for the training configuration. Unset flags keep the value
/// from `--config`, or the built-in default.
#[derive(Debug, Clone, Default, Args)]
pub struct TrainOverrides {
    /// TOML file with training keys; flags win over it
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Number of bases K [default: 16]
    #[arg(long)]
    pub k: Option<usize>,
    /// Nodes per base M [default: 32]
    #[arg(long)]
    pub m_nodes: Option<usize>,
    /// Sliced GW projections [default: 50]
    #[arg(long)]
    pub slices: Option<usize>,
    /// Softmax temperature τ [default: 0.3]
    #[arg(long)]
    pub temperature: Option<f64>,
    /// Weight of the reconstruction loss α [default: 2]
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Weight of the diversity loss β [default: 0.05]
    #[arg(long)]
    pub beta: Option<f64>,
    /// Diversity margin [default: 10]
    #[arg(long)]
    pub margin: Option<f64>,
    /// Training epochs [default: 60]
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Graphs per batch [default: 32]
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Learning rate [default: 0.01]
    #[arg(long)]
    pub learning_rate: Option<f64>,
    /// Seed [default: 42]
    #[arg(long)]
    pub seed: Option<u64>,
    /// GW solver: sliced or entropic [default: sliced]
    #[arg(long)]
    pub solver: Option<SolverKind>,
    /// Keep L_gw gradients out of the softmax weights [default: false]
    #[arg(long)]
    pub stop_grad_weights: Option<bool>,
    /// Optimizer: adam or sgd [default: adam]
    #[arg(long)]
    pub optimizer: Option<OptimizerKind>,
    /// Decoder hidden width [default: 64]
    #[arg(long)]
    pub hidden: Option<usize>,
    /// Entropic regularization [default: 0.01]
    #[arg(long)]
    pub epsilon: Option<f64>,
}

impl TrainOverrides {
    pub fn resolve(&self) -> Result<TrainConfig> {
        let mut cfg = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
                toml::from_str::<TrainConfig>(&text).with_context(|| format!("parsing {}", path.display()))?
            }
            None => TrainConfig::default(),
        };
        macro_rules! apply {
            ($($field:ident),*) => {$(
                if let Some(v) = self.$field.clone() {
                    cfg.$field = v;
                }
            )*};
        }
        apply!(
            k,
            m_nodes,
            slices,
            temperature,
            alpha,
            beta,
            margin,
            epochs,
            batch_size,
            learning_rate,
            seed,
            solver,
            stop_grad_weights,
            optimizer,
            hidden,
            epsilon
        );
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
pub struct PretrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Checkpoint to write
    #[arg(long)]
    pub out: PathBuf,
    /// Per-epoch metrics as JSON-lines [default: <out>.metrics.jsonl]
    #[arg(long)]
    pub metrics: Option<PathBuf>,
    #[command(flatten)]
    pub train: TrainOverrides,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EmbeddingFormat {
    Jsonl,
    Bin,
}

#[derive(Debug, Args)]
pub struct CheckpointArgs {
    /// Trained checkpoint
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Solver for embedding [default: the checkpoint's]
    #[arg(long)]
    pub solver: Option<SolverKind>,
}

#[derive(Debug, Args)]
pub struct EmbedArgs {
    #[command(flatten)]
    pub ckpt: CheckpointArgs,
    #[command(flatten)]
    pub data: DataArgs,
    /// Embedding file to write
    #[arg(long)]
    pub out: PathBuf,
    /// Output encoding
    #[arg(long = "output-format", value_enum, default_value_t = EmbeddingFormat::Jsonl)]
    pub output_format: EmbeddingFormat,
}

#[derive(Debug, Args)]
pub struct EmbeddingInput {
    /// Embedding file (.bin is read as binary, anything else as JSON-lines)
    #[arg(long)]
    pub embeddings: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub input: EmbeddingInput,
    /// Classes per episode
    #[arg(long, default_value_t = 2)]
    pub ways: usize,
    /// Support items per class
    #[arg(long, default_value_t = 5)]
    pub shots: usize,
    /// Query items per class
    #[arg(long, default_value_t = 50)]
    pub queries: usize,
    /// Episodes
    #[arg(long, default_value_t = 50)]
    pub runs: usize,
    /// Episode sampling seed
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Skip z-scoring with support statistics
    #[arg(long)]
    pub no_standardize: bool,
    /// Task name recorded in result rows
    #[arg(long, default_value = "graph")]
    pub task: String,
    /// Dataset name recorded in result rows [default: embedding file stem]
    #[arg(long)]
    pub dataset: Option<String>,
    /// Result rows as JSON-lines [default: stdout]
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Diagnose {
    /// Reference GW distance against latent distance
    Isometry(IsometryArgs),
    /// Sliced against entropic GW costs
    SgwCorr(SgwCorrArgs),
    /// Linear surrogate against a fixed-point barycenter
    Surrogate(SurrogateArgs),
    /// Embedding drift under topology rewiring with fixed features
    Rewire(RewireArgs),
    /// Fisher separability per embedding block
    Fisher(FisherArgs),
    /// Finite-difference check of the training gradients
    Gradcheck(GradcheckArgs),
    /// Sliced GW wall time against graph size
    Bench(BenchArgs),
}

#[derive(Debug, Args)]
pub struct IsometryArgs {
    #[command(flatten)]
    pub ckpt: CheckpointArgs,
    #[command(flatten)]
    pub data: DataArgs,
    /// Graph pairs
    #[arg(long, default_value_t = 200)]
    pub pairs: usize,
    /// Pair sampling seed
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Pair table as CSV (gw_distance, latent_distance)
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SgwCorrArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Graph pairs
    #[arg(long, default_value_t = 200)]
    pub pairs: usize,
    /// Slice count
    #[arg(long, default_value_t = 50)]
    pub slices: usize,
    /// Entropic regularization of the reference
    #[arg(long, default_value_t = 0.01)]
    pub epsilon: f64,
    /// Seed for pairs and slices
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Pair table as CSV
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SurrogateArgs {
    #[command(flatten)]
    pub ckpt: CheckpointArgs,
    #[command(flatten)]
    pub data: DataArgs,
    /// Graphs compared (the first ones of the dataset)
    #[arg(long, default_value_t = 30)]
    pub graphs: usize,
    /// Fixed-point barycenter iterations
    #[arg(long, default_value_t = 20)]
    pub iterations: usize,
    /// Per-graph rows and a summary as JSON-lines
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct RewireArgs {
    #[command(flatten)]
    pub ckpt: CheckpointArgs,
    #[command(flatten)]
    pub data: DataArgs,
    /// Rewiring probabilities
    #[arg(long, value_delimiter = ',', default_value = "0,0.05,0.1,0.2,0.4")]
    pub epsilons: Vec<f64>,
    /// Rewiring seed
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Rows as JSON-lines
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct FisherArgs {
    #[command(flatten)]
    pub input: EmbeddingInput,
    /// Checkpoint the embeddings came from (for the block layout)
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Rows as JSON-lines
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    #[command(flatten)]
    pub train: TrainOverrides,
    /// Seed of the check instance
    #[arg(long = "check-seed", default_value_t = 42)]
    pub check_seed: u64,
    /// Report as JSON [default: stdout]
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Graph sizes
    #[arg(long, value_delimiter = ',', default_value = "500,1000,2000,4000")]
    pub sizes: Vec<usize>,
    /// Mean degree of the random graphs
    #[arg(long, default_value_t = 5.0)]
    pub degree: f64,
    /// Base size M
    #[arg(long, default_value_t = 32)]
    pub m: usize,
    /// Slice count
    #[arg(long, default_value_t = 50)]
    pub slices: usize,
    /// Repetitions per size (best is kept)
    #[arg(long, default_value_t = 3)]
    pub reps: usize,
    /// Seed
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Timing table as CSV
    #[arg(long)]
    pub out: PathBuf,
}
