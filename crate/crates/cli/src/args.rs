use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use idmr_core::evalbench::LocationPool;
use idmr_core::synth::{DEFAULT_CLASS_CAP, DEFAULT_THRESHOLD};
use idmr_core::{QueryImageMode, Split};

#[derive(Debug, Parser)]
#[command(name = "idmr", version, about = "Instance-driven multimodal retrieval pipeline")]
pub struct Cli {
    /// Worker threads for scoring, featurization and evaluation (default: all cores)
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build a training-triplet manifest from COCO-style detections
    Synth(SynthArgs),
    /// Generate a synthetic instance world (manifest, sequences, captions)
    World(WorldArgs),
    /// Train the encoder on a triplet manifest
    Train(TrainArgs),
    /// Embed a manifest's candidate images into an embedding store
    Index(IndexArgs),
    /// Query an embedding store
    Search(SearchArgs),
    /// Build retrieval tasks from a sequence dataset or curated pairs
    Bench(BenchArgs),
    /// Evaluate a checkpoint on retrieval tasks
    Eval(EvalArgs),
    /// Check a triplet manifest; prints one line per violation
    Validate(ValidateArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// COCO-style annotation JSON
    #[arg(long)]
    pub annotations: PathBuf,
    /// Directory that image file names are relative to
    #[arg(long, default_value = ".")]
    pub image_root: PathBuf,
    /// `synthetic` or `file:PATH` (image_id<TAB>x,y,w,h<TAB>score)
    #[arg(long, default_value = "synthetic")]
    pub scorer: String,
    /// `template` or `file:PATH` (image_id<TAB>x,y,w,h<TAB>caption)
    #[arg(long, default_value = "template")]
    pub captions: String,
    #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
    pub threshold: f64,
    /// Maximum instances kept per category
    #[arg(long, default_value_t = DEFAULT_CLASS_CAP)]
    pub cap: usize,
    #[arg(long, default_value = "train")]
    pub split: Split,
    /// Uniformly subsample the balanced set to at most N triplets
    #[arg(long)]
    pub limit: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Value of every triplet's `source` field
    #[arg(long, default_value = "coco")]
    pub source: String,
    #[arg(long)]
    pub out: PathBuf,
    /// Write run statistics (histograms, counts, skips) as JSON
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct WorldArgs {
    /// World config JSON; missing fields take defaults
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides the config's seed
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long, default_value = ".")]
    pub image_root: PathBuf,
    #[arg(long, default_value_t = 0.05)]
    pub temperature: f64,
    #[arg(long, default_value_t = 2e-5)]
    pub lr: f64,
    #[arg(long, default_value_t = 32)]
    pub batch: usize,
    #[arg(long, default_value_t = 8)]
    pub chunk: usize,
    #[arg(long, default_value_t = 1)]
    pub epochs: usize,
    /// Stop after this many steps; the schedule decays over the capped count
    #[arg(long)]
    pub total_steps: Option<u64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 32)]
    pub embed_dim: usize,
    #[arg(long, default_value_t = 64)]
    pub hidden_dim: usize,
    #[arg(long, default_value_t = idmr_core::encoder::featurize::DEFAULT_TEXT_DIM)]
    pub text_dim: usize,
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Write one JSON line per optimizer step
    #[arg(long)]
    pub log: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct IndexArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long, default_value = ".")]
    pub image_root: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SearchArgs {
    #[arg(long)]
    pub store: PathBuf,
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long, default_value = ".")]
    pub image_root: PathBuf,
    /// Image path, or an image reference as JSON (e.g. `{"image":…,"bbox":[…],"features":[…]}`)
    #[arg(long)]
    pub query_image: String,
    /// Crop the query image to `x,y,w,h`
    #[arg(long)]
    pub query_bbox: Option<String>,
    #[arg(long)]
    pub query_text: String,
    #[arg(short, long, default_value_t = 5)]
    pub k: usize,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Sequence dataset (one object per line)
    #[arg(long, conflicts_with = "curated", required_unless_present = "curated")]
    pub sequences: Option<PathBuf>,
    /// Curated query/positive pair manifest
    #[arg(long)]
    pub curated: Option<PathBuf>,
    /// Frames sampled per object
    #[arg(long, default_value_t = 5)]
    pub frames: usize,
    #[arg(long, default_value = "crop")]
    pub mode: QueryImageMode,
    /// Location-task pool: `all` or `sampled:N`
    #[arg(long, default_value = "all")]
    pub pool: LocationPool,
    /// `template` or `file:PATH`; used by location tasks
    #[arg(long, default_value = "template")]
    pub captions: String,
    /// Which subtasks to build from sequences
    #[arg(long, value_delimiter = ',', default_value = "instance,location")]
    pub subtasks: Vec<String>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub tasks: PathBuf,
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long, default_value = ".")]
    pub image_root: PathBuf,
    #[arg(short, long, default_value_t = 5)]
    pub k: usize,
    #[arg(long)]
    pub report: PathBuf,
    /// Write each task's target rank as one JSON line
    #[arg(long)]
    pub dump_ranks: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    /// Triplet manifest to check
    #[arg(long)]
    pub manifest: PathBuf,
}
