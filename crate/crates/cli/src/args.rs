//! Command-line flags.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Clone, Parser)]
#[command(name = "swinct", version, about = "Shifted-window transformers for lung-nodule CT slices")]
pub struct Cli {
    /// JSON run configuration; flags override its values.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Seed for every random stream.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory (or file, for `eval` and `count`).
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Print machine-readable JSON instead of a summary.
    #[arg(long, global = true)]
    pub json: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Build a sliced, split dataset from volumes or a phantom.
    Prepare(PrepareArgs),
    /// Train a model on a prepared dataset.
    Train(TrainArgs),
    /// Evaluate a checkpoint on one split.
    Eval(EvalArgs),
    /// Report parameter and FLOP counts.
    Count(CountArgs),
    /// Time global against windowed attention over a size sweep.
    Bench(BenchArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TaskArg {
    Classification,
    Segmentation,
}

#[derive(Debug, Clone, Default, Args)]
pub struct PrepareArgs {
    /// Generate this many phantom volumes instead of reading files.
    #[arg(long, value_name = "N")]
    pub phantom: Option<usize>,
    /// Side of each phantom volume.
    #[arg(long)]
    pub phantom_size: Option<usize>,
    /// Chance that a phantom volume holds a nodule.
    #[arg(long)]
    pub nodule_prob: Option<f64>,
    /// Directory of `.swv` volumes (and optional `<id>.mask.swv` masks).
    #[arg(long, value_name = "DIR")]
    pub volumes: Option<PathBuf>,
    /// JSON-lines nodule annotations.
    #[arg(long, value_name = "FILE")]
    pub annotations: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub task: Option<TaskArg>,
    /// Side of the stored slices.
    #[arg(long)]
    pub image_size: Option<usize>,
    /// Slices per axis around each crop centre.
    #[arg(long)]
    pub slices_per_axis: Option<usize>,
    /// Non-nodule crops drawn per volume.
    #[arg(long)]
    pub negatives_per_volume: Option<usize>,
    /// Records produced per positive slice.
    #[arg(long)]
    pub expansion: Option<usize>,
    /// Share of negative slices kept.
    #[arg(long)]
    pub negative_fraction: Option<f64>,
    /// Train:val:test proportions, such as `8:1:1`.
    #[arg(long, value_name = "A:B:C")]
    pub ratio: Option<String>,
    /// Caps on the train, val and test sizes, such as `20565,2571,7076`.
    #[arg(long, value_name = "A,B,C")]
    pub max_sizes: Option<String>,
    /// Split at slice level, letting a volume span several splits.
    #[arg(long)]
    pub paper_splits: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RecipeArg {
    Regular,
    Finetune,
    Segmentation,
}

impl RecipeArg {
    pub fn name(self) -> &'static str {
        match self {
            RecipeArg::Regular => "regular",
            RecipeArg::Finetune => "finetune",
            RecipeArg::Segmentation => "segmentation",
        }
    }
}

#[derive(Debug, Clone, Default, Args)]
pub struct TrainArgs {
    /// Prepared dataset directory.
    #[arg(long, value_name = "DIR")]
    pub data: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub recipe: Option<RecipeArg>,
    /// Backbone: swin-t, swin-s, swin-b or toy.
    #[arg(long)]
    pub variant: Option<String>,
    /// Channels of the segmentation decoder.
    #[arg(long)]
    pub decoder_dim: Option<usize>,
    /// Replace the recipe length with this many epochs.
    #[arg(long, conflicts_with = "steps")]
    pub epochs: Option<u64>,
    /// Replace the recipe length with this many steps.
    #[arg(long)]
    pub steps: Option<u64>,
    /// Replace the warmup with this many epochs.
    #[arg(long, conflicts_with = "warmup_steps")]
    pub warmup_epochs: Option<u64>,
    /// Replace the warmup with this many steps.
    #[arg(long)]
    pub warmup_steps: Option<u64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Peak learning rate.
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub weight_decay: Option<f64>,
    /// Maximum stochastic-depth rate.
    #[arg(long)]
    pub drop_path: Option<f64>,
    /// Turn off batch-time augmentation.
    #[arg(long)]
    pub no_augment: bool,
    /// Keep EMA weights with this decay.
    #[arg(long, value_name = "DECAY")]
    pub ema: Option<f64>,
    /// Evaluate with the EMA weights.
    #[arg(long, requires = "ema")]
    pub eval_with_ema: bool,
    /// Clip the global gradient norm.
    #[arg(long, value_name = "NORM")]
    pub grad_clip: Option<f64>,
    /// Initialize from a checkpoint directory.
    #[arg(long, value_name = "DIR")]
    pub init: Option<PathBuf>,
    /// Steps between evaluations.
    #[arg(long)]
    pub eval_every: Option<u64>,
    /// Stop after this many steps.
    #[arg(long)]
    pub max_steps: Option<u64>,
    /// Also write SVG plots of the curves.
    #[arg(long)]
    pub curves: bool,
}

#[derive(Debug, Clone, Default, Args)]
pub struct EvalArgs {
    /// Prepared dataset directory.
    #[arg(long, value_name = "DIR")]
    pub data: Option<PathBuf>,
    /// `last`, `best` or a checkpoint directory.
    #[arg(long, default_value = "best")]
    pub checkpoint: String,
    /// Training run holding `checkpoints/`, for `last` and `best`.
    #[arg(long, value_name = "DIR")]
    pub run: Option<PathBuf>,
    #[arg(long, default_value = "test")]
    pub split: String,
    /// Also write the predictions as an SWT1 tensor next to the report.
    #[arg(long)]
    pub predictions: bool,
    /// Also plot the run's curves.
    #[arg(long, requires = "run")]
    pub curves: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum HeadArg {
    Classifier,
    Segmentation,
}

#[derive(Debug, Clone, Args)]
pub struct CountArgs {
    #[arg(long, default_value = "swin-t")]
    pub variant: String,
    /// Input resolution.
    #[arg(long, default_value_t = 224)]
    pub res: usize,
    #[arg(long, value_enum, default_value = "classifier")]
    pub head: HeadArg,
    /// Number of classes; 1000 for classifiers and 150 for segmentation by default.
    #[arg(long)]
    pub classes: Option<usize>,
    #[arg(long, default_value_t = 512)]
    pub decoder_dim: usize,
    /// Override the window size.
    #[arg(long)]
    pub window: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct BenchArgs {
    /// Square grid sides to sweep.
    #[arg(long, value_delimiter = ',', default_value = "14,28,56,112")]
    pub sizes: Vec<usize>,
    #[arg(long, default_value_t = 96)]
    pub dim: usize,
    #[arg(long, default_value_t = 7)]
    pub window: usize,
}
