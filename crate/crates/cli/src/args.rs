use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "gaitworks", version, about = "Gait energy images, pathology classification and explanations")]
pub struct Cli {
    /// Print a single JSON document on stdout, and errors as JSON on stderr.
    #[arg(long, global = true)]
    pub json: bool,

    /// Seed for every random choice (data generation, initialization, shuffling).
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,

    /// Worker threads for data-parallel stages (default: all cores).
    #[arg(long, global = true, value_parser = clap::value_parser!(u16).range(1..))]
    pub jobs: Option<u16>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Rep {
    Gei,
    Sei,
}

impl From<Rep> for gaitworks_core::Representation {
    fn from(r: Rep) -> Self {
        match r {
            Rep::Gei => gaitworks_core::Representation::Gei,
            Rep::Sei => gaitworks_core::Representation::Sei,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ExplainMethod {
    Saliency,
    Gradcam,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Extract silhouettes from green-screen colour frames.
    Segment(SegmentArgs),
    /// Detect complete gait cycles in a directory of masks.
    Cycles(CyclesArgs),
    /// Write one gait energy image per cycle.
    Gei(GeiArgs),
    /// Write one skeleton energy image per cycle from pose files.
    Sei(SeiArgs),
    /// Generate a labelled synthetic gait dataset.
    Synth(SynthArgs),
    /// Train a classifier on a dataset.
    Train(TrainArgs),
    /// Subject-wise 10-fold cross-validation over 21 subjects.
    Crossval(CrossvalArgs),
    /// Train on one dataset and evaluate on another.
    Crossdataset(CrossdatasetArgs),
    /// Classify energy images with a trained model.
    Predict(PredictArgs),
    /// Render saliency or grad-CAM heatmaps for an energy image.
    Explain(ExplainArgs),
    /// Report a model's parameter count, file size and layer table.
    ModelInfo(ModelInfoArgs),
    /// Start the HTTP service.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct SegmentArgs {
    /// Directory of numbered PNG frames.
    #[arg(long)]
    pub frames: PathBuf,
    /// Empty background plate; the temporal median is used when omitted.
    #[arg(long)]
    pub background: Option<PathBuf>,
    /// Output directory for mask_NNNN.png files.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct CyclesArgs {
    /// Directory of numbered binary mask PNGs.
    #[arg(long)]
    pub masks: PathBuf,
    /// Frame rate of the recording.
    #[arg(long, default_value_t = 10.0)]
    pub fps: f64,
    /// Also write the cycle JSON to this file.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CycleSource {
    /// Cycle JSON from `gaitworks cycles`; cycles are detected when omitted.
    #[arg(long)]
    pub cycles: Option<PathBuf>,
    /// Frame rate of the recording.
    #[arg(long, default_value_t = 10.0)]
    pub fps: f64,
    /// Average the whole trimmed sequence instead of individual cycles.
    #[arg(long, conflicts_with = "cycles")]
    pub whole_sequence: bool,
}

#[derive(Debug, Args)]
pub struct GeiArgs {
    #[arg(long)]
    pub masks: PathBuf,
    #[command(flatten)]
    pub source: CycleSource,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SeiArgs {
    /// Directory of numbered pose JSON files (25 [x, y, confidence] triplets each).
    #[arg(long)]
    pub poses: PathBuf,
    /// Canvas width in pixels.
    #[arg(long)]
    pub width: usize,
    /// Canvas height in pixels.
    #[arg(long)]
    pub height: usize,
    #[command(flatten)]
    pub source: CycleSource,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 5)]
    pub subjects: usize,
    #[arg(long, default_value_t = 2)]
    pub seqs_per_class: usize,
    #[arg(long, default_value_t = 1)]
    pub first_subject: u32,
    /// Walk length in gait cycles.
    #[arg(long, default_value_t = 3.0)]
    pub cycles: f64,
    #[arg(long, default_value_t = 10.0)]
    pub fps: f64,
    /// Per-frame joint-angle noise in degrees.
    #[arg(long, default_value_t = 0.5)]
    pub jitter: f64,
    /// Green-screen pixel noise (standard deviation, 8-bit units).
    #[arg(long, default_value_t = 2.0)]
    pub noise: f64,
    /// Also write colour frames and a background plate.
    #[arg(long)]
    pub frames: bool,
    /// Also write per-cycle GEI and SEI images.
    #[arg(long)]
    pub energy: bool,
}

#[derive(Debug, Args, Clone)]
pub struct TrainingOptions {
    #[arg(long, value_enum, default_value_t = Rep::Gei)]
    pub representation: Rep,
    /// Square input side; energy images are resampled when below 224.
    #[arg(long, default_value_t = 224)]
    pub input_size: usize,
    #[arg(long, default_value_t = 100)]
    pub epochs: usize,
    #[arg(long, default_value_t = 32)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub learning_rate: f64,
    /// Epochs without loss improvement before stopping.
    #[arg(long, default_value_t = 10)]
    pub patience: usize,
    #[arg(long, default_value_t = 1e-4)]
    pub min_delta: f64,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    #[command(flatten)]
    pub training: TrainingOptions,
    /// Subjects to hold out and evaluate on, e.g. 9,10.
    #[arg(long, value_delimiter = ',')]
    pub holdout: Vec<u32>,
    /// Model file to write.
    #[arg(long)]
    pub out: PathBuf,
    /// Training history CSV (epoch, loss, accuracy).
    #[arg(long)]
    pub history: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CrossvalArgs {
    /// Dataset with subjects 1..21; not needed with --folds-only.
    #[arg(long, required_unless_present = "folds_only")]
    pub dataset: Option<PathBuf>,
    /// Print the fold plan and exit.
    #[arg(long)]
    pub folds_only: bool,
    #[command(flatten)]
    pub training: TrainingOptions,
    /// Also write the report JSON to this file.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CrossdatasetArgs {
    #[arg(long)]
    pub train: PathBuf,
    #[arg(long)]
    pub test: PathBuf,
    /// Drop repeated recordings of a subject from training.
    #[arg(long)]
    pub dedupe_repeats: bool,
    #[command(flatten)]
    pub training: TrainingOptions,
    /// Also save the trained model.
    #[arg(long)]
    pub model_out: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// 224x224 grayscale energy image(s).
    #[arg(long = "image", required = true)]
    pub images: Vec<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ExplainArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub image: PathBuf,
    #[arg(long, value_enum, default_value_t = ExplainMethod::Gradcam)]
    pub method: ExplainMethod,
    /// Convolution block for grad-CAM (default: the last).
    #[arg(long)]
    pub layer: Option<usize>,
    /// Class to explain (default: the predicted one).
    #[arg(long)]
    pub target_class: Option<usize>,
    /// Also write the feature map of LAYER,CHANNEL.
    #[arg(long, value_name = "LAYER,CHANNEL", value_parser = parse_pair)]
    pub feature_map: Option<(usize, usize)>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ModelInfoArgs {
    /// Model file; the default architecture is described when omitted.
    #[arg(long)]
    pub model: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, env = "GAITWORKS_PORT")]
    pub port: Option<u16>,
    #[arg(long, env = "GAITWORKS_HOST")]
    pub host: Option<std::net::IpAddr>,
    #[arg(long, env = "GAITWORKS_MODEL_GEI")]
    pub model_gei: Option<PathBuf>,
    #[arg(long, env = "GAITWORKS_MODEL_SEI")]
    pub model_sei: Option<PathBuf>,
}

fn parse_pair(s: &str) -> Result<(usize, usize), String> {
    let (a, b) = s.split_once(',').ok_or_else(|| format!("expected LAYER,CHANNEL, got {s:?}"))?;
    let num = |v: &str| v.trim().parse::<usize>().map_err(|e| format!("{v:?}: {e}"));
    Ok((num(a)?, num(b)?))
}
