mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use holocrowd::features::FeatureKind;
use holocrowd::frame_io::FrameFormat;
use holocrowd::models::DetectorKind;
use holocrowd::synth::Recipe;

/// Crowd behaviour features and anomaly detection.
#[derive(Debug, Parser)]
#[command(name = "holocrowd", version)]
pub struct Cli {
    /// Run configuration file (`key=value` lines).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Seed for every random choice.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Density grid as ROWSxCOLS, overriding the config.
    #[arg(long, global = true, value_parser = parse_grid)]
    pub grid: Option<(usize, usize)>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic corpus.
    Synth {
        #[arg(long, value_parser = parse_with::<Recipe>)]
        recipe: Recipe,
        /// Corpus directory to create.
        #[arg(long)]
        out: PathBuf,
    },
    /// Track a frame sequence, or every clip of a corpus.
    Track {
        /// Frame sequence or corpus directory.
        input: PathBuf,
        /// Tracklet file; required unless the input is a corpus.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_parser = parse_with::<FrameFormat>, default_value = "pgm_dir")]
        format: FrameFormat,
    },
    /// Compute per-frame features from tracklets.
    Features {
        /// Tracklet file or corpus directory.
        input: PathBuf,
        /// Feature file; required unless the input is a corpus.
        #[arg(long)]
        out: Option<PathBuf>,
        /// For a corpus, use the ground-truth tracklets instead of tracked ones.
        #[arg(long)]
        truth: bool,
        #[command(flatten)]
        select: FeatureSelect,
    },
    /// Train the normal-only mixture detector.
    TrainGmm {
        #[command(flatten)]
        train: TrainArgs,
        /// Use only this many leading frames of each clip.
        #[arg(long)]
        train_frames: Option<usize>,
    },
    /// Train the two-class SVM detector.
    TrainSvm {
        #[command(flatten)]
        train: TrainArgs,
    },
    /// Score every frame of a feature file.
    Score {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        features: PathBuf,
        /// Score file; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Frame-level ROC with single-scene and cross-scene training.
    EvalUmn {
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 200)]
        train_frames: usize,
        #[command(flatten)]
        select: FeatureSelect,
    },
    /// Clip-level k-fold cross-validation.
    EvalCv {
        #[command(flatten)]
        cv: CvArgs,
        #[command(flatten)]
        select: FeatureSelect,
    },
    /// Cross-validation with each feature left out in turn.
    Ablate {
        #[command(flatten)]
        cv: CvArgs,
    },
    /// Measure end-to-end frames per second.
    Bench {
        /// Frame sequence to time; otherwise a recipe is rendered.
        input: Option<PathBuf>,
        #[arg(long, value_parser = parse_with::<Recipe>, default_value = "throughput")]
        recipe: Recipe,
        #[arg(long, value_parser = parse_with::<FrameFormat>, default_value = "pgm_dir")]
        format: FrameFormat,
        /// Use every core instead of one.
        #[arg(long)]
        parallel: bool,
        /// Report file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
pub struct FeatureSelect {
    /// Leave a feature out (repeatable).
    #[arg(long = "exclude-feature", value_parser = parse_with::<FeatureKind>)]
    pub exclude: Vec<FeatureKind>,
}

impl FeatureSelect {
    /// The `available` features that were not excluded.
    pub fn kept(&self, available: &[FeatureKind]) -> Vec<FeatureKind> {
        available.iter().copied().filter(|f| !self.exclude.contains(f)).collect()
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Feature file or corpus directory.
    #[arg(long)]
    pub features: PathBuf,
    /// Per-frame labels for a single feature file.
    #[arg(long)]
    pub labels: Option<PathBuf>,
    /// Model file.
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub select: FeatureSelect,
}

#[derive(Debug, Args)]
pub struct CvArgs {
    pub corpus: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 5)]
    pub folds: usize,
    #[arg(long, value_parser = parse_with::<DetectorKind>, default_value = "svm")]
    pub detector: DetectorKind,
}

fn parse_with<T: std::str::FromStr>(s: &str) -> Result<T, String>
where
    T::Err: std::fmt::Display,
{
    s.parse().map_err(|e: T::Err| e.to_string())
}

fn parse_grid(s: &str) -> Result<(usize, usize), String> {
    let (r, c) = s.split_once(['x', 'X']).ok_or("expected ROWSxCOLS")?;
    let n = |v: &str| v.trim().parse::<usize>().map_err(|e| format!("{v:?}: {e}"));
    Ok((n(r)?, n(c)?))
}

/// Bad invocation detected after argument parsing.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<UsageError>().is_some() {
        return 1;
    }
    match err.downcast_ref::<holocrowd::Error>() {
        Some(e) if e.is_numeric() => 3,
        _ => 2,
    }
}

/// The error chain on one line, skipping causes already quoted by their parent.
fn one_line(err: &anyhow::Error) -> String {
    let mut out = String::new();
    for cause in err.chain() {
        let text = cause.to_string();
        if out.contains(&text) {
            continue;
        }
        if !out.is_empty() {
            out.push_str(": ");
        }
        out.push_str(&text);
    }
    out.replace('\n', " ")
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("holocrowd: {}", one_line(&e));
            ExitCode::from(exit_code(&e))
        }
    }
}
