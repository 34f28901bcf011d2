use std::time::Instant;

use crate::error::{Error, Result};
use crate::frame_io::Frame;
use crate::models::Detector;
use crate::pipeline::{Pipeline, PipelineConfig};

/// Leading frames of each sequence run but not timed.
pub const BENCH_WARMUP_FRAMES: usize = 50;
/// Fewest timed frames accepted for a figure.
pub const MIN_TIMED_FRAMES: usize = 250;

#[derive(Debug, Clone, PartialEq)]
pub struct BenchResult {
    pub timed_frames: usize,
    pub seconds: f64,
    pub fps: f64,
    pub mean_tracked_points: f64,
}

/// End-to-end frame rate over pre-loaded sequences, each run through a fresh
/// pipeline. Uses whatever execution mode `cfg` asks for.
pub fn bench_throughput(
    sequences: &[Vec<Frame>],
    cfg: &PipelineConfig,
    detector: Option<&Detector>,
) -> Result<BenchResult> {
    let timed: usize = sequences
        .iter()
        .map(|s| s.len().saturating_sub(BENCH_WARMUP_FRAMES))
        .sum();
    if timed < MIN_TIMED_FRAMES {
        return Err(Error::InsufficientData(format!(
            "throughput needs at least {MIN_TIMED_FRAMES} frames past the {BENCH_WARMUP_FRAMES}-frame warm-up, got {timed}"
        )));
    }
    let mut points = 0usize;
    let mut seconds = 0.0;
    for frames in sequences.iter().filter(|s| s.len() > BENCH_WARMUP_FRAMES) {
        let mut p = Pipeline::new(cfg.clone(), detector.cloned())?;
        for f in &frames[..BENCH_WARMUP_FRAMES] {
            p.process(f)?;
        }
        let start = Instant::now();
        for f in &frames[BENCH_WARMUP_FRAMES..] {
            points += p.process(f)?.tracked_points;
        }
        seconds += start.elapsed().as_secs_f64();
    }
    let seconds = seconds.max(1e-9);
    Ok(BenchResult {
        timed_frames: timed,
        seconds,
        fps: timed as f64 / seconds,
        mean_tracked_points: points as f64 / timed as f64,
    })
}
