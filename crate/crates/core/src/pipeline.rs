//! Frame-by-frame composition of every stage.
//!
//! [`Pipeline`] runs foreground, tracking, features and an optional
//! detector on each incoming frame; its features come from the points live
//! at that frame. The staged helpers instead rebuild states from finalized
//! (filtered) tracklets, which is what the on-disk workflow does.

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::eval::LabeledClip;
use crate::features::{featurize, frame_features_with, EmaState, FeatureVector};
use crate::foreground::{morph_open_close, BackgroundModel, ForegroundMask, MogParams};
use crate::frame_io::Frame;
use crate::models::{Detector, Label};
use crate::par::{self, Execution};
use crate::synth::{render, simulate, ClipSpec};
use crate::tracker::{states_from_tracklets, TrackMeta, Tracker, TrackerParams, Tracklet};

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub run: RunConfig,
    pub mog: MogParams,
    pub morph_radius: usize,
    pub tracker: TrackerParams,
    /// Leading frames during which the foreground is forced empty while the
    /// background model settles.
    pub warmup_frames: usize,
    pub exec: Execution,
}

impl PipelineConfig {
    pub fn new(run: RunConfig) -> Self {
        Self {
            tracker: TrackerParams::from_config(&run),
            run,
            mog: MogParams::default(),
            morph_radius: 1,
            warmup_frames: 40,
            exec: Execution::Sequential,
        }
    }

    pub fn with_exec(mut self, exec: Execution) -> Self {
        self.exec = exec;
        self
    }
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self::new(RunConfig::default())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameOutput {
    pub frame: u64,
    pub foreground_pixels: usize,
    pub tracked_points: usize,
    pub features: FeatureVector,
    /// Detector score, lower is more abnormal; `None` without a detector or
    /// on gated frames.
    pub score: Option<f64>,
    pub label: Option<Label>,
}

struct Stages {
    background: BackgroundModel,
    tracker: Tracker,
    dims: (usize, usize),
}

pub struct Pipeline {
    cfg: PipelineConfig,
    detector: Option<Detector>,
    stages: Option<Stages>,
    ema: EmaState,
    frames: usize,
}

impl Pipeline {
    pub fn new(cfg: PipelineConfig, detector: Option<Detector>) -> Result<Self> {
        cfg.run.validate()?;
        Ok(Self {
            ema: EmaState::new(cfg.run.ema_alpha),
            cfg,
            detector,
            stages: None,
            frames: 0,
        })
    }

    pub fn process(&mut self, frame: &Frame) -> Result<FrameOutput> {
        if self.stages.is_none() {
            let (w, h) = frame.dims();
            self.stages = Some(Stages {
                background: BackgroundModel::new(w, h, self.cfg.mog.clone())?,
                tracker: Tracker::new(w, h, self.cfg.tracker.clone()),
                dims: (w, h),
            });
        }
        let exec = self.cfg.exec;
        let st = self.stages.as_mut().expect("initialized above");
        let raw = st.background.apply(frame, exec)?;
        self.frames += 1;
        let mask = if self.frames <= self.cfg.warmup_frames {
            ForegroundMask::new(raw.width, raw.height)
        } else {
            morph_open_close(&raw, self.cfg.morph_radius)
        };
        let state = st.tracker.advance(frame, &mask, exec)?;
        let features = frame_features_with(&state, &mut self.ema, &self.cfg.run, st.dims, exec);
        let (score, label) = match &self.detector {
            Some(d) => (d.score(&features), Some(d.classify_frame(&features))),
            None => (None, None),
        };
        Ok(FrameOutput {
            frame: frame.index,
            foreground_pixels: mask.count(),
            tracked_points: state.points.len(),
            features,
            score,
            label,
        })
    }

    pub fn frames_processed(&self) -> usize {
        self.frames
    }

    /// Close the last tracking window and hand back the kept tracklets.
    pub fn finish(mut self) -> Result<(TrackMeta, Vec<Tracklet>)> {
        let st = self
            .stages
            .as_mut()
            .ok_or_else(|| Error::InsufficientData("no frames were processed".into()))?;
        st.tracker.finish();
        Ok((st.tracker.meta(), st.tracker.take_kept()))
    }
}

/// Run foreground and tracking over a whole sequence.
pub fn track_sequence<I>(frames: I, cfg: &PipelineConfig) -> Result<(TrackMeta, Vec<Tracklet>)>
where
    I: IntoIterator<Item = Result<Frame>>,
{
    let mut p = Pipeline::new(cfg.clone(), None)?;
    for f in frames {
        p.process(&f?)?;
    }
    p.finish()
}

/// Per-frame descriptors rebuilt from finalized tracklets.
pub fn features_from_tracklets(
    meta: &TrackMeta,
    tracklets: &[Tracklet],
    run: &RunConfig,
) -> Vec<FeatureVector> {
    let states = states_from_tracklets(meta, tracklets);
    featurize(&states, run, (meta.width, meta.height))
}

/// Simulate and render a clip, then run the vision front-end over it.
pub fn clip_features(clip: &ClipSpec, cfg: &PipelineConfig) -> Result<LabeledClip> {
    let sim = simulate(&clip.spec)?;
    let (meta, kept) = track_sequence(render(&sim), cfg)?;
    Ok(LabeledClip {
        name: clip.name.clone(),
        scene: clip.scene.clone(),
        label: clip.label(),
        frames: features_from_tracklets(&meta, &kept, &cfg.run),
        frame_labels: sim.labels,
    })
}

/// [`clip_features`] for every clip, spread over clips under `cfg.exec`.
pub fn corpus_features(clips: &[ClipSpec], cfg: &PipelineConfig) -> Result<Vec<LabeledClip>> {
    let inner = cfg.clone().with_exec(Execution::Sequential);
    par::map(cfg.exec, clips, |c| clip_features(c, &inner))
        .into_iter()
        .collect()
}
