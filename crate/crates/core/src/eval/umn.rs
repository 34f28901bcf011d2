use std::ops::RangeInclusive;

use super::roc::{frame_roc, RocCurve};
use super::LabeledClip;
use crate::error::{Error, Result};
use crate::features::{FeatureKind, FeatureVector};
use crate::models::{GmmModel, Label};
use crate::par::{self, Execution};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    /// Train on the scene's own leading frames.
    SingleScene,
    /// Train on the leading frames of every other scene.
    CrossScene,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::SingleScene => "single_scene",
            Split::CrossScene => "cross_scene",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UmnOptions {
    pub train_frames: usize,
    pub features: Vec<FeatureKind>,
    pub component_range: RangeInclusive<usize>,
    pub seed: u64,
    pub exec: Execution,
}

impl Default for UmnOptions {
    fn default() -> Self {
        Self {
            train_frames: 200,
            features: FeatureKind::ALL.to_vec(),
            component_range: 1..=4,
            seed: 0,
            exec: Execution::Sequential,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneResult {
    pub scene: String,
    pub roc: RocCurve,
    pub chosen_components: usize,
    /// Test frames (score, truth) in clip order.
    pub scores: Vec<(f64, Label)>,
    /// Test frames left out because they were gated and have no score.
    pub excluded_frames: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UmnResult {
    pub split: Split,
    pub scenes: Vec<SceneResult>,
    /// ROC over the test frames of every scene together.
    pub pooled: RocCurve,
}

impl UmnResult {
    pub fn mean_scene_auc(&self) -> f64 {
        self.scenes.iter().map(|s| s.roc.auc).sum::<f64>() / self.scenes.len() as f64
    }

    pub fn excluded_frames(&self) -> usize {
        self.scenes.iter().map(|s| s.excluded_frames).sum()
    }
}

/// Frame-level protocol: the leading `train_frames` of each clip are the
/// normal training data; the remaining frames are scored by GMM log-prob.
pub fn umn_protocol(clips: &[LabeledClip], split: Split, opts: &UmnOptions) -> Result<UmnResult> {
    for c in clips {
        if c.frames.len() <= opts.train_frames {
            return Err(Error::InsufficientData(format!(
                "clip {} has {} frames, needs more than {}",
                c.name,
                c.frames.len(),
                opts.train_frames
            )));
        }
        if c.frame_labels.len() != c.frames.len() {
            return Err(Error::InvalidParameter(format!(
                "clip {} label count differs from frame count",
                c.name
            )));
        }
    }
    let mut scenes: Vec<&str> = Vec::new();
    for c in clips {
        if !scenes.contains(&c.scene.as_str()) {
            scenes.push(&c.scene);
        }
    }
    if split == Split::CrossScene && scenes.len() < 2 {
        return Err(Error::InsufficientData(
            "cross-scene split needs at least two scenes".into(),
        ));
    }
    let results = par::map(opts.exec, &scenes, |&scene| {
        let train: Vec<FeatureVector> = clips
            .iter()
            .filter(|c| (c.scene == scene) == (split == Split::SingleScene))
            .flat_map(|c| c.frames[..opts.train_frames].iter().copied())
            .collect();
        let scene_idx = scenes.iter().position(|s| *s == scene).unwrap_or(0) as u64;
        let model = GmmModel::fit(
            &train,
            &opts.features,
            opts.component_range.clone(),
            seed::derive_seed(opts.seed, &[scene_idx]),
            opts.exec,
        )?;
        let mut scores = Vec::new();
        let mut excluded = 0;
        for c in clips.iter().filter(|c| c.scene == scene) {
            for (v, &l) in c.frames.iter().zip(&c.frame_labels).skip(opts.train_frames) {
                match model.score(v) {
                    Some(s) => scores.push((s, l)),
                    None => excluded += 1,
                }
            }
        }
        Ok(SceneResult {
            scene: scene.to_string(),
            roc: frame_roc(&scores)?,
            chosen_components: model.chosen_components,
            scores,
            excluded_frames: excluded,
        })
    });
    let scenes = results.into_iter().collect::<Result<Vec<_>>>()?;
    let all: Vec<(f64, Label)> = scenes
        .iter()
        .flat_map(|s| s.scores.iter().copied())
        .collect();
    Ok(UmnResult {
        split,
        pooled: frame_roc(&all)?,
        scenes,
    })
}
