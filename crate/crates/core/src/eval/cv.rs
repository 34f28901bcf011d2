use std::ops::RangeInclusive;

use rand::seq::SliceRandom;

use super::LabeledClip;
use crate::error::{Error, Result};
use crate::features::{FeatureKind, FeatureVector};
use crate::models::{DetectorKind, GmmModel, Label, SvmModel};
use crate::par::{self, Execution};
use crate::seed;

/// Fold assignments are redrawn at most this many times.
pub const MAX_REFOLDS: usize = 5;

#[derive(Debug, Clone, PartialEq)]
pub struct CvOptions {
    pub folds: usize,
    pub detector: DetectorKind,
    pub features: Vec<FeatureKind>,
    pub seed: u64,
    pub svm_c: f64,
    /// `None` picks the variance-scaled default.
    pub svm_gamma: Option<f64>,
    pub component_range: RangeInclusive<usize>,
    pub exec: Execution,
}

impl Default for CvOptions {
    fn default() -> Self {
        Self {
            folds: 5,
            detector: DetectorKind::Svm,
            features: FeatureKind::ALL.to_vec(),
            seed: 0,
            svm_c: 1.0,
            svm_gamma: None,
            component_range: 1..=4,
            exec: Execution::Sequential,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvResult {
    pub fold_accuracies: Vec<f64>,
    pub mean_accuracy: f64,
    /// 1.96 times the standard error of the fold accuracies.
    pub ci_half_width: f64,
    /// Fold index of every clip.
    pub assignment: Vec<usize>,
    /// Predicted clip labels, in input order.
    pub predictions: Vec<Label>,
    /// Redraws needed before every training fold held both classes.
    pub refolds: usize,
}

/// Deal each class round-robin into `folds` after a seeded shuffle.
pub fn stratified_folds(labels: &[Label], folds: usize, seed: u64) -> Vec<usize> {
    let mut rng = seed::rng(seed, &[0xf0]);
    let mut out = vec![0; labels.len()];
    let mut next = 0;
    for class in [Label::Normal, Label::Abnormal] {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        idx.shuffle(&mut rng);
        for i in idx {
            out[i] = next % folds;
            next += 1;
        }
    }
    out
}

fn training_ok(labels: &[Label], assignment: &[usize], folds: usize) -> bool {
    (0..folds).all(|f| {
        let train = || labels.iter().zip(assignment).filter(|&(_, &a)| a != f);
        let test_n = assignment.iter().filter(|&&a| a == f).count();
        test_n > 0
            && train().any(|(l, _)| l.is_abnormal())
            && train().any(|(l, _)| !l.is_abnormal())
    })
}

/// Clip-level k-fold cross-validation.
pub fn clip_cv_protocol(clips: &[LabeledClip], opts: &CvOptions) -> Result<CvResult> {
    let k = opts.folds;
    if k < 2 {
        return Err(Error::InvalidParameter(format!(
            "need at least 2 folds, got {k}"
        )));
    }
    let labels: Vec<Label> = clips.iter().map(|c| c.label).collect();
    for class in [Label::Normal, Label::Abnormal] {
        let n = labels.iter().filter(|&&l| l == class).count();
        if n < k {
            return Err(Error::InsufficientData(format!(
                "{k}-fold cross-validation needs {k} {class} clips, got {n}"
            )));
        }
    }
    let mut found = None;
    for attempt in 0..MAX_REFOLDS {
        let a = stratified_folds(&labels, k, seed::derive_seed(opts.seed, &[attempt as u64]));
        if training_ok(&labels, &a, k) {
            found = Some((a, attempt));
            break;
        }
    }
    let (assignment, refolds) = found.ok_or_else(|| {
        Error::InsufficientData(format!(
            "no fold assignment in {MAX_REFOLDS} attempts kept both classes in training"
        ))
    })?;

    let folds: Vec<usize> = (0..k).collect();
    let per_fold = par::map(opts.exec, &folds, |&f| -> Result<Vec<(usize, Label)>> {
        let train: Vec<&LabeledClip> = clips
            .iter()
            .zip(&assignment)
            .filter(|&(_, &a)| a != f)
            .map(|(c, _)| c)
            .collect();
        let classify: ClipClassifier = match opts.detector {
            DetectorKind::Svm => {
                let frames: Vec<(FeatureVector, Label)> = train
                    .iter()
                    .flat_map(|c| c.frames.iter().copied().zip(c.frame_labels.iter().copied()))
                    .collect();
                let m = SvmModel::fit(
                    &frames,
                    &opts.features,
                    opts.svm_c,
                    opts.svm_gamma,
                    opts.exec,
                )?;
                Box::new(move |v| m.classify_clip(v))
            }
            DetectorKind::Gmm => {
                let frames: Vec<FeatureVector> = train
                    .iter()
                    .filter(|c| !c.label.is_abnormal())
                    .flat_map(|c| c.frames.iter().copied())
                    .collect();
                let m = GmmModel::fit(
                    &frames,
                    &opts.features,
                    opts.component_range.clone(),
                    seed::derive_seed(opts.seed, &[0x6d, f as u64]),
                    opts.exec,
                )?;
                Box::new(move |v| m.classify_clip(v))
            }
        };
        Ok(clips
            .iter()
            .enumerate()
            .filter(|&(i, _)| assignment[i] == f)
            .map(|(i, c)| (i, classify(&c.frames)))
            .collect())
    });

    let mut predictions = vec![Label::Normal; clips.len()];
    let mut fold_accuracies = Vec::with_capacity(k);
    for fold in per_fold {
        let fold = fold?;
        let correct = fold.iter().filter(|&&(i, p)| p == labels[i]).count();
        fold_accuracies.push(correct as f64 / fold.len() as f64);
        for (i, p) in fold {
            predictions[i] = p;
        }
    }
    let (mean, ci) = mean_ci(&fold_accuracies);
    Ok(CvResult {
        fold_accuracies,
        mean_accuracy: mean,
        ci_half_width: ci,
        assignment,
        predictions,
        refolds,
    })
}

type ClipClassifier = Box<dyn Fn(&[FeatureVector]) -> Label>;

/// Mean and normal-approximation 95% half-width (sample std).
fn mean_ci(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, 1.96 * var.sqrt() / n.sqrt())
}

/// Rerun the protocol once per feature with that feature left out.
pub fn ablation(clips: &[LabeledClip], opts: &CvOptions) -> Result<Vec<(FeatureKind, CvResult)>> {
    opts.features
        .iter()
        .map(|&drop| {
            let kept: Vec<FeatureKind> = opts
                .features
                .iter()
                .copied()
                .filter(|&f| f != drop)
                .collect();
            let o = CvOptions {
                features: kept,
                ..opts.clone()
            };
            clip_cv_protocol(clips, &o).map(|r| (drop, r))
        })
        .collect()
}
