//! Descriptor normalization and the two detectors.

pub mod gmm;
pub mod linalg;
pub mod norm;
pub mod otsu;
pub mod svm;

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use gmm::{fit_em, select_mixture, EmFit, EmSettings, GmmModel, Mixture};
pub use norm::{fit_norm, transform, NormStats};
pub use otsu::{otsu_bin_split, otsu_threshold, Binning, OtsuThreshold};
pub use svm::{default_gamma, majority, solve_smo, SmoSettings, SmoSolution, SvmModel};

use crate::error::{Error, Result};
use crate::features::{FeatureKind, FeatureVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Normal,
    Abnormal,
}

impl Label {
    pub fn abnormal_if(cond: bool) -> Self {
        if cond {
            Label::Abnormal
        } else {
            Label::Normal
        }
    }

    /// SVM target: +1 abnormal, -1 normal.
    pub fn sign(self) -> f64 {
        match self {
            Label::Normal => -1.0,
            Label::Abnormal => 1.0,
        }
    }

    pub fn is_abnormal(self) -> bool {
        self == Label::Abnormal
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Normal => "normal",
            Label::Abnormal => "abnormal",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Label {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "normal" | "0" => Ok(Label::Normal),
            "abnormal" | "1" => Ok(Label::Abnormal),
            other => Err(Error::Parse(format!("unknown label {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DetectorKind {
    Gmm,
    Svm,
}

impl FromStr for DetectorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gmm" => Ok(DetectorKind::Gmm),
            "svm" => Ok(DetectorKind::Svm),
            other => Err(Error::InvalidParameter(format!(
                "unknown detector {other:?}"
            ))),
        }
    }
}

/// A trained detector of either kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Detector {
    Gmm(GmmModel),
    Svm(SvmModel),
}

impl Detector {
    pub fn kind(&self) -> DetectorKind {
        match self {
            Detector::Gmm(_) => DetectorKind::Gmm,
            Detector::Svm(_) => DetectorKind::Svm,
        }
    }

    pub fn norm(&self) -> &NormStats {
        match self {
            Detector::Gmm(m) => &m.norm,
            Detector::Svm(m) => &m.norm,
        }
    }

    pub fn features(&self) -> &[FeatureKind] {
        &self.norm().features
    }

    /// Frame score where lower means more abnormal; `None` for gated frames.
    pub fn score(&self, v: &FeatureVector) -> Option<f64> {
        match self {
            Detector::Gmm(m) => m.score(v),
            Detector::Svm(m) => m.score(v).map(|f| -f),
        }
    }

    pub fn classify_frame(&self, v: &FeatureVector) -> Label {
        match self {
            Detector::Gmm(m) => m.classify_frame(v),
            Detector::Svm(m) => m.classify_frame(v),
        }
    }

    pub fn classify_clip(&self, frames: &[FeatureVector]) -> Label {
        match self {
            Detector::Gmm(m) => m.classify_clip(frames),
            Detector::Svm(m) => m.classify_clip(frames),
        }
    }
}

pub const MODEL_FORMAT: &str = "holocrowd-model";
pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format: String,
    pub version: u32,
    /// Free-form provenance lines (tool version, config hash, seed).
    pub meta: Vec<String>,
    pub detector: Detector,
}

impl ModelFile {
    pub fn new(detector: Detector, meta: Vec<String>) -> Self {
        Self {
            format: MODEL_FORMAT.into(),
            version: MODEL_VERSION,
            meta,
            detector,
        }
    }

    pub fn write(&self, w: impl Write) -> Result<()> {
        serde_json::to_writer_pretty(w, self).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn read(r: impl Read) -> Result<Self> {
        let m: ModelFile = serde_json::from_reader(r).map_err(|e| Error::Parse(e.to_string()))?;
        if m.format != MODEL_FORMAT {
            return Err(Error::Parse(format!(
                "not a model file (format {:?})",
                m.format
            )));
        }
        if m.version != MODEL_VERSION {
            return Err(Error::Parse(format!(
                "unsupported model version {}",
                m.version
            )));
        }
        Ok(m)
    }
}

/// Fail unless the frames were computed with every feature the model uses.
/// Feature files always carry the full descriptor; the model layout picks
/// its subset, so the check is on the declared input width.
pub fn check_dimensionality(model: &Detector, input_features: &[FeatureKind]) -> Result<()> {
    let want = model.features();
    if want.len() != input_features.len() || want.iter().any(|f| !input_features.contains(f)) {
        return Err(Error::Dimensionality {
            expected: want.len(),
            got: input_features.len(),
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn label_parsing() {
        assert_eq!("abnormal".parse::<Label>().unwrap(), Label::Abnormal);
        assert_eq!("0".parse::<Label>().unwrap(), Label::Normal);
        assert!("x".parse::<Label>().is_err());
        assert_eq!(Label::Abnormal.sign(), 1.0);
    }
}
