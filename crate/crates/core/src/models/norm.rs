//! Min-max scaling followed by division by the largest training magnitude.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{FeatureKind, FeatureVector};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    /// Descriptor layout: which features are used, in order.
    pub features: Vec<FeatureKind>,
    pub min: Vec<f64>,
    pub max: Vec<f64>,
    pub max_norm: f64,
}

pub fn fit_norm(train: &[FeatureVector]) -> Result<NormStats> {
    NormStats::fit(train, &FeatureKind::ALL)
}

pub fn transform(v: &FeatureVector, norm: &NormStats) -> Vec<f64> {
    norm.transform(v)
}

impl NormStats {
    /// Fit on the valid vectors of `train`, using only `features`.
    pub fn fit(train: &[FeatureVector], features: &[FeatureKind]) -> Result<Self> {
        if features.is_empty() {
            return Err(Error::InvalidParameter("descriptor has no features".into()));
        }
        let valid: Vec<&FeatureVector> = train.iter().filter(|v| v.valid).collect();
        if valid.len() < 2 {
            return Err(Error::InsufficientData(format!(
                "need at least 2 valid training vectors, got {}",
                valid.len()
            )));
        }
        let d = features.len();
        let mut min = vec![f64::INFINITY; d];
        let mut max = vec![f64::NEG_INFINITY; d];
        for v in &valid {
            for (i, &k) in features.iter().enumerate() {
                let x = v.get(k);
                if !x.is_finite() {
                    return Err(Error::Numeric(format!(
                        "non-finite {} in frame {}",
                        k.name(),
                        v.frame
                    )));
                }
                min[i] = min[i].min(x);
                max[i] = max[i].max(x);
            }
        }
        let mut stats = Self {
            features: features.to_vec(),
            min,
            max,
            max_norm: 1.0,
        };
        let scaled: Vec<Vec<f64>> = valid.iter().map(|v| stats.scale(v)).collect();
        stats.max_norm = max_magnitude(&scaled);
        Ok(stats)
    }

    pub fn dim(&self) -> usize {
        self.features.len()
    }

    /// Per-feature min-max scaling into `[0, 1]`; zero-range features give 0.5.
    pub fn scale(&self, v: &FeatureVector) -> Vec<f64> {
        self.features
            .iter()
            .enumerate()
            .map(|(i, &k)| {
                let range = self.max[i] - self.min[i];
                if range <= 0.0 {
                    0.5
                } else {
                    ((v.get(k) - self.min[i]) / range).clamp(0.0, 1.0)
                }
            })
            .collect()
    }

    pub fn transform(&self, v: &FeatureVector) -> Vec<f64> {
        let mut s = self.scale(v);
        for x in &mut s {
            *x /= self.max_norm;
        }
        s
    }

    /// Transform every valid vector, skipping invalid ones.
    pub fn transform_valid(&self, vs: &[FeatureVector]) -> Vec<Vec<f64>> {
        vs.iter()
            .filter(|v| v.valid)
            .map(|v| self.transform(v))
            .collect()
    }
}

/// Largest L2 magnitude among `vs`.
pub fn max_magnitude(vs: &[Vec<f64>]) -> f64 {
    vs.iter().map(|v| norm2(v)).fold(0.0, f64::max)
}

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}
