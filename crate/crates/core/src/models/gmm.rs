//! Full-covariance Gaussian mixtures: EM fitting, BIC selection and the
//! log-probability outlier detector built on top.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::ops::RangeInclusive;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{FeatureKind, FeatureVector};
use crate::par::{self, Execution};
use crate::seed;

use super::linalg::{cholesky, log_det_from_cholesky, mahalanobis_sq};
use super::norm::NormStats;
use super::otsu::{otsu_threshold, OtsuThreshold};
use super::Label;

/// Smallest training set accepted for a full-covariance fit.
pub const MIN_TRAINING_POINTS: usize = 50;
pub const OTSU_BINS: usize = 256;

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ComponentRepr {
    weight: f64,
    mean: Vec<f64>,
    covariance: Vec<f64>,
}

/// One weighted Gaussian with its cached Cholesky factor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ComponentRepr", into = "ComponentRepr")]
pub struct Component {
    pub weight: f64,
    pub mean: Vec<f64>,
    /// Row-major `d x d`, regularization included.
    pub covariance: Vec<f64>,
    chol: Vec<f64>,
    /// `ln w - (d ln 2pi + ln|S|) / 2`
    log_coef: f64,
}

impl Component {
    pub fn new(weight: f64, mean: Vec<f64>, covariance: Vec<f64>) -> Result<Self> {
        let d = mean.len();
        if covariance.len() != d * d {
            return Err(Error::InvalidParameter(format!(
                "covariance has {} entries for dimension {d}",
                covariance.len()
            )));
        }
        if !(weight > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "component weight {weight}"
            )));
        }
        let chol = cholesky(&covariance, d)
            .ok_or_else(|| Error::Numeric("covariance is not positive definite".into()))?;
        let log_coef =
            weight.ln() - 0.5 * (d as f64 * (2.0 * PI).ln() + log_det_from_cholesky(&chol, d));
        Ok(Self {
            weight,
            mean,
            covariance,
            chol,
            log_coef,
        })
    }

    /// `ln w + ln N(x; mean, cov)`
    fn weighted_log_density(&self, x: &[f64], buf: &mut [f64]) -> f64 {
        for (b, (xi, mi)) in buf.iter_mut().zip(x.iter().zip(&self.mean)) {
            *b = xi - mi;
        }
        self.log_coef - 0.5 * mahalanobis_sq(&self.chol, self.mean.len(), buf)
    }
}

impl TryFrom<ComponentRepr> for Component {
    type Error = Error;

    fn try_from(r: ComponentRepr) -> Result<Self> {
        Component::new(r.weight, r.mean, r.covariance)
    }
}

impl From<Component> for ComponentRepr {
    fn from(c: Component) -> Self {
        ComponentRepr {
            weight: c.weight,
            mean: c.mean,
            covariance: c.covariance,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mixture {
    pub dim: usize,
    pub components: Vec<Component>,
}

impl Mixture {
    pub fn new(components: Vec<Component>) -> Result<Self> {
        let dim = components
            .first()
            .map(|c| c.mean.len())
            .ok_or_else(|| Error::InvalidParameter("mixture has no components".into()))?;
        if components.iter().any(|c| c.mean.len() != dim) {
            return Err(Error::InvalidParameter(
                "components differ in dimension".into(),
            ));
        }
        Ok(Self { dim, components })
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    /// `ln sum_m w_m N(x; mu_m, S_m)` via log-sum-exp.
    pub fn log_prob(&self, x: &[f64]) -> f64 {
        let mut buf = [0.0f64; 16];
        let mut terms = [0.0f64; 16];
        let mut big;
        let (buf, terms) = if self.dim <= 16 && self.len() <= 16 {
            (&mut buf[..self.dim], &mut terms[..self.len()])
        } else {
            big = (vec![0.0; self.dim], vec![0.0; self.len()]);
            (&mut big.0[..], &mut big.1[..])
        };
        for (t, c) in terms.iter_mut().zip(&self.components) {
            *t = c.weighted_log_density(x, buf);
        }
        log_sum_exp(terms)
    }
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmSettings {
    pub max_iterations: usize,
    /// Stop once the mean per-point log-likelihood improves by less than this.
    pub tolerance: f64,
    /// Independent k-means++ initializations; the best likelihood wins.
    pub n_init: usize,
    /// Extra attempts allowed after degenerate fits.
    pub max_restarts: usize,
    /// Added to every covariance diagonal in the M-step.
    pub regularization: f64,
}

impl Default for EmSettings {
    fn default() -> Self {
        Self {
            max_iterations: 500,
            tolerance: 1e-9,
            n_init: 3,
            max_restarts: 5,
            regularization: 1e-6,
        }
    }
}

#[derive(Debug, Clone)]
pub struct EmFit {
    pub mixture: Mixture,
    /// Total training log-likelihood of `mixture`.
    pub log_likelihood: f64,
    /// Mean per-point log-likelihood after every E-step.
    pub trace: Vec<f64>,
}

/// Free parameters of a full-covariance mixture.
pub fn parameter_count(m: usize, d: usize) -> usize {
    (m - 1) + m * d + m * d * (d + 1) / 2
}

pub fn bic(log_likelihood: f64, m: usize, d: usize, n: usize) -> f64 {
    -2.0 * log_likelihood + parameter_count(m, d) as f64 * (n as f64).ln()
}

fn check_points(points: &[Vec<f64>]) -> Result<usize> {
    let d = points
        .first()
        .map(Vec::len)
        .ok_or_else(|| Error::InsufficientData("no training points".into()))?;
    if d == 0 || d > 16 {
        return Err(Error::InvalidParameter(format!(
            "unsupported dimension {d}"
        )));
    }
    for p in points {
        if p.len() != d {
            return Err(Error::Dimensionality {
                expected: d,
                got: p.len(),
            });
        }
        if p.iter().any(|x| !x.is_finite()) {
            return Err(Error::Numeric("non-finite training point".into()));
        }
    }
    Ok(d)
}

/// Fit an `m`-component mixture. Degenerate attempts are retried with fresh
/// seeds up to `settings.max_restarts` times.
pub fn fit_em(points: &[Vec<f64>], m: usize, seed: u64, settings: &EmSettings) -> Result<EmFit> {
    let d = check_points(points)?;
    if m == 0 || points.len() < m * (d + 1) {
        return Err(Error::InsufficientData(format!(
            "{} points cannot support {m} components in {d} dimensions",
            points.len()
        )));
    }
    let mut best: Option<EmFit> = None;
    let mut successes = 0;
    let mut failures = 0;
    let mut attempt = 0u64;
    let mut last_err = None;
    while successes < settings.n_init.max(1) {
        let mut rng = seed::rng(seed, &[m as u64, attempt]);
        attempt += 1;
        match em_once(points, d, m, &mut rng, settings) {
            Ok(fit) => {
                successes += 1;
                if best
                    .as_ref()
                    .is_none_or(|b| fit.log_likelihood > b.log_likelihood)
                {
                    best = Some(fit);
                }
            }
            Err(e) => {
                failures += 1;
                last_err = Some(e);
                if failures > settings.max_restarts {
                    break;
                }
            }
        }
    }
    best.ok_or_else(|| {
        Error::Numeric(format!(
            "EM for {m} components degenerate after {failures} attempts: {}",
            last_err.map_or_else(String::new, |e| e.to_string())
        ))
    })
}

fn em_once(
    points: &[Vec<f64>],
    d: usize,
    m: usize,
    rng: &mut impl Rng,
    settings: &EmSettings,
) -> Result<EmFit> {
    let n = points.len();
    let mut resp = kmeans_assign(points, d, m, rng);
    let mut trace = Vec::new();
    let mut mixture = m_step(points, d, m, &resp, settings.regularization)?;
    let mut prev = f64::NEG_INFINITY;
    for _ in 0..settings.max_iterations {
        let total = e_step(&mixture, points, m, &mut resp);
        if !total.is_finite() {
            return Err(Error::Numeric("non-finite log-likelihood".into()));
        }
        let mean = total / n as f64;
        trace.push(mean);
        if mean - prev < settings.tolerance {
            break;
        }
        prev = mean;
        mixture = m_step(points, d, m, &resp, settings.regularization)?;
    }
    let log_likelihood = points.iter().map(|p| mixture.log_prob(p)).sum();
    Ok(EmFit {
        mixture,
        log_likelihood,
        trace,
    })
}

/// Responsibilities in place; returns the total log-likelihood.
fn e_step(mix: &Mixture, points: &[Vec<f64>], m: usize, resp: &mut [f64]) -> f64 {
    let mut buf = vec![0.0; mix.dim];
    let mut total = 0.0;
    for (i, p) in points.iter().enumerate() {
        let r = &mut resp[i * m..(i + 1) * m];
        for (rk, c) in r.iter_mut().zip(&mix.components) {
            *rk = c.weighted_log_density(p, &mut buf);
        }
        let lse = log_sum_exp(r);
        for rk in r.iter_mut() {
            *rk = (*rk - lse).exp();
        }
        total += lse;
    }
    total
}

fn m_step(points: &[Vec<f64>], d: usize, m: usize, resp: &[f64], reg: f64) -> Result<Mixture> {
    let n = points.len();
    let mut comps = Vec::with_capacity(m);
    for k in 0..m {
        let nk: f64 = (0..n).map(|i| resp[i * m + k]).sum();
        if nk < (d + 1) as f64 {
            return Err(Error::Numeric(format!(
                "component {k} collapsed (weight {nk:.3})"
            )));
        }
        let mut mean = vec![0.0; d];
        for (i, p) in points.iter().enumerate() {
            let r = resp[i * m + k];
            for j in 0..d {
                mean[j] += r * p[j];
            }
        }
        for x in &mut mean {
            *x /= nk;
        }
        let mut cov = vec![0.0; d * d];
        let mut diff = vec![0.0; d];
        for (i, p) in points.iter().enumerate() {
            let r = resp[i * m + k];
            for j in 0..d {
                diff[j] = p[j] - mean[j];
            }
            for a in 0..d {
                for b in 0..=a {
                    cov[a * d + b] += r * diff[a] * diff[b];
                }
            }
        }
        for a in 0..d {
            for b in 0..=a {
                cov[a * d + b] /= nk;
                cov[b * d + a] = cov[a * d + b];
            }
        }
        let trace: f64 = (0..d).map(|a| cov[a * d + a]).sum();
        if trace < 1e-12 {
            return Err(Error::Numeric(format!("component {k} has zero spread")));
        }
        for a in 0..d {
            cov[a * d + a] += reg;
        }
        comps.push(Component::new(nk / n as f64, mean, cov)?);
    }
    Mixture::new(comps)
}

/// k-means++ seeding followed by a few Lloyd iterations; returns one-hot
/// responsibilities.
fn kmeans_assign(points: &[Vec<f64>], d: usize, m: usize, rng: &mut impl Rng) -> Vec<f64> {
    let n = points.len();
    let dist2 = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>();
    let mut centers: Vec<Vec<f64>> = vec![points[rng.random_range(0..n)].clone()];
    let mut best_d: Vec<f64> = points.iter().map(|p| dist2(p, &centers[0])).collect();
    while centers.len() < m {
        let total: f64 = best_d.iter().sum();
        let idx = if total > 0.0 {
            let mut t = rng.random::<f64>() * total;
            let mut pick = n - 1;
            for (i, &w) in best_d.iter().enumerate() {
                if t < w {
                    pick = i;
                    break;
                }
                t -= w;
            }
            pick
        } else {
            rng.random_range(0..n)
        };
        centers.push(points[idx].clone());
        for (bd, p) in best_d.iter_mut().zip(points) {
            *bd = bd.min(dist2(p, &centers[centers.len() - 1]));
        }
    }
    let mut assign = vec![0usize; n];
    for _ in 0..20 {
        let mut changed = false;
        for (i, p) in points.iter().enumerate() {
            let k = (0..m)
                .min_by(|&a, &b| dist2(p, &centers[a]).total_cmp(&dist2(p, &centers[b])))
                .unwrap();
            if k != assign[i] {
                assign[i] = k;
                changed = true;
            }
        }
        let mut sums = vec![vec![0.0; d]; m];
        let mut counts = vec![0usize; m];
        for (p, &k) in points.iter().zip(&assign) {
            counts[k] += 1;
            for j in 0..d {
                sums[k][j] += p[j];
            }
        }
        for k in 0..m {
            if counts[k] > 0 {
                centers[k] = sums[k].iter().map(|s| s / counts[k] as f64).collect();
            }
        }
        if !changed {
            break;
        }
    }
    let mut resp = vec![0.0; n * m];
    for (i, &k) in assign.iter().enumerate() {
        resp[i * m + k] = 1.0;
    }
    resp
}

#[derive(Debug, Clone)]
pub struct Selection {
    pub fit: EmFit,
    pub chosen_components: usize,
    /// `(M, BIC)` for every component count that fitted.
    pub bic_table: Vec<(usize, f64)>,
}

/// Fit every component count in `range` and keep the lowest BIC. Counts
/// whose fit stays degenerate are left out of the table.
pub fn select_mixture(
    points: &[Vec<f64>],
    range: RangeInclusive<usize>,
    seed: u64,
    settings: &EmSettings,
    exec: Execution,
) -> Result<Selection> {
    let d = check_points(points)?;
    let ms: Vec<usize> = range.filter(|&m| m > 0).collect();
    if ms.is_empty() {
        return Err(Error::InvalidParameter("empty component range".into()));
    }
    let fits = par::map(exec, &ms, |&m| fit_em(points, m, seed, settings));
    let n = points.len();
    let mut best: Option<(usize, f64, EmFit)> = None;
    let mut table = Vec::new();
    let mut last_err = None;
    for (m, fit) in ms.into_iter().zip(fits) {
        match fit {
            Ok(f) => {
                let b = bic(f.log_likelihood, m, d, n);
                table.push((m, b));
                if best.as_ref().is_none_or(|(_, bb, _)| b < *bb) {
                    best = Some((m, b, f));
                }
            }
            Err(e) => last_err = Some(e),
        }
    }
    match best {
        Some((m, _, fit)) => Ok(Selection {
            fit,
            chosen_components: m,
            bic_table: table,
        }),
        None => Err(last_err.unwrap_or_else(|| Error::Numeric("no mixture fitted".into()))),
    }
}

/// Outlier detector: a mixture over normalized descriptors plus an Otsu
/// threshold on the training log-probabilities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GmmModel {
    pub norm: NormStats,
    pub mixture: Mixture,
    pub chosen_components: usize,
    pub bic_table: Vec<(usize, f64)>,
    pub threshold: OtsuThreshold,
}

impl GmmModel {
    /// Fit on the valid frames of `train`. Invalid frames are ignored.
    pub fn fit(
        train: &[FeatureVector],
        features: &[FeatureKind],
        range: RangeInclusive<usize>,
        seed: u64,
        exec: Execution,
    ) -> Result<Self> {
        let norm = NormStats::fit(train, features)?;
        let points = norm.transform_valid(train);
        if points.len() < MIN_TRAINING_POINTS {
            return Err(Error::InsufficientData(format!(
                "GMM needs at least {MIN_TRAINING_POINTS} valid frames, got {}",
                points.len()
            )));
        }
        let sel = select_mixture(&points, range, seed, &EmSettings::default(), exec)?;
        let lp: Vec<f64> = points.iter().map(|p| sel.fit.mixture.log_prob(p)).collect();
        let threshold = otsu_threshold(&lp, OTSU_BINS)?;
        Ok(Self {
            norm,
            mixture: sel.fit.mixture,
            chosen_components: sel.chosen_components,
            bic_table: sel.bic_table,
            threshold,
        })
    }

    pub fn log_prob(&self, point: &[f64]) -> f64 {
        self.mixture.log_prob(point)
    }

    /// Log-probability of a frame, `None` when the frame is gated out.
    pub fn score(&self, v: &FeatureVector) -> Option<f64> {
        v.valid.then(|| self.log_prob(&self.norm.transform(v)))
    }

    /// Frame rule: abnormal strictly below the threshold.
    pub fn decide(&self, log_prob: f64) -> Label {
        Label::abnormal_if(log_prob < self.threshold.threshold)
    }

    pub fn classify_point(&self, point: &[f64]) -> Label {
        self.decide(self.log_prob(point))
    }

    pub fn classify_frame(&self, v: &FeatureVector) -> Label {
        self.score(v).map_or(Label::Normal, |lp| self.decide(lp))
    }

    /// Mode of the clip's log-probability histogram on the training grid.
    pub fn classify_clip(&self, frames: &[FeatureVector]) -> Label {
        let lps: Vec<f64> = frames.iter().filter_map(|v| self.score(v)).collect();
        self.classify_log_probs(&lps)
    }

    /// Mode bin of `lps` on the training grid. Bins tied for the largest
    /// count are resolved toward the clip's median log-prob, then the lower
    /// bin; an empty clip is normal.
    pub fn classify_log_probs(&self, lps: &[f64]) -> Label {
        let grid = &self.threshold.binning;
        let mut counts: BTreeMap<i64, usize> = BTreeMap::new();
        for &lp in lps {
            *counts.entry(grid.index(lp)).or_default() += 1;
        }
        let Some(&top) = counts.values().max() else {
            return Label::Normal;
        };
        let mut sorted = lps.to_vec();
        sorted.sort_by(f64::total_cmp);
        let median = sorted[sorted.len() / 2];
        let mode = counts
            .iter()
            .filter(|&(_, &c)| c == top)
            .map(|(&b, _)| b)
            .min_by(|&a, &b| {
                let (da, db) = (
                    (grid.center(a) - median).abs(),
                    (grid.center(b) - median).abs(),
                );
                da.total_cmp(&db).then(a.cmp(&b))
            })
            .expect("non-empty counts");
        Label::abnormal_if(grid.center(mode) < self.threshold.threshold)
    }
}
