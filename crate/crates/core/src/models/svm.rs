//! Soft-margin RBF support vector machine trained with SMO.
//!
//! Working-set selection uses second-order information (maximal violating
//! `i`, then the `j` giving the largest objective decrease). Kernel rows are
//! computed on demand and kept in a bounded cache.

use std::collections::{HashMap, VecDeque};
use std::rc::Rc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{FeatureKind, FeatureVector};
use crate::par::{self, Execution};

use super::norm::NormStats;
use super::Label;

const TAU: f64 = 1e-12;
const ROW_CACHE_BYTES: usize = 256 << 20;

#[derive(Debug, Clone, PartialEq)]
pub struct SmoSettings {
    pub c: f64,
    pub gamma: f64,
    /// Stop when the maximal KKT violation drops below this.
    pub eps: f64,
    pub max_iterations: Option<usize>,
}

impl SmoSettings {
    pub fn new(c: f64, gamma: f64) -> Self {
        Self {
            c,
            gamma,
            eps: 1e-3,
            max_iterations: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SmoSolution {
    pub alpha: Vec<f64>,
    /// Decision function is `sum_i alpha_i y_i K(x_i, x) + bias`.
    pub bias: f64,
    pub iterations: usize,
}

#[inline]
pub fn rbf(a: &[f64], b: &[f64], gamma: f64) -> f64 {
    let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    (-gamma * d2).exp()
}

/// `sum alpha - 1/2 sum_ij alpha_i alpha_j y_i y_j K_ij` (to be maximized).
pub fn dual_objective(points: &[Vec<f64>], y: &[f64], alpha: &[f64], gamma: f64) -> f64 {
    let n = points.len();
    let mut quad = 0.0;
    for i in 0..n {
        if alpha[i] == 0.0 {
            continue;
        }
        for j in 0..n {
            quad += alpha[i] * alpha[j] * y[i] * y[j] * rbf(&points[i], &points[j], gamma);
        }
    }
    alpha.iter().sum::<f64>() - 0.5 * quad
}

struct RowCache<'a> {
    points: &'a [Vec<f64>],
    gamma: f64,
    exec: Execution,
    rows: HashMap<usize, Rc<Vec<f64>>>,
    order: VecDeque<usize>,
    capacity: usize,
}

impl<'a> RowCache<'a> {
    fn new(points: &'a [Vec<f64>], gamma: f64, exec: Execution) -> Self {
        let n = points.len().max(1);
        Self {
            points,
            gamma,
            exec,
            rows: HashMap::new(),
            order: VecDeque::new(),
            capacity: (ROW_CACHE_BYTES / (8 * n)).max(2),
        }
    }

    fn row(&mut self, i: usize) -> Rc<Vec<f64>> {
        if let Some(r) = self.rows.get(&i) {
            return Rc::clone(r);
        }
        if self.rows.len() >= self.capacity {
            if let Some(old) = self.order.pop_front() {
                self.rows.remove(&old);
            }
        }
        let (pts, g) = (self.points, self.gamma);
        let row = par::map_range(self.exec, pts.len(), |j| rbf(&pts[i], &pts[j], g));
        let row = Rc::new(row);
        self.rows.insert(i, Rc::clone(&row));
        self.order.push_back(i);
        row
    }
}

/// Solve the dual problem for labels `y` in {-1, +1}.
pub fn solve_smo(
    points: &[Vec<f64>],
    y: &[f64],
    settings: &SmoSettings,
    exec: Execution,
) -> Result<SmoSolution> {
    let n = points.len();
    if y.len() != n {
        return Err(Error::InvalidParameter(
            "labels and points differ in length".into(),
        ));
    }
    if !(settings.c > 0.0) || !(settings.gamma > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "SVM needs C > 0 and gamma > 0 (C={}, gamma={})",
            settings.c, settings.gamma
        )));
    }
    if y.iter().any(|&v| v != 1.0 && v != -1.0) {
        return Err(Error::InvalidParameter("labels must be +1 or -1".into()));
    }
    if !(y.contains(&1.0) && y.contains(&-1.0)) {
        return Err(Error::InsufficientData(
            "SVM training needs both classes".into(),
        ));
    }
    let c = settings.c;
    let max_iter = settings
        .max_iterations
        .unwrap_or_else(|| 10_000_000usize.max(100 * n));

    let mut alpha = vec![0.0; n];
    let mut grad = vec![-1.0; n];
    let mut cache = RowCache::new(points, settings.gamma, exec);
    let mut iterations = 0;

    let in_up = |a: f64, yt: f64| (yt > 0.0 && a < c) || (yt < 0.0 && a > 0.0);
    let in_low = |a: f64, yt: f64| (yt > 0.0 && a > 0.0) || (yt < 0.0 && a < c);

    loop {
        let mut gmax = f64::NEG_INFINITY;
        let mut i = usize::MAX;
        for t in 0..n {
            if in_up(alpha[t], y[t]) {
                let v = -y[t] * grad[t];
                if v > gmax {
                    gmax = v;
                    i = t;
                }
            }
        }
        if i == usize::MAX {
            break;
        }
        let ki = cache.row(i);
        let mut gmin = f64::INFINITY;
        let mut j = usize::MAX;
        let mut best = f64::INFINITY;
        for t in 0..n {
            if !in_low(alpha[t], y[t]) {
                continue;
            }
            let v = -y[t] * grad[t];
            gmin = gmin.min(v);
            let b = gmax - v;
            if b > 0.0 {
                let a = (2.0 - 2.0 * ki[t]).max(TAU);
                let obj = -(b * b) / a;
                if obj < best {
                    best = obj;
                    j = t;
                }
            }
        }
        if gmax - gmin < settings.eps || j == usize::MAX {
            break;
        }
        if iterations >= max_iter {
            return Err(Error::Numeric(format!(
                "SMO did not converge in {max_iter} iterations"
            )));
        }
        iterations += 1;

        let kj = cache.row(j);
        let (yi, yj) = (y[i], y[j]);
        let qij = yi * yj * ki[j];
        let (old_i, old_j) = (alpha[i], alpha[j]);
        if yi != yj {
            let quad = (2.0 + 2.0 * qij).max(TAU);
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > 0.0 {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = c - diff;
                }
            } else if alpha[j] > c {
                alpha[j] = c;
                alpha[i] = c + diff;
            }
        } else {
            let quad = (2.0 - 2.0 * qij).max(TAU);
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > c {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = sum - c;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > c {
                if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = sum - c;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }
        let (di, dj) = (alpha[i] - old_i, alpha[j] - old_j);
        for t in 0..n {
            grad[t] += y[t] * (yi * ki[t] * di + yj * kj[t] * dj);
        }
    }

    // rho from free vectors, else midpoint of the feasible interval
    let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut free, mut free_sum) = (0usize, 0.0);
    for t in 0..n {
        let yg = y[t] * grad[t];
        if alpha[t] >= c {
            if y[t] < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if alpha[t] <= 0.0 {
            if y[t] > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            free += 1;
            free_sum += yg;
        }
    }
    let rho = if free > 0 {
        free_sum / free as f64
    } else {
        0.5 * (ub + lb)
    };
    Ok(SmoSolution {
        alpha,
        bias: -rho,
        iterations,
    })
}

/// `1 / (d * Var)` with `Var` the mean per-coordinate variance.
pub fn default_gamma(points: &[Vec<f64>]) -> Result<f64> {
    let n = points.len();
    let d = points.first().map_or(0, Vec::len);
    if n < 2 || d == 0 {
        return Err(Error::InsufficientData(
            "gamma needs at least 2 points".into(),
        ));
    }
    let mut var_sum = 0.0;
    for k in 0..d {
        let mean = points.iter().map(|p| p[k]).sum::<f64>() / n as f64;
        var_sum += points.iter().map(|p| (p[k] - mean).powi(2)).sum::<f64>() / n as f64;
    }
    let var = var_sum / d as f64;
    if !(var > 0.0) {
        return Err(Error::Numeric("training points have zero variance".into()));
    }
    Ok(1.0 / (d as f64 * var))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmModel {
    pub norm: NormStats,
    pub support_vectors: Vec<Vec<f64>>,
    /// `alpha_i * y_i` per support vector.
    pub dual_coef: Vec<f64>,
    pub bias: f64,
    pub gamma: f64,
    pub c: f64,
}

impl SvmModel {
    /// Train on labelled frames; invalid frames are skipped. `gamma: None`
    /// uses [`default_gamma`] on the normalized training points.
    pub fn fit(
        train: &[(FeatureVector, Label)],
        features: &[FeatureKind],
        c: f64,
        gamma: Option<f64>,
        exec: Execution,
    ) -> Result<Self> {
        let frames: Vec<FeatureVector> = train.iter().map(|(v, _)| *v).collect();
        let norm = NormStats::fit(&frames, features)?;
        let (points, y): (Vec<Vec<f64>>, Vec<f64>) = train
            .iter()
            .filter(|(v, _)| v.valid)
            .map(|(v, l)| (norm.transform(v), l.sign()))
            .unzip();
        let gamma = match gamma {
            Some(g) => g,
            None => default_gamma(&points)?,
        };
        let sol = solve_smo(&points, &y, &SmoSettings::new(c, gamma), exec)?;
        let mut support_vectors = Vec::new();
        let mut dual_coef = Vec::new();
        for (i, &a) in sol.alpha.iter().enumerate() {
            if a > 0.0 {
                support_vectors.push(points[i].clone());
                dual_coef.push(a * y[i]);
            }
        }
        Ok(Self {
            norm,
            support_vectors,
            dual_coef,
            bias: sol.bias,
            gamma,
            c,
        })
    }

    pub fn decision_value(&self, point: &[f64]) -> f64 {
        self.support_vectors
            .iter()
            .zip(&self.dual_coef)
            .map(|(sv, a)| a * rbf(sv, point, self.gamma))
            .sum::<f64>()
            + self.bias
    }

    /// Decision value of a frame, `None` when gated out.
    pub fn score(&self, v: &FeatureVector) -> Option<f64> {
        v.valid
            .then(|| self.decision_value(&self.norm.transform(v)))
    }

    pub fn classify_point(&self, point: &[f64]) -> Label {
        Label::abnormal_if(self.decision_value(point) > 0.0)
    }

    pub fn classify_frame(&self, v: &FeatureVector) -> Label {
        self.score(v)
            .map_or(Label::Normal, |f| Label::abnormal_if(f > 0.0))
    }

    /// Majority vote; a tie is abnormal, gated frames vote normal.
    pub fn classify_clip(&self, frames: &[FeatureVector]) -> Label {
        majority(frames.iter().map(|v| self.classify_frame(v)))
    }
}

/// Majority of `labels`; ties are abnormal, an empty clip is normal.
pub fn majority(labels: impl IntoIterator<Item = Label>) -> Label {
    let (mut total, mut abnormal) = (0usize, 0usize);
    for l in labels {
        total += 1;
        abnormal += (l == Label::Abnormal) as usize;
    }
    Label::abnormal_if(total > 0 && 2 * abnormal >= total)
}
