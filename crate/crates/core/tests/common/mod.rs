//! Independent reference implementations used as test oracles.
#![allow(dead_code, clippy::needless_range_loop)]

use holocrowd::frame_io::Frame;
use holocrowd::tracker::{FrameTrackState, TrackedPoint};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

/// Exhaustive Otsu split: class 0 is bins `0..k`, first maximum wins.
/// Between-class variance is `(s0*n1 - s1*n0)^2 / (n^2 n0 n1)`; fractions are
/// compared exactly, which needs counts small enough for u128.
pub fn brute_otsu(hist: &[u64]) -> usize {
    let n: u128 = hist.iter().map(|&c| c as u128).sum();
    let s: u128 = hist
        .iter()
        .enumerate()
        .map(|(i, &c)| i as u128 * c as u128)
        .sum();
    let mut best = (1usize, 0u128, 1u128);
    for k in 1..hist.len() {
        let n0: u128 = hist[..k].iter().map(|&c| c as u128).sum();
        let s0: u128 = hist[..k]
            .iter()
            .enumerate()
            .map(|(i, &c)| i as u128 * c as u128)
            .sum();
        let (n1, s1) = (n - n0, s - s0);
        let (num, den) = if n0 == 0 || n1 == 0 {
            (0, 1)
        } else {
            let d = (s0 * n1).abs_diff(s1 * n0);
            (d * d, n0 * n1)
        };
        if num * best.2 > best.1 * den {
            best = (k, num, den);
        }
    }
    best.0
}

/// Histogram of 2..=256 bins in one of several shapes, counts below 1000.
pub fn random_histogram(rng: &mut impl Rng, shape: usize) -> Vec<u64> {
    let bins = rng.random_range(2..=256usize);
    let mut h = vec![0u64; bins];
    match shape % 5 {
        0 => h.iter_mut().for_each(|c| *c = rng.random_range(0..1000)),
        1 => {
            // two bumps
            let (a, b) = (rng.random_range(0..bins), rng.random_range(0..bins));
            let w = (bins as f64 / 10.0).max(0.5);
            for (i, c) in h.iter_mut().enumerate() {
                let g = |m: usize| (-((i as f64 - m as f64) / w).powi(2)).exp();
                *c = (600.0 * g(a) + 300.0 * g(b)).round() as u64 + rng.random_range(0..3);
            }
        }
        2 => h.iter_mut().for_each(|c| {
            if rng.random_bool(0.1) {
                *c = rng.random_range(1..1000);
            }
        }),
        3 => {
            // plateau with spikes
            let v = rng.random_range(1..50);
            h.iter_mut().for_each(|c| *c = v);
            for _ in 0..3 {
                let i = rng.random_range(0..bins);
                h[i] = rng.random_range(100..1000);
            }
        }
        _ => {
            let r: f64 = rng.random_range(0.8..0.99);
            for (i, c) in h.iter_mut().enumerate() {
                *c = (999.0 * r.powi(i as i32)) as u64;
            }
        }
    }
    if h.iter().filter(|&&c| c > 0).count() < 2 {
        h[0] += 1;
        h[bins - 1] += 1;
    }
    h
}

/// Lower-triangular Cholesky factor of a small SPD matrix (row-major).
pub fn cholesky(a: &[f64], d: usize) -> Vec<f64> {
    let mut l = vec![0.0; d * d];
    for i in 0..d {
        for j in 0..=i {
            let s: f64 = (0..j).map(|k| l[i * d + k] * l[j * d + k]).sum();
            if i == j {
                l[i * d + i] = (a[i * d + i] - s).sqrt();
            } else {
                l[i * d + j] = (a[i * d + j] - s) / l[j * d + j];
            }
        }
    }
    l
}

/// Random SPD covariance `A A^T + floor I`.
pub fn random_covariance(rng: &mut impl Rng, d: usize, spread: f64, floor: f64) -> Vec<f64> {
    let a: Vec<f64> = (0..d * d)
        .map(|_| rng.random_range(-spread..spread))
        .collect();
    let mut c = vec![0.0; d * d];
    for i in 0..d {
        for j in 0..d {
            c[i * d + j] = (0..d).map(|k| a[i * d + k] * a[j * d + k]).sum::<f64>();
        }
        c[i * d + i] += floor;
    }
    c
}

pub struct TrueMixture {
    pub weights: Vec<f64>,
    pub means: Vec<Vec<f64>>,
    pub covariances: Vec<Vec<f64>>,
}

impl TrueMixture {
    pub fn sample(&self, rng: &mut impl Rng, n: usize) -> Vec<Vec<f64>> {
        let d = self.means[0].len();
        let chols: Vec<Vec<f64>> = self.covariances.iter().map(|c| cholesky(c, d)).collect();
        (0..n)
            .map(|_| {
                let u: f64 = rng.random();
                let mut k = 0;
                let mut acc = self.weights[0];
                while u > acc && k + 1 < self.weights.len() {
                    k += 1;
                    acc += self.weights[k];
                }
                let z: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
                (0..d)
                    .map(|i| {
                        self.means[k][i] + (0..=i).map(|j| chols[k][i * d + j] * z[j]).sum::<f64>()
                    })
                    .collect()
            })
            .collect()
    }
}

/// Gaussian elimination with partial pivoting; `None` when singular.
pub fn solve_linear(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() < 1e-12 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for r in col + 1..n {
            let f = a[r][col] / a[col][col];
            for c in col..n {
                a[r][c] -= f * a[col][c];
            }
            b[r] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|c| a[r][c] * x[c]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    Some(x)
}

pub fn rbf(a: &[f64], b: &[f64], gamma: f64) -> f64 {
    (-gamma * a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>()).exp()
}

pub fn dual(points: &[Vec<f64>], y: &[f64], alpha: &[f64], gamma: f64) -> f64 {
    let n = points.len();
    let mut q = 0.0;
    for i in 0..n {
        for j in 0..n {
            q += alpha[i] * alpha[j] * y[i] * y[j] * rbf(&points[i], &points[j], gamma);
        }
    }
    alpha.iter().sum::<f64>() - 0.5 * q
}

/// Exact maximum of the soft-margin dual for a handful of points. Every
/// split of the variables into {0, C, free} is tried; the free ones solve
/// the stationarity system with the equality constraint, and the best
/// feasible candidate is the optimum.
pub fn dual_optimum(points: &[Vec<f64>], y: &[f64], c: f64, gamma: f64) -> f64 {
    let n = points.len();
    let q = |i: usize, j: usize| y[i] * y[j] * rbf(&points[i], &points[j], gamma);
    let mut best = f64::NEG_INFINITY;
    for code in 0..3usize.pow(n as u32) {
        let mut state = vec![0u8; n];
        let mut x = code;
        for s in state.iter_mut() {
            *s = (x % 3) as u8;
            x /= 3;
        }
        let free: Vec<usize> = (0..n).filter(|&i| state[i] == 2).collect();
        let mut alpha: Vec<f64> = state
            .iter()
            .map(|&s| if s == 1 { c } else { 0.0 })
            .collect();
        if !free.is_empty() {
            // unknowns: alpha_free and the multiplier b
            let m = free.len();
            let mut a = vec![vec![0.0; m + 1]; m + 1];
            let mut rhs = vec![0.0; m + 1];
            for (r, &i) in free.iter().enumerate() {
                for (cc, &j) in free.iter().enumerate() {
                    a[r][cc] = q(i, j);
                }
                a[r][m] = y[i];
                rhs[r] = 1.0
                    - (0..n)
                        .filter(|&j| state[j] == 1)
                        .map(|j| q(i, j) * c)
                        .sum::<f64>();
                a[m][r] = y[i];
            }
            rhs[m] = -(0..n)
                .filter(|&j| state[j] == 1)
                .map(|j| y[j] * c)
                .sum::<f64>();
            let Some(sol) = solve_linear(a, rhs) else {
                continue;
            };
            if sol[..m].iter().any(|&v| v < -1e-12 || v > c + 1e-12) {
                continue;
            }
            for (r, &i) in free.iter().enumerate() {
                alpha[i] = sol[r].clamp(0.0, c);
            }
        }
        let eq: f64 = alpha.iter().zip(y).map(|(a, y)| a * y).sum();
        if eq.abs() > 1e-9 {
            continue;
        }
        best = best.max(dual(points, y, &alpha, gamma));
    }
    best
}

/// Collectiveness and conflict from an explicit adjacency matrix.
pub fn brute_interaction(state: &FrameTrackState, k: usize) -> (f64, f64) {
    let p = &state.points;
    let n = p.len();
    if n == 0 {
        return (0.0, 0.0);
    }
    let cos = |a: [f64; 2], b: [f64; 2]| {
        let (na, nb) = (a[0].hypot(a[1]), b[0].hypot(b[1]));
        if na == 0.0 || nb == 0.0 {
            0.0
        } else {
            ((a[0] * b[0] + a[1] * b[1]) / (na * nb)).clamp(-1.0, 1.0)
        }
    };
    let mut adj = vec![vec![false; n]; n];
    for i in 0..n {
        let mut others: Vec<usize> = (0..n).filter(|&j| j != i).collect();
        let d2 = |j: usize| {
            (p[j].position[0] - p[i].position[0]).powi(2)
                + (p[j].position[1] - p[i].position[1]).powi(2)
        };
        others.sort_by(|&a, &b| d2(a).total_cmp(&d2(b)).then(a.cmp(&b)));
        for &j in others.iter().take(k) {
            adj[i][j] = true;
        }
    }
    let mut col_sums = vec![0.0; n];
    let (mut friction, mut edges) = (0.0, 0usize);
    for i in 0..n {
        for j in 0..n {
            if adj[i][j] {
                let c = cos(p[i].velocity, p[j].velocity);
                col_sums[j] += c.max(0.0);
                friction += (1.0 - c) / 2.0;
                edges += 1;
            }
        }
    }
    let coll = col_sums.iter().sum::<f64>() / n as f64;
    (
        coll,
        if edges == 0 {
            0.0
        } else {
            friction / edges as f64
        },
    )
}

/// Occupied cells counted by testing every cell rectangle against every point.
pub fn brute_density(
    state: &FrameTrackState,
    rows: usize,
    cols: usize,
    dims: (usize, usize),
) -> f64 {
    let (cw, ch) = (dims.0 as f64 / cols as f64, dims.1 as f64 / rows as f64);
    let mut occupied = 0;
    for r in 0..rows {
        for c in 0..cols {
            let hit = state.points.iter().any(|p| {
                let [x, y] = p.position;
                let in_x =
                    (x >= c as f64 * cw || c == 0) && (x < (c + 1) as f64 * cw || c == cols - 1);
                let in_y =
                    (y >= r as f64 * ch || r == 0) && (y < (r + 1) as f64 * ch || r == rows - 1);
                in_x && in_y
            });
            occupied += hit as usize;
        }
    }
    occupied as f64 / (rows * cols) as f64
}

pub fn random_state(
    rng: &mut impl Rng,
    n: usize,
    dims: (usize, usize),
    speed: f64,
) -> FrameTrackState {
    FrameTrackState {
        frame: 0,
        points: (0..n)
            .map(|i| {
                let a = rng.random_range(0.0..std::f64::consts::TAU);
                let s = rng.random_range(0.0..speed);
                TrackedPoint {
                    id: i as u64,
                    position: [
                        rng.random_range(0.0..dims.0 as f64),
                        rng.random_range(0.0..dims.1 as f64),
                    ],
                    velocity: [s * a.cos(), s * a.sin()],
                }
            })
            .collect(),
    }
}

/// Smooth random texture defined everywhere, so shifted copies are exact.
pub struct Texture {
    blobs: Vec<[f64; 4]>,
}

impl Texture {
    pub fn new(rng: &mut impl Rng, w: usize, h: usize, count: usize) -> Self {
        let blobs = (0..count)
            .map(|_| {
                [
                    rng.random_range(-20.0..w as f64 + 20.0),
                    rng.random_range(-20.0..h as f64 + 20.0),
                    rng.random_range(-90.0..90.0),
                    rng.random_range(2.0..4.5),
                ]
            })
            .collect();
        Self { blobs }
    }

    pub fn at(&self, x: f64, y: f64) -> f64 {
        128.0
            + self
                .blobs
                .iter()
                .map(|b| {
                    b[2] * (-((x - b[0]).powi(2) + (y - b[1]).powi(2)) / (2.0 * b[3] * b[3])).exp()
                })
                .sum::<f64>()
    }

    /// The texture displaced by `shift`.
    pub fn frame(&self, index: u64, w: usize, h: usize, shift: [f64; 2]) -> Frame {
        let px = (0..h)
            .flat_map(|y| (0..w).map(move |x| (x, y)))
            .map(|(x, y)| {
                self.at(x as f64 - shift[0], y as f64 - shift[1])
                    .round()
                    .clamp(0.0, 255.0) as u8
            })
            .collect();
        Frame::new(index, w, h, px).unwrap()
    }
}
