//! Scene-level holistic descriptor computed per frame from tracked points.
//!
//! Collectiveness and conflict share one k-nearest-neighbour graph over the
//! current point positions. An edge `i -> j` exists when `j` is among the `k`
//! nearest points to `i`; its weight is the cosine similarity of the two
//! velocities. Collectiveness is the mean column sum of the adjacency matrix
//! with negative similarities clipped to zero. Conflict averages the
//! friction `(1 - cos) / 2` over all edges.

use std::io::{Read, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::par::{self, Execution};
use crate::tracker::FrameTrackState;

pub const FEATURE_COUNT: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    Collectiveness,
    Conflict,
    Density,
    MeanSpeed,
}

impl FeatureKind {
    pub const ALL: [FeatureKind; FEATURE_COUNT] = [
        FeatureKind::Collectiveness,
        FeatureKind::Conflict,
        FeatureKind::Density,
        FeatureKind::MeanSpeed,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FeatureKind::Collectiveness => "collectiveness",
            FeatureKind::Conflict => "conflict",
            FeatureKind::Density => "density",
            FeatureKind::MeanSpeed => "mean_speed",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl FromStr for FeatureKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        FeatureKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown feature {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureVector {
    pub frame: u64,
    pub collectiveness: f64,
    pub conflict: f64,
    pub density: f64,
    pub mean_speed: f64,
    /// `false` when the low-activity gate fired; such frames are normal.
    pub valid: bool,
}

impl FeatureVector {
    pub fn invalid(frame: u64) -> Self {
        Self {
            frame,
            collectiveness: 0.0,
            conflict: 0.0,
            density: 0.0,
            mean_speed: 0.0,
            valid: false,
        }
    }

    pub fn from_values(frame: u64, v: [f64; FEATURE_COUNT]) -> Self {
        Self {
            frame,
            collectiveness: v[0],
            conflict: v[1],
            density: v[2],
            mean_speed: v[3],
            valid: true,
        }
    }

    pub fn values(&self) -> [f64; FEATURE_COUNT] {
        [
            self.collectiveness,
            self.conflict,
            self.density,
            self.mean_speed,
        ]
    }

    pub fn get(&self, kind: FeatureKind) -> f64 {
        self.values()[kind.index()]
    }
}

/// Exponential moving average of the four raw features.
#[derive(Debug, Clone, PartialEq)]
pub struct EmaState {
    pub alpha: f64,
    value: Option<[f64; FEATURE_COUNT]>,
}

impl EmaState {
    pub fn new(alpha: f64) -> Self {
        Self { alpha, value: None }
    }

    pub fn value(&self) -> Option<[f64; FEATURE_COUNT]> {
        self.value
    }

    /// The first sample initializes the average.
    pub fn update(&mut self, raw: [f64; FEATURE_COUNT]) -> [f64; FEATURE_COUNT] {
        let next = match self.value {
            None => raw,
            Some(prev) => {
                let mut out = [0.0; FEATURE_COUNT];
                for i in 0..FEATURE_COUNT {
                    out[i] = self.alpha * raw[i] + (1.0 - self.alpha) * prev[i];
                }
                out
            }
        };
        self.value = Some(next);
        next
    }
}

/// Indices of the `k` nearest other points for every point. Ties in
/// distance go to the lower index.
pub fn knn_graph(state: &FrameTrackState, k: usize, exec: Execution) -> Vec<Vec<usize>> {
    let pts = &state.points;
    let n = pts.len();
    let k = k.min(n.saturating_sub(1));
    par::map_range(exec, n, |i| {
        if k == 0 {
            return Vec::new();
        }
        let pi = pts[i].position;
        let mut d: Vec<(f64, usize)> = pts
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != i)
            .map(|(j, p)| {
                let (dx, dy) = (p.position[0] - pi[0], p.position[1] - pi[1]);
                (dx * dx + dy * dy, j)
            })
            .collect();
        let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        if k < d.len() {
            d.select_nth_unstable_by(k - 1, cmp);
            d.truncate(k);
        }
        d.sort_by(cmp);
        d.into_iter().map(|(_, j)| j).collect()
    })
}

/// Cosine similarity; zero when either vector has zero length.
#[inline]
pub fn cosine(a: [f64; 2], b: [f64; 2]) -> f64 {
    let na = a[0].hypot(a[1]);
    let nb = b[0].hypot(b[1]);
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    ((a[0] * b[0] + a[1] * b[1]) / (na * nb)).clamp(-1.0, 1.0)
}

/// Collectiveness and conflict from one neighbour graph.
pub fn interaction_features(state: &FrameTrackState, graph: &[Vec<usize>]) -> (f64, f64) {
    let n = state.points.len();
    if n == 0 {
        return (0.0, 0.0);
    }
    let mut weight_sum = 0.0;
    let mut friction_sum = 0.0;
    let mut edges = 0usize;
    for (i, nbrs) in graph.iter().enumerate() {
        let vi = state.points[i].velocity;
        for &j in nbrs {
            let c = cosine(vi, state.points[j].velocity);
            weight_sum += c.max(0.0);
            friction_sum += 0.5 * (1.0 - c);
            edges += 1;
        }
    }
    // mean over columns of the column sums = total weight / n
    let coll = weight_sum / n as f64;
    let conf = if edges == 0 {
        0.0
    } else {
        friction_sum / edges as f64
    };
    (coll, conf)
}

pub fn collectiveness(state: &FrameTrackState, k: usize) -> f64 {
    interaction_features(state, &knn_graph(state, k, Execution::Sequential)).0
}

pub fn conflict(state: &FrameTrackState, k: usize) -> f64 {
    interaction_features(state, &knn_graph(state, k, Execution::Sequential)).1
}

/// Fraction of grid cells holding at least one point.
pub fn density(state: &FrameTrackState, rows: usize, cols: usize, dims: (usize, usize)) -> f64 {
    let (w, h) = (dims.0 as f64, dims.1 as f64);
    let mut occupied = vec![false; rows * cols];
    for p in &state.points {
        let c = ((p.position[0] * cols as f64 / w).floor().max(0.0) as usize).min(cols - 1);
        let r = ((p.position[1] * rows as f64 / h).floor().max(0.0) as usize).min(rows - 1);
        occupied[r * cols + c] = true;
    }
    occupied.iter().filter(|&&o| o).count() as f64 / (rows * cols) as f64
}

/// Mean velocity magnitude; zero for an empty state.
pub fn mean_speed(state: &FrameTrackState) -> f64 {
    if state.points.is_empty() {
        return 0.0;
    }
    state
        .points
        .iter()
        .map(|p| p.velocity[0].hypot(p.velocity[1]))
        .sum::<f64>()
        / state.points.len() as f64
}

/// The four raw (unsmoothed) features.
pub fn raw_features(
    state: &FrameTrackState,
    cfg: &RunConfig,
    dims: (usize, usize),
    exec: Execution,
) -> [f64; FEATURE_COUNT] {
    let graph = knn_graph(state, cfg.knn_k, exec);
    let (coll, conf) = interaction_features(state, &graph);
    [
        coll,
        conf,
        density(state, cfg.grid_rows, cfg.grid_cols, dims),
        mean_speed(state),
    ]
}

/// Gate, compute and smooth the descriptor for one frame.
pub fn frame_features(
    state: &FrameTrackState,
    ema: &mut EmaState,
    cfg: &RunConfig,
    dims: (usize, usize),
) -> FeatureVector {
    frame_features_with(state, ema, cfg, dims, Execution::Sequential)
}

pub fn frame_features_with(
    state: &FrameTrackState,
    ema: &mut EmaState,
    cfg: &RunConfig,
    dims: (usize, usize),
    exec: Execution,
) -> FeatureVector {
    if state.points.len() < cfg.low_activity_threshold {
        return FeatureVector::invalid(state.frame);
    }
    let smoothed = ema.update(raw_features(state, cfg, dims, exec));
    FeatureVector::from_values(state.frame, smoothed)
}

/// Featurize a whole sequence of track states with a fresh EMA.
pub fn featurize(
    states: &[FrameTrackState],
    cfg: &RunConfig,
    dims: (usize, usize),
) -> Vec<FeatureVector> {
    let mut ema = EmaState::new(cfg.ema_alpha);
    states
        .iter()
        .map(|s| frame_features(s, &mut ema, cfg, dims))
        .collect()
}

/// Rows of a feature file together with the columns it carries.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    pub features: Vec<FeatureKind>,
    pub rows: Vec<FeatureVector>,
}

/// Write the feature interchange CSV: `frame,valid,<feature columns>`.
/// Metadata lines become `#` comments; gated frames have empty features.
pub fn write_features_csv(
    mut w: impl Write,
    header: &[String],
    features: &[FeatureKind],
    rows: &[FeatureVector],
) -> Result<()> {
    let io = |e: std::io::Error| Error::Parse(e.to_string());
    for h in header {
        writeln!(w, "# {h}").map_err(io)?;
    }
    let mut wr = csv::Writer::from_writer(w);
    let csv_err = |e: csv::Error| Error::Parse(e.to_string());
    let mut head = vec!["frame", "valid"];
    head.extend(features.iter().map(|f| f.name()));
    wr.write_record(&head).map_err(csv_err)?;
    for r in rows {
        let mut rec = vec![r.frame.to_string(), (r.valid as u8).to_string()];
        for &f in features {
            rec.push(if r.valid {
                r.get(f).to_string()
            } else {
                String::new()
            });
        }
        wr.write_record(&rec).map_err(csv_err)?;
    }
    wr.flush().map_err(io)
}

/// Read a feature CSV. Columns absent from the file read as zero.
pub fn read_features_csv(r: impl Read) -> Result<FeatureTable> {
    let mut rd = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .has_headers(true)
        .from_reader(r);
    let headers = rd
        .headers()
        .map_err(|e| Error::Parse(e.to_string()))?
        .clone();
    if headers.len() < 3 || &headers[0] != "frame" || &headers[1] != "valid" {
        return Err(Error::Parse(format!(
            "unexpected feature CSV header {headers:?}"
        )));
    }
    let features = headers
        .iter()
        .skip(2)
        .map(|h| {
            h.parse::<FeatureKind>()
                .map_err(|_| Error::Parse(format!("unknown feature column {h:?}")))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut rows = Vec::new();
    for (n, rec) in rd.records().enumerate() {
        let rec = rec.map_err(|e| Error::Parse(e.to_string()))?;
        let bad = |what: &str| Error::Parse(format!("feature row {}: bad {what}", n + 1));
        let frame: u64 = rec[0].parse().map_err(|_| bad("frame"))?;
        match &rec[1] {
            "0" => rows.push(FeatureVector::invalid(frame)),
            "1" => {
                let mut v = [0.0; FEATURE_COUNT];
                for (i, &f) in features.iter().enumerate() {
                    v[f.index()] = rec[i + 2].parse().map_err(|_| bad(f.name()))?;
                }
                rows.push(FeatureVector::from_values(frame, v));
            }
            _ => return Err(bad("valid flag")),
        }
    }
    Ok(FeatureTable { features, rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tracker::TrackedPoint;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn state(points: &[([f64; 2], [f64; 2])]) -> FrameTrackState {
        FrameTrackState {
            frame: 0,
            points: points
                .iter()
                .enumerate()
                .map(|(i, &(p, v))| TrackedPoint {
                    id: i as u64,
                    position: p,
                    velocity: v,
                })
                .collect(),
        }
    }

    fn random_state(rng: &mut ChaCha8Rng, n: usize) -> FrameTrackState {
        let pts: Vec<_> = (0..n)
            .map(|_| {
                let a: f64 = rng.random_range(0.0..std::f64::consts::TAU);
                let s: f64 = rng.random_range(0.1..4.0);
                (
                    [rng.random_range(0.0..320.0), rng.random_range(0.0..240.0)],
                    [s * a.cos(), s * a.sin()],
                )
            })
            .collect();
        state(&pts)
    }

    /// Dense adjacency matrix built by enumerating all pairs.
    #[allow(clippy::needless_range_loop)]
    fn brute_interaction(s: &FrameTrackState, k: usize) -> (f64, f64) {
        let n = s.points.len();
        let mut adj = vec![vec![0.0f64; n]; n];
        let mut fr = 0.0;
        let mut edges = 0.0;
        for i in 0..n {
            let mut order: Vec<usize> = (0..n).filter(|&j| j != i).collect();
            order.sort_by(|&a, &b| {
                let da = (s.points[a].position[0] - s.points[i].position[0]).powi(2)
                    + (s.points[a].position[1] - s.points[i].position[1]).powi(2);
                let db = (s.points[b].position[0] - s.points[i].position[0]).powi(2)
                    + (s.points[b].position[1] - s.points[i].position[1]).powi(2);
                da.total_cmp(&db).then(a.cmp(&b))
            });
            for &j in order.iter().take(k) {
                let (a, b) = (s.points[i].velocity, s.points[j].velocity);
                let c = (a[0] * b[0] + a[1] * b[1]) / (a[0].hypot(a[1]) * b[0].hypot(b[1]));
                adj[i][j] = c.max(0.0);
                fr += (1.0 - c) / 2.0;
                edges += 1.0;
            }
        }
        let col_mean = (0..n)
            .map(|j| (0..n).map(|i| adj[i][j]).sum::<f64>())
            .sum::<f64>()
            / n as f64;
        (col_mean, fr / edges)
    }

    #[test]
    fn identical_velocities() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let pts: Vec<_> = (0..20)
            .map(|_| {
                (
                    [rng.random_range(0.0..100.0), rng.random_range(0.0..100.0)],
                    [1.5, -0.5],
                )
            })
            .collect();
        let s = state(&pts);
        assert!((collectiveness(&s, 10) - 10.0).abs() < 1e-12);
        assert!(conflict(&s, 10).abs() < 1e-12);
    }

    #[test]
    fn random_directions_have_low_collectiveness() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mean = (0..100)
            .map(|_| collectiveness(&random_state(&mut rng, 20), 10))
            .sum::<f64>()
            / 100.0;
        // E[max(0, cos)] = 1/pi for uniform angles
        assert!(mean < 0.35 * 10.0, "{mean}");
        assert!((mean - 10.0 / std::f64::consts::PI).abs() < 0.3, "{mean}");
    }

    #[test]
    fn random_directions_conflict_is_half() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mean = (0..100)
            .map(|_| conflict(&random_state(&mut rng, 20), 10))
            .sum::<f64>()
            / 100.0;
        assert!((mean - 0.5).abs() < 0.05, "{mean}");
    }

    #[test]
    fn interleaved_opposing_streams() {
        // 12 points on a line alternating +x / -x
        let pts: Vec<_> = (0..12)
            .map(|i| {
                (
                    [10.0 * i as f64, 5.0],
                    if i % 2 == 0 { [1.0, 0.0] } else { [-1.0, 0.0] },
                )
            })
            .collect();
        let s = state(&pts);
        let (bc, bf) = brute_interaction(&s, 10);
        let coll = collectiveness(&s, 10);
        let conf = conflict(&s, 10);
        assert!((coll - bc).abs() < 1e-12 && (conf - bf).abs() < 1e-12);
        // each point has 5 or 6 same-direction neighbours among 11 others
        assert!((coll - 5.0).abs() <= 1.0, "{coll}");
        assert!((conf - 0.5).abs() <= 0.1, "{conf}");
    }

    #[test]
    fn zero_velocity_counts_as_orthogonal() {
        let pts: Vec<_> = (0..11).map(|i| ([i as f64, 0.0], [0.0, 0.0])).collect();
        let s = state(&pts);
        assert_eq!(collectiveness(&s, 10), 0.0);
        assert!((conflict(&s, 10) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn density_examples() {
        let empty = state(&[]);
        assert_eq!(density(&empty, 10, 10, (320, 240)), 0.0);
        // one point in each of 57 distinct cells
        let pts: Vec<_> = (0..57)
            .map(|c| {
                (
                    [(c % 10) as f64 * 32.0 + 16.0, (c / 10) as f64 * 24.0 + 12.0],
                    [1.0, 0.0],
                )
            })
            .collect();
        assert!((density(&state(&pts), 10, 10, (320, 240)) - 0.57).abs() < 1e-12);
    }

    #[test]
    fn density_matches_brute_occupancy() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let s = random_state(&mut rng, 500);
        let mut count = 0;
        for r in 0..10 {
            for c in 0..10 {
                let (x0, x1) = (c as f64 * 32.0, (c + 1) as f64 * 32.0);
                let (y0, y1) = (r as f64 * 24.0, (r + 1) as f64 * 24.0);
                if s.points.iter().any(|p| {
                    p.position[0] >= x0
                        && p.position[0] < x1
                        && p.position[1] >= y0
                        && p.position[1] < y1
                }) {
                    count += 1;
                }
            }
        }
        assert_eq!(density(&s, 10, 10, (320, 240)), count as f64 / 100.0);
    }

    #[test]
    fn mean_speed_examples() {
        let s = state(&[([0.0, 0.0], [3.0, 4.0]), ([5.0, 5.0], [3.0, 4.0])]);
        assert_eq!(mean_speed(&s), 5.0);
        let s = state(&[([0.0, 0.0], [1.0, 0.0]), ([5.0, 5.0], [0.0, 1.0])]);
        assert_eq!(mean_speed(&s), 1.0);
    }

    #[test]
    fn gate_and_ema() {
        let cfg = RunConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut ema = EmaState::new(cfg.ema_alpha);
        let nine = random_state(&mut rng, 9);
        let fv = frame_features(&nine, &mut ema, &cfg, (320, 240));
        assert!(!fv.valid);
        assert_eq!(ema.value(), None);

        let s1 = random_state(&mut rng, 30);
        let f = raw_features(&s1, &cfg, (320, 240), Execution::Sequential);
        let v1 = frame_features(&s1, &mut ema, &cfg, (320, 240));
        assert_eq!(v1.values(), f);

        let s2 = random_state(&mut rng, 30);
        let g = raw_features(&s2, &cfg, (320, 240), Execution::Sequential);
        let v2 = frame_features(&s2, &mut ema, &cfg, (320, 240));
        for i in 0..4 {
            assert!((v2.values()[i] - (0.1 * g[i] + 0.9 * f[i])).abs() < 1e-12);
        }
        // an invalid frame in between leaves the average alone
        let before = ema.value();
        frame_features(&nine, &mut ema, &cfg, (320, 240));
        assert_eq!(ema.value(), before);
    }

    #[test]
    fn csv_round_trip() {
        let rows = vec![
            FeatureVector::from_values(0, [1.0 / 3.0, 0.25, 0.57, 2.0f64.sqrt()]),
            FeatureVector::invalid(1),
            FeatureVector::from_values(2, [9.5, 0.0, 1.0, 0.0]),
        ];
        let mut buf = Vec::new();
        write_features_csv(
            &mut buf,
            &["holocrowd test".into()],
            &FeatureKind::ALL,
            &rows,
        )
        .unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.contains("frame,valid,collectiveness,conflict,density,mean_speed"));
        let t = read_features_csv(buf.as_slice()).unwrap();
        assert_eq!(t.features, FeatureKind::ALL.to_vec());
        assert_eq!(t.rows, rows);

        let sub = [FeatureKind::Conflict, FeatureKind::MeanSpeed];
        let mut buf = Vec::new();
        write_features_csv(&mut buf, &[], &sub, &rows).unwrap();
        let t = read_features_csv(buf.as_slice()).unwrap();
        assert_eq!(t.features, sub.to_vec());
        assert_eq!(t.rows[0].conflict, 0.25);
        assert_eq!(t.rows[0].density, 0.0);
    }

    proptest! {
        #[test]
        fn interaction_matches_brute_force(seed in any::<u64>(), n in 11usize..60) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let s = random_state(&mut rng, n);
            let (bc, bf) = brute_interaction(&s, 10);
            let (c, f) = interaction_features(&s, &knn_graph(&s, 10, Execution::Parallel));
            prop_assert!((c - bc).abs() < 1e-9 && (f - bf).abs() < 1e-9);
        }

        #[test]
        fn bounds_and_invariances(seed in any::<u64>(), n in 11usize..50, dx in -5.0f64..5.0, dy in -5.0f64..5.0) {
            let cfg = RunConfig::default();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let s = random_state(&mut rng, n);
            let f = raw_features(&s, &cfg, (320, 240), Execution::Sequential);
            prop_assert!((0.0..=10.0).contains(&f[0]));
            prop_assert!((0.0..=1.0).contains(&f[1]));
            prop_assert!((0.0..=1.0).contains(&f[2]));
            prop_assert!(f[3] >= 0.0);

            let mut rev = s.clone();
            rev.points.reverse();
            let g = raw_features(&rev, &cfg, (320, 240), Execution::Sequential);
            // collectiveness/conflict can differ only through distance ties
            prop_assert!((f[0] - g[0]).abs() < 1e-9 && (f[1] - g[1]).abs() < 1e-9);
            prop_assert_eq!(f[2], g[2]);
            prop_assert!((f[3] - g[3]).abs() < 1e-12);

            let mut moved = s.clone();
            for p in &mut moved.points {
                p.position = [p.position[0] + dx, p.position[1] + dy];
            }
            let m = raw_features(&moved, &cfg, (320, 240), Execution::Sequential);
            prop_assert!((f[0] - m[0]).abs() < 1e-9 && (f[1] - m[1]).abs() < 1e-9);
            prop_assert!((f[3] - m[3]).abs() < 1e-12);
        }

        #[test]
        fn ema_recurrence_replays(seq in proptest::collection::vec(proptest::array::uniform4(0.0f64..10.0), 1..40)) {
            let mut ema = EmaState::new(0.1);
            let mut replay: Option<[f64; 4]> = None;
            for raw in seq {
                let got = ema.update(raw);
                let want = match replay {
                    None => raw,
                    Some(p) => std::array::from_fn(|i| 0.1 * raw[i] + 0.9 * p[i]),
                };
                prop_assert_eq!(got, want);
                replay = Some(want);
            }
        }
    }

    #[test]
    fn density_translation_within_a_cell() {
        // points at cell centres keep their cells under shifts below half a cell
        let pts: Vec<_> = (0..40)
            .map(|c| {
                (
                    [
                        (c % 10) as f64 * 32.0 + 16.0,
                        (c / 10 * 2) as f64 * 24.0 + 12.0,
                    ],
                    [1.0, 0.0],
                )
            })
            .collect();
        let s = state(&pts);
        let mut moved = s.clone();
        for p in &mut moved.points {
            p.position[0] += 11.0;
            p.position[1] -= 7.0;
        }
        assert_eq!(
            density(&s, 10, 10, (320, 240)),
            density(&moved, 10, 10, (320, 240))
        );
    }
}
