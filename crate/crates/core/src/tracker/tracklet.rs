use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Trajectory fragment of one interest point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tracklet {
    pub id: u64,
    pub birth_frame: u64,
    pub positions: Vec<[f64; 2]>,
    pub velocities: Vec<[f64; 2]>,
    #[serde(skip, default)]
    pub alive: bool,
}

impl Tracklet {
    pub fn new(id: u64, birth_frame: u64, start: [f64; 2]) -> Self {
        Self {
            id,
            birth_frame,
            positions: vec![start],
            velocities: Vec::new(),
            alive: true,
        }
    }

    /// Build from positions, deriving velocities by finite differences.
    pub fn from_positions(id: u64, birth_frame: u64, positions: Vec<[f64; 2]>) -> Self {
        let velocities = finite_differences(&positions);
        Self {
            id,
            birth_frame,
            positions,
            velocities,
            alive: false,
        }
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn push(&mut self, p: [f64; 2]) {
        if let Some(last) = self.positions.last() {
            self.velocities.push([p[0] - last[0], p[1] - last[1]]);
        }
        self.positions.push(p);
    }

    /// Frame index of the last stored position.
    pub fn last_frame(&self) -> u64 {
        self.birth_frame + self.positions.len() as u64 - 1
    }

    /// Position and incoming velocity at `frame`, if the tracklet has one.
    pub fn state_at(&self, frame: u64) -> Option<([f64; 2], [f64; 2])> {
        if frame <= self.birth_frame {
            return None;
        }
        let k = (frame - self.birth_frame) as usize;
        (k < self.positions.len()).then(|| (self.positions[k], self.velocities[k - 1]))
    }

    pub fn velocities_consistent(&self) -> bool {
        self.velocities == finite_differences(&self.positions)
    }
}

pub fn finite_differences(positions: &[[f64; 2]]) -> Vec<[f64; 2]> {
    positions
        .windows(2)
        .map(|w| [w[1][0] - w[0][0], w[1][1] - w[0][1]])
        .collect()
}

/// Rules a finalized tracklet must pass to be kept.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseFilter {
    pub min_len: usize,
    pub static_std: f64,
}

impl Default for NoiseFilter {
    fn default() -> Self {
        Self {
            min_len: 5,
            static_std: 0.1,
        }
    }
}

impl NoiseFilter {
    /// Keep unless too short, or static on both axes (population std).
    pub fn keep(&self, t: &Tracklet) -> bool {
        if t.len() < self.min_len {
            return false;
        }
        let (sx, sy) = position_std(&t.positions);
        !(sx < self.static_std && sy < self.static_std)
    }
}

pub fn noise_filter(t: &Tracklet, filter: &NoiseFilter) -> bool {
    filter.keep(t)
}

/// Population standard deviation of x and y.
pub fn position_std(positions: &[[f64; 2]]) -> (f64, f64) {
    let n = positions.len() as f64;
    if positions.is_empty() {
        return (0.0, 0.0);
    }
    let (mx, my) = positions
        .iter()
        .fold((0.0, 0.0), |(a, b), p| (a + p[0] / n, b + p[1] / n));
    let (vx, vy) = positions.iter().fold((0.0, 0.0), |(a, b), p| {
        (a + (p[0] - mx).powi(2) / n, b + (p[1] - my).powi(2) / n)
    });
    (vx.sqrt(), vy.sqrt())
}

/// Sequence geometry carried alongside exported tracklets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrackMeta {
    pub width: usize,
    pub height: usize,
    pub first_frame: u64,
    pub frame_count: u64,
}

/// Write tracklets as one JSON object per line. `header` lines are written
/// first as `#` comments, followed by a `#meta` line holding `meta`.
pub fn write_tracklets(
    mut w: impl Write,
    header: &[String],
    meta: &TrackMeta,
    tracklets: &[Tracklet],
) -> Result<()> {
    let io = |e: std::io::Error| Error::Parse(e.to_string());
    for h in header {
        writeln!(w, "# {h}").map_err(io)?;
    }
    let meta_json = serde_json::to_string(meta).map_err(|e| Error::Parse(e.to_string()))?;
    writeln!(w, "#meta {meta_json}").map_err(io)?;
    for t in tracklets {
        let line = serde_json::to_string(t).map_err(|e| Error::Parse(e.to_string()))?;
        writeln!(w, "{line}").map_err(io)?;
    }
    Ok(())
}

pub fn read_tracklets(r: impl BufRead) -> Result<(TrackMeta, Vec<Tracklet>)> {
    let mut meta = None;
    let mut out = Vec::new();
    for (n, line) in r.lines().enumerate() {
        let line = line.map_err(|e| Error::Parse(e.to_string()))?;
        let line = line.trim();
        if let Some(m) = line.strip_prefix("#meta ") {
            meta = Some(
                serde_json::from_str(m)
                    .map_err(|e| Error::Parse(format!("line {}: bad meta: {e}", n + 1)))?,
            );
            continue;
        }
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let t: Tracklet =
            serde_json::from_str(line).map_err(|e| Error::Parse(format!("line {}: {e}", n + 1)))?;
        if t.positions.is_empty() || !t.velocities_consistent() {
            return Err(Error::Parse(format!(
                "line {}: tracklet {} has inconsistent velocities",
                n + 1,
                t.id
            )));
        }
        out.push(t);
    }
    let meta = meta.ok_or_else(|| Error::Parse("tracklet file lacks a #meta line".into()))?;
    Ok((meta, out))
}
