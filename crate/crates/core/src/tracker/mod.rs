//! Interest-point detection and tracking into tracklets.
//!
//! A tracking window opens on the first frame whose foreground yields
//! corners. Points are followed with pyramidal Lucas-Kanade until the window
//! is `reseed_interval` frames old, at which point every live tracklet is
//! finalized and a fresh set of corners is detected. Lost points finalize
//! immediately. Finalized tracklets pass through the noise filter.

mod corners;
mod klt;
mod pyramid;
mod tracklet;

pub use corners::{detect_corners, CornerParams};
pub use klt::{klt_step, KltParams};
pub use pyramid::{Level, Pyramid};
pub use tracklet::{
    finite_differences, noise_filter, position_std, read_tracklets, write_tracklets, NoiseFilter,
    TrackMeta, Tracklet,
};

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::foreground::ForegroundMask;
use crate::frame_io::Frame;
use crate::par::Execution;

#[derive(Debug, Clone, PartialEq)]
pub struct TrackerParams {
    pub klt: KltParams,
    pub corners: CornerParams,
    pub reseed_interval: usize,
    pub filter: NoiseFilter,
}

impl Default for TrackerParams {
    fn default() -> Self {
        Self::from_config(&RunConfig::default())
    }
}

impl TrackerParams {
    pub fn from_config(cfg: &RunConfig) -> Self {
        Self {
            klt: KltParams::default(),
            corners: CornerParams::default(),
            reseed_interval: cfg.reseed_interval,
            filter: NoiseFilter {
                min_len: cfg.min_tracklet_len,
                static_std: cfg.static_std_threshold,
            },
        }
    }
}

/// One live point as seen at a frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackedPoint {
    pub id: u64,
    pub position: [f64; 2],
    pub velocity: [f64; 2],
}

/// Live points with a velocity at one frame.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FrameTrackState {
    pub frame: u64,
    pub points: Vec<TrackedPoint>,
}

impl FrameTrackState {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

pub struct Tracker {
    width: usize,
    height: usize,
    params: TrackerParams,
    live: Vec<Tracklet>,
    kept: Vec<Tracklet>,
    discarded: usize,
    window_start: Option<u64>,
    prev: Option<Pyramid>,
    last_index: Option<u64>,
    first_index: Option<u64>,
    next_id: u64,
    windows_closed: usize,
}

impl Tracker {
    pub fn new(width: usize, height: usize, params: TrackerParams) -> Self {
        Self {
            width,
            height,
            params,
            live: Vec::new(),
            kept: Vec::new(),
            discarded: 0,
            window_start: None,
            prev: None,
            last_index: None,
            first_index: None,
            next_id: 0,
            windows_closed: 0,
        }
    }

    pub fn params(&self) -> &TrackerParams {
        &self.params
    }

    /// Process the next frame and report the live points with velocities.
    pub fn advance(
        &mut self,
        frame: &Frame,
        mask: &ForegroundMask,
        exec: Execution,
    ) -> Result<FrameTrackState> {
        if frame.dims() != (self.width, self.height) || (mask.width, mask.height) != frame.dims() {
            return Err(Error::DimensionMismatch {
                index: frame.index,
                want_w: self.width,
                want_h: self.height,
                got_w: frame.width,
                got_h: frame.height,
            });
        }
        if let Some(prev) = self.last_index {
            if frame.index <= prev {
                return Err(Error::OutOfOrder {
                    prev,
                    got: frame.index,
                });
            }
        }
        self.first_index.get_or_insert(frame.index);
        let pyr = Pyramid::build(frame, self.params.klt.levels);

        if let Some(start) = self.window_start {
            if frame.index - start >= self.params.reseed_interval as u64 {
                self.close_window();
            } else if let Some(prev) = &self.prev {
                let pts: Vec<[f64; 2]> = self
                    .live
                    .iter()
                    .map(|t| *t.positions.last().unwrap())
                    .collect();
                let moved = klt::track_points(prev, &pyr, &pts, &self.params.klt, exec);
                let mut still = Vec::with_capacity(self.live.len());
                for (mut t, m) in std::mem::take(&mut self.live).into_iter().zip(moved) {
                    match m {
                        Some(p) => {
                            t.push(p);
                            still.push(t);
                        }
                        None => self.finalize(t),
                    }
                }
                self.live = still;
            }
        }

        if self.window_start.is_none() {
            let seeds = corners::detect_on_level(pyr.base(), mask, &self.params.corners);
            if !seeds.is_empty() {
                self.window_start = Some(frame.index);
                for s in seeds {
                    self.live.push(Tracklet::new(self.next_id, frame.index, s));
                    self.next_id += 1;
                }
            }
        }

        self.prev = Some(pyr);
        self.last_index = Some(frame.index);
        Ok(self.current_state(frame.index))
    }

    fn current_state(&self, frame: u64) -> FrameTrackState {
        let points = self
            .live
            .iter()
            .filter(|t| t.len() >= 2)
            .map(|t| TrackedPoint {
                id: t.id,
                position: *t.positions.last().unwrap(),
                velocity: *t.velocities.last().unwrap(),
            })
            .collect();
        FrameTrackState { frame, points }
    }

    fn finalize(&mut self, mut t: Tracklet) {
        t.alive = false;
        if self.params.filter.keep(&t) {
            self.kept.push(t);
        } else {
            self.discarded += 1;
        }
    }

    fn close_window(&mut self) {
        for t in std::mem::take(&mut self.live) {
            self.finalize(t);
        }
        if self.window_start.take().is_some() {
            self.windows_closed += 1;
        }
    }

    /// Finalize everything still live; call once at end of stream.
    pub fn finish(&mut self) {
        self.close_window();
    }

    /// Tracklets that survived the noise filter, in finalization order.
    pub fn kept(&self) -> &[Tracklet] {
        &self.kept
    }

    pub fn take_kept(&mut self) -> Vec<Tracklet> {
        std::mem::take(&mut self.kept)
    }

    pub fn live(&self) -> &[Tracklet] {
        &self.live
    }

    pub fn discarded(&self) -> usize {
        self.discarded
    }

    /// Number of tracking windows closed so far, by reseeding or [`finish`].
    ///
    /// [`finish`]: Tracker::finish
    pub fn windows_closed(&self) -> usize {
        self.windows_closed
    }

    pub fn meta(&self) -> TrackMeta {
        let first = self.first_index.unwrap_or(0);
        TrackMeta {
            width: self.width,
            height: self.height,
            first_frame: first,
            frame_count: self.last_index.map_or(0, |l| l - first + 1),
        }
    }
}

/// Rebuild per-frame track states from finalized tracklets.
pub fn states_from_tracklets(meta: &TrackMeta, tracklets: &[Tracklet]) -> Vec<FrameTrackState> {
    let mut states: Vec<FrameTrackState> = (0..meta.frame_count)
        .map(|k| FrameTrackState {
            frame: meta.first_frame + k,
            points: Vec::new(),
        })
        .collect();
    let mut sorted: Vec<&Tracklet> = tracklets.iter().collect();
    sorted.sort_by_key(|t| t.id);
    for t in sorted {
        for k in 1..t.len() {
            let f = t.birth_frame + k as u64;
            if f < meta.first_frame || f >= meta.first_frame + meta.frame_count {
                continue;
            }
            states[(f - meta.first_frame) as usize]
                .points
                .push(TrackedPoint {
                    id: t.id,
                    position: t.positions[k],
                    velocity: t.velocities[k - 1],
                });
        }
    }
    states
}

#[cfg(test)]
mod tests {
    use super::*;

    fn textured_disc(index: u64, w: usize, h: usize, cx: f64, cy: f64, r: f64) -> Frame {
        let px = (0..w * h)
            .map(|i| {
                let (x, y) = ((i % w) as f64, (i / w) as f64);
                let (dx, dy) = (x - cx, y - cy);
                let d = (dx * dx + dy * dy).sqrt();
                if d <= r {
                    let v = 170.0 + 50.0 * (0.9 * dx).sin() * (0.7 * dy + 0.4).cos() - 2.0 * d;
                    v.clamp(0.0, 255.0) as u8
                } else {
                    40
                }
            })
            .collect();
        Frame::new(index, w, h, px).unwrap()
    }

    #[test]
    fn windows_close_every_reseed_interval() {
        let (w, h) = (160, 80);
        let mut tr = Tracker::new(w, h, TrackerParams::default());
        let mask = ForegroundMask::full(w, h);
        for i in 0..90u64 {
            let f = textured_disc(i, w, h, 40.0 + (i % 30) as f64, 40.0, 14.0);
            tr.advance(&f, &mask, Execution::Sequential).unwrap();
            for t in tr.live() {
                assert!(t.len() <= 30);
            }
        }
        tr.finish();
        assert_eq!(tr.windows_closed(), 3);
        assert!(tr
            .kept()
            .iter()
            .all(|t| t.len() <= 30 && t.velocities_consistent()));
    }

    #[test]
    fn empty_foreground_has_no_points() {
        let mut tr = Tracker::new(64, 64, TrackerParams::default());
        let f = textured_disc(0, 64, 64, 32.0, 32.0, 10.0);
        let s = tr
            .advance(&f, &ForegroundMask::new(64, 64), Execution::Sequential)
            .unwrap();
        assert!(s.is_empty());
        assert!(tr.live().is_empty());
    }

    #[test]
    fn out_of_order_frames_rejected() {
        let mut tr = Tracker::new(32, 32, TrackerParams::default());
        let m = ForegroundMask::new(32, 32);
        tr.advance(
            &Frame::filled(5, 32, 32, 0).unwrap(),
            &m,
            Execution::Sequential,
        )
        .unwrap();
        let e = tr.advance(
            &Frame::filled(5, 32, 32, 0).unwrap(),
            &m,
            Execution::Sequential,
        );
        assert!(matches!(e, Err(Error::OutOfOrder { prev: 5, got: 5 })));
    }

    #[test]
    fn moving_disc_speed_is_recovered() {
        let (w, h) = (200, 80);
        let mut tr = Tracker::new(w, h, TrackerParams::default());
        let mask = ForegroundMask::full(w, h);
        for i in 0..30u64 {
            let f = textured_disc(i, w, h, 30.0 + 2.0 * i as f64, 40.0, 14.0);
            tr.advance(&f, &mask, Execution::Sequential).unwrap();
        }
        tr.finish();
        let kept = tr.kept();
        assert!(!kept.is_empty());
        let speeds: Vec<f64> = kept
            .iter()
            .map(|t| {
                t.velocities.iter().map(|v| v[0].hypot(v[1])).sum::<f64>()
                    / t.velocities.len() as f64
            })
            .collect();
        assert!(speeds.iter().any(|s| (s - 2.0).abs() <= 0.3), "{speeds:?}");
    }

    #[test]
    fn states_rebuilt_from_tracklets() {
        let meta = TrackMeta {
            width: 50,
            height: 50,
            first_frame: 0,
            frame_count: 5,
        };
        let t = Tracklet::from_positions(3, 1, vec![[1.0, 1.0], [2.0, 1.0], [4.0, 1.0]]);
        let s = states_from_tracklets(&meta, &[t]);
        assert_eq!(s.len(), 5);
        assert!(s[0].is_empty() && s[1].is_empty() && s[4].is_empty());
        assert_eq!(s[2].points[0].velocity, [1.0, 0.0]);
        assert_eq!(s[3].points[0].velocity, [2.0, 0.0]);
    }
}
