//! Run configuration: flat `key=value` lines with `#` comments.

use std::fmt::Write as _;
use std::ops::RangeInclusive;
use std::path::Path;

use crate::error::{Error, Result};

/// Parameters shared by every pipeline stage.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub grid_rows: usize,
    pub grid_cols: usize,
    /// Tracklets with fewer positions are discarded as noise.
    pub min_tracklet_len: usize,
    /// Interest points are re-detected this many frames apart.
    pub reseed_interval: usize,
    /// Population std (pixels) below which a tracklet axis counts as static.
    pub static_std_threshold: f64,
    /// Frames with fewer tracked points are not featurized.
    pub low_activity_threshold: usize,
    pub ema_alpha: f64,
    pub knn_k: usize,
    pub gmm_component_range: RangeInclusive<usize>,
    pub svm_c: f64,
    /// Needed only to read headerless raw sequences.
    pub frame_width: Option<usize>,
    pub frame_height: Option<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            grid_rows: 10,
            grid_cols: 10,
            min_tracklet_len: 5,
            reseed_interval: 30,
            static_std_threshold: 0.1,
            low_activity_threshold: 10,
            ema_alpha: 0.1,
            knn_k: 10,
            gmm_component_range: 1..=4,
            svm_c: 1.0,
            frame_width: None,
            frame_height: None,
        }
    }
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let line_no = n + 1;
            let err = |message: String| Error::Config {
                line: line_no,
                message,
            };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err(format!("expected key=value, got {line:?}")))?;
            cfg.set(key.trim(), value.trim()).map_err(err)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        fn num<T: std::str::FromStr>(key: &str, v: &str) -> std::result::Result<T, String> {
            v.parse()
                .map_err(|_| format!("cannot parse {v:?} as a value for {key}"))
        }
        match key {
            "grid_rows" => self.grid_rows = num(key, value)?,
            "grid_cols" => self.grid_cols = num(key, value)?,
            "min_tracklet_len" => self.min_tracklet_len = num(key, value)?,
            "reseed_interval" => self.reseed_interval = num(key, value)?,
            "static_std_threshold" => self.static_std_threshold = num(key, value)?,
            "low_activity_threshold" => self.low_activity_threshold = num(key, value)?,
            "ema_alpha" => self.ema_alpha = num(key, value)?,
            "knn_k" => self.knn_k = num(key, value)?,
            "svm_c" => self.svm_c = num(key, value)?,
            "frame_width" => self.frame_width = Some(num(key, value)?),
            "frame_height" => self.frame_height = Some(num(key, value)?),
            "gmm_component_range" => self.gmm_component_range = parse_range(value)?,
            other => return Err(format!("unknown key {other:?}")),
        }
        Ok(())
    }

    /// Check every field is in range.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParameter(m.to_string()));
        if self.grid_rows == 0 || self.grid_cols == 0 {
            return bad("grid dimensions must be positive");
        }
        if self.min_tracklet_len == 0 || self.reseed_interval < 2 {
            return bad("min_tracklet_len must be positive and reseed_interval at least 2");
        }
        if !(self.static_std_threshold > 0.0 && self.static_std_threshold.is_finite()) {
            return bad("static_std_threshold must be positive");
        }
        if self.low_activity_threshold == 0 {
            return bad("low_activity_threshold must be positive");
        }
        if !(self.ema_alpha > 0.0 && self.ema_alpha <= 1.0) {
            return bad("ema_alpha must lie in (0, 1]");
        }
        if self.knn_k == 0 {
            return bad("knn_k must be positive");
        }
        if *self.gmm_component_range.start() == 0
            || self.gmm_component_range.start() > self.gmm_component_range.end()
        {
            return bad("gmm_component_range must be a non-empty range of positive counts");
        }
        if !(self.svm_c > 0.0 && self.svm_c.is_finite()) {
            return bad("svm_c must be positive");
        }
        if self.frame_width == Some(0) || self.frame_height == Some(0) {
            return bad("frame dimensions must be positive");
        }
        Ok(())
    }

    /// Canonical `key=value` rendering; parsing it yields an equal config.
    pub fn to_kv_string(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "grid_rows={}", self.grid_rows);
        let _ = writeln!(s, "grid_cols={}", self.grid_cols);
        let _ = writeln!(s, "min_tracklet_len={}", self.min_tracklet_len);
        let _ = writeln!(s, "reseed_interval={}", self.reseed_interval);
        let _ = writeln!(s, "static_std_threshold={}", self.static_std_threshold);
        let _ = writeln!(s, "low_activity_threshold={}", self.low_activity_threshold);
        let _ = writeln!(s, "ema_alpha={}", self.ema_alpha);
        let _ = writeln!(s, "knn_k={}", self.knn_k);
        let _ = writeln!(
            s,
            "gmm_component_range={}..{}",
            self.gmm_component_range.start(),
            self.gmm_component_range.end()
        );
        let _ = writeln!(s, "svm_c={}", self.svm_c);
        if let Some(w) = self.frame_width {
            let _ = writeln!(s, "frame_width={w}");
        }
        if let Some(h) = self.frame_height {
            let _ = writeln!(s, "frame_height={h}");
        }
        s
    }
}

/// Accepts `a..b`, `a..=b` or `a-b`, all inclusive.
fn parse_range(v: &str) -> std::result::Result<RangeInclusive<usize>, String> {
    let (a, b) = v
        .split_once("..=")
        .or_else(|| v.split_once(".."))
        .or_else(|| v.split_once('-'))
        .ok_or_else(|| format!("expected a range like 1..4, got {v:?}"))?;
    let a: usize = a
        .trim()
        .parse()
        .map_err(|_| format!("bad range start in {v:?}"))?;
    let b: usize = b
        .trim()
        .parse()
        .map_err(|_| format!("bad range end in {v:?}"))?;
    Ok(a..=b)
}
