//! Adaptive per-pixel Gaussian-mixture background subtraction.
//!
//! Each pixel keeps up to [`MogParams::components`] Gaussians over luminance.
//! Weights learn at `max(learning_rate, 1/t)` and matched components at
//! `max(learning_rate, 1/matches)`, which gives the fast start-up of an
//! expected-sufficient-statistics update and the recency of a fixed rate
//! afterwards. Components stay sorted by `weight / sigma`; the leading ones
//! whose cumulative weight first exceeds the background ratio model the
//! background.

use crate::error::{Error, Result};
use crate::frame_io::{encode_pgm, Frame};
use crate::par::{self, Execution};

/// Most components any pixel may hold.
pub const MAX_COMPONENTS: usize = 5;

#[derive(Debug, Clone, PartialEq)]
pub struct MogParams {
    pub components: usize,
    pub background_ratio: f32,
    /// Match radius in standard deviations.
    pub match_sigmas: f32,
    pub variance_floor: f32,
    pub initial_variance: f32,
    pub learning_rate: f64,
}

impl Default for MogParams {
    fn default() -> Self {
        Self {
            components: 5,
            background_ratio: 0.7,
            match_sigmas: 2.5,
            variance_floor: 4.0,
            initial_variance: 225.0,
            learning_rate: 0.005,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Component {
    pub weight: f32,
    pub mean: f32,
    pub variance: f32,
    /// Number of frames this component has matched.
    matches: f32,
}

/// Per-pixel mixtures for a whole frame.
#[derive(Debug, Clone)]
pub struct BackgroundModel {
    width: usize,
    height: usize,
    params: MogParams,
    mixtures: Vec<[Component; MAX_COMPONENTS]>,
    active: Vec<u8>,
    frames_seen: u64,
}

/// Boolean image, `true` where the pixel is foreground.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ForegroundMask {
    pub width: usize,
    pub height: usize,
    pub bits: Vec<bool>,
}

impl ForegroundMask {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            bits: vec![false; width * height],
        }
    }

    pub fn full(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            bits: vec![true; width * height],
        }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: bool) {
        self.bits[y * self.width + x] = v;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    /// Debug dump as a 0/255 PGM image.
    pub fn to_pgm(&self) -> Vec<u8> {
        let px: Vec<u8> = self.bits.iter().map(|&b| if b { 255 } else { 0 }).collect();
        encode_pgm(self.width, self.height, &px)
    }
}

impl BackgroundModel {
    pub fn new(width: usize, height: usize, params: MogParams) -> Result<Self> {
        if params.components == 0 || params.components > MAX_COMPONENTS {
            return Err(Error::InvalidParameter(format!(
                "component count must be in 1..={MAX_COMPONENTS}"
            )));
        }
        if !(params.learning_rate > 0.0 && params.learning_rate <= 1.0) {
            return Err(Error::InvalidParameter(
                "learning rate must lie in (0, 1]".into(),
            ));
        }
        Ok(Self {
            width,
            height,
            params,
            mixtures: vec![[Component::default(); MAX_COMPONENTS]; width * height],
            active: vec![0; width * height],
            frames_seen: 0,
        })
    }

    pub fn params(&self) -> &MogParams {
        &self.params
    }

    pub fn frames_seen(&self) -> u64 {
        self.frames_seen
    }

    /// Components of one pixel, strongest first.
    pub fn pixel_components(&self, x: usize, y: usize) -> &[Component] {
        let i = y * self.width + x;
        &self.mixtures[i][..self.active[i] as usize]
    }

    /// Update with the configured learning rate.
    pub fn apply(&mut self, frame: &Frame, exec: Execution) -> Result<ForegroundMask> {
        let lr = self.params.learning_rate;
        self.update(frame, lr, exec)
    }

    /// Match `frame` against the model, update it, and return the foreground.
    /// The very first frame only initializes the model and is all background.
    pub fn update(
        &mut self,
        frame: &Frame,
        learning_rate: f64,
        exec: Execution,
    ) -> Result<ForegroundMask> {
        if frame.width != self.width || frame.height != self.height {
            return Err(Error::DimensionMismatch {
                index: frame.index,
                want_w: self.width,
                want_h: self.height,
                got_w: frame.width,
                got_h: frame.height,
            });
        }
        if !(learning_rate > 0.0 && learning_rate <= 1.0) {
            return Err(Error::InvalidParameter(
                "learning rate must lie in (0, 1]".into(),
            ));
        }
        self.frames_seen += 1;
        let weight_rate = learning_rate.max(1.0 / self.frames_seen as f64) as f32;
        let lr = learning_rate as f32;
        let p = &self.params;
        let w = self.width;
        let mut mask = ForegroundMask::new(self.width, self.height);

        // one row of pixels per work item
        let rows = self.height;
        let row_work = |row: usize,
                        mix: &mut [[Component; MAX_COMPONENTS]],
                        active: &mut [u8],
                        out: &mut [bool]| {
            let pixels = &frame.pixels[row * w..(row + 1) * w];
            for x in 0..w {
                out[x] = update_pixel(
                    &mut mix[x],
                    &mut active[x],
                    pixels[x] as f32,
                    weight_rate,
                    lr,
                    p,
                );
            }
        };

        let mixtures = &mut self.mixtures;
        let active = &mut self.active;
        let mut bundles: Vec<_> = mixtures
            .chunks_mut(w)
            .zip(active.chunks_mut(w))
            .zip(mask.bits.chunks_mut(w))
            .enumerate()
            .collect();
        debug_assert_eq!(bundles.len(), rows);
        par::for_each_chunk_mut(exec, &mut bundles, 8, |_, chunk| {
            for (row, ((mix, act), out)) in chunk.iter_mut() {
                row_work(*row, mix, act, out);
            }
        });
        Ok(mask)
    }
}

/// Returns `true` when the pixel is foreground.
#[inline]
fn update_pixel(
    mix: &mut [Component; MAX_COMPONENTS],
    active: &mut u8,
    x: f32,
    weight_rate: f32,
    lr: f32,
    p: &MogParams,
) -> bool {
    let n = *active as usize;
    if n == 0 {
        mix[0] = Component {
            weight: 1.0,
            mean: x,
            variance: p.initial_variance,
            matches: 1.0,
        };
        *active = 1;
        return false;
    }

    let mut matched = None;
    for (k, c) in mix[..n].iter().enumerate() {
        let d = x - c.mean;
        if d * d <= p.match_sigmas * p.match_sigmas * c.variance {
            matched = Some(k);
            break;
        }
    }

    // background = leading components until cumulative weight exceeds T
    let mut cum = 0.0;
    let mut n_background = n;
    for (k, c) in mix[..n].iter().enumerate() {
        cum += c.weight;
        if cum > p.background_ratio {
            n_background = k + 1;
            break;
        }
    }
    let foreground = matched.is_none_or(|m| m >= n_background);

    for (k, c) in mix[..n].iter_mut().enumerate() {
        let hit = if Some(k) == matched { 1.0 } else { 0.0 };
        c.weight = (1.0 - weight_rate) * c.weight + weight_rate * hit;
    }
    let mut n = n;
    match matched {
        Some(m) => {
            let c = &mut mix[m];
            c.matches += 1.0;
            let rho = lr.max(1.0 / c.matches);
            c.mean += rho * (x - c.mean);
            let d = x - c.mean;
            c.variance = ((1.0 - rho) * c.variance + rho * d * d).max(p.variance_floor);
        }
        None => {
            let slot = if n < p.components {
                n += 1;
                n - 1
            } else {
                n - 1
            };
            mix[slot] = Component {
                weight: weight_rate,
                mean: x,
                variance: p.initial_variance,
                matches: 1.0,
            };
        }
    }
    *active = n as u8;

    let total: f32 = mix[..n].iter().map(|c| c.weight).sum();
    for c in &mut mix[..n] {
        c.weight /= total;
    }
    // insertion sort by weight/sigma, descending; compare w^2/var
    for i in 1..n {
        let mut j = i;
        while j > 0 && rank(&mix[j]) > rank(&mix[j - 1]) {
            mix.swap(j, j - 1);
            j -= 1;
        }
    }
    foreground
}

#[inline]
fn rank(c: &Component) -> f32 {
    c.weight * c.weight / c.variance
}

fn erode_or_dilate(src: &ForegroundMask, r: usize, dilate: bool) -> ForegroundMask {
    let (w, h) = (src.width, src.height);
    // horizontal then vertical pass; out-of-image pixels are ignored
    let mut tmp = vec![false; w * h];
    for y in 0..h {
        let row = &src.bits[y * w..(y + 1) * w];
        for x in 0..w {
            let lo = x.saturating_sub(r);
            let hi = (x + r).min(w - 1);
            let win = &row[lo..=hi];
            tmp[y * w + x] = if dilate {
                win.iter().any(|&b| b)
            } else {
                win.iter().all(|&b| b)
            };
        }
    }
    let mut out = ForegroundMask::new(w, h);
    for y in 0..h {
        let lo = y.saturating_sub(r);
        let hi = (y + r).min(h - 1);
        for x in 0..w {
            let mut acc = !dilate;
            for yy in lo..=hi {
                let b = tmp[yy * w + x];
                if dilate && b {
                    acc = true;
                    break;
                }
                if !dilate && !b {
                    acc = false;
                    break;
                }
            }
            out.bits[y * w + x] = acc;
        }
    }
    out
}

pub fn erode(mask: &ForegroundMask, radius: usize) -> ForegroundMask {
    erode_or_dilate(mask, radius, false)
}

pub fn dilate(mask: &ForegroundMask, radius: usize) -> ForegroundMask {
    erode_or_dilate(mask, radius, true)
}

/// `close(open(mask))` with a `(2r+1)^2` square element.
pub fn morph_open_close(mask: &ForegroundMask, radius: usize) -> ForegroundMask {
    let r = radius.max(1);
    let opened = dilate(&erode(mask, r), r);
    erode(&dilate(&opened, r), r)
}
