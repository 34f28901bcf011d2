//! Minimum-eigenvalue ("good features to track") corner selection.

use crate::foreground::ForegroundMask;
use crate::frame_io::Frame;

use super::pyramid::{Level, Pyramid};

#[derive(Debug, Clone, PartialEq)]
pub struct CornerParams {
    pub max_points: usize,
    /// Fraction of the strongest response a corner must reach.
    pub quality: f32,
    pub min_distance: f32,
    /// Side of the structure-tensor summation window.
    pub block_size: usize,
}

impl Default for CornerParams {
    fn default() -> Self {
        Self {
            max_points: 400,
            quality: 0.01,
            min_distance: 5.0,
            block_size: 3,
        }
    }
}

pub fn detect_corners(
    frame: &Frame,
    mask: &ForegroundMask,
    params: &CornerParams,
) -> Vec<[f64; 2]> {
    let pyr = Pyramid::build(frame, 1);
    detect_on_level(pyr.base(), mask, params)
}

pub(crate) fn detect_on_level(
    level: &Level,
    mask: &ForegroundMask,
    params: &CornerParams,
) -> Vec<[f64; 2]> {
    let (w, h) = (level.width, level.height);
    let r = params.block_size.max(1) / 2;
    let margin = r + 1;
    if w <= 2 * margin || h <= 2 * margin || !mask.bits.iter().any(|&b| b) {
        return Vec::new();
    }

    // rows containing any foreground, so empty scenes cost almost nothing
    let row_has: Vec<bool> = (0..h)
        .map(|y| mask.bits[y * w..(y + 1) * w].iter().any(|&b| b))
        .collect();

    let mut eig = vec![0f32; w * h];
    let mut max_eig = 0f32;
    for y in margin..h - margin {
        if !row_has[y] {
            continue;
        }
        for x in margin..w - margin {
            if !mask.get(x, y) {
                continue;
            }
            let (mut a, mut b, mut c) = (0f32, 0f32, 0f32);
            for yy in y - r..=y + r {
                for xx in x - r..=x + r {
                    let i = yy * w + xx;
                    let (gx, gy) = (level.grad_x[i], level.grad_y[i]);
                    a += gx * gx;
                    b += gx * gy;
                    c += gy * gy;
                }
            }
            let half_tr = 0.5 * (a + c);
            let d = (0.25 * (a - c) * (a - c) + b * b).sqrt();
            let e = (half_tr - d).max(0.0);
            eig[y * w + x] = e;
            max_eig = max_eig.max(e);
        }
    }
    if max_eig <= 0.0 {
        return Vec::new();
    }
    let thresh = params.quality * max_eig;

    let mut cands: Vec<(f32, usize)> = Vec::new();
    for y in margin..h - margin {
        if !row_has[y] {
            continue;
        }
        for x in margin..w - margin {
            let e = eig[y * w + x];
            if e < thresh || e <= 0.0 {
                continue;
            }
            // 3x3 local maximum
            let mut is_max = true;
            'n: for yy in y - 1..=y + 1 {
                for xx in x - 1..=x + 1 {
                    if eig[yy * w + xx] > e {
                        is_max = false;
                        break 'n;
                    }
                }
            }
            if is_max {
                cands.push((e, y * w + x));
            }
        }
    }
    cands.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));

    // greedy thinning with a bucket grid of cell size min_distance
    let md = params.min_distance.max(1.0);
    let cell = md.ceil() as usize;
    let (gw, gh) = (w.div_ceil(cell), h.div_ceil(cell));
    let mut grid: Vec<Vec<[f32; 2]>> = vec![Vec::new(); gw * gh];
    let mut out = Vec::new();
    for (_, idx) in cands {
        if out.len() >= params.max_points {
            break;
        }
        let (x, y) = ((idx % w) as f32, (idx / w) as f32);
        let (cx, cy) = (idx % w / cell, idx / w / cell);
        let mut ok = true;
        'g: for gy in cy.saturating_sub(1)..=(cy + 1).min(gh - 1) {
            for gx in cx.saturating_sub(1)..=(cx + 1).min(gw - 1) {
                for p in &grid[gy * gw + gx] {
                    let (dx, dy) = (p[0] - x, p[1] - y);
                    if dx * dx + dy * dy < md * md {
                        ok = false;
                        break 'g;
                    }
                }
            }
        }
        if ok {
            grid[cy * gw + cx].push([x, y]);
            out.push([x as f64, y as f64]);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square(w: usize, h: usize, x0: usize, y0: usize, side: usize) -> Frame {
        let mut px = vec![30u8; w * h];
        for y in y0..(y0 + side).min(h) {
            for x in x0..(x0 + side).min(w) {
                px[y * w + x] = 220;
            }
        }
        Frame::new(0, w, h, px).unwrap()
    }

    #[test]
    fn empty_mask_gives_no_points() {
        let f = square(40, 40, 10, 10, 12);
        let m = ForegroundMask::new(40, 40);
        assert!(detect_corners(&f, &m, &CornerParams::default()).is_empty());
    }

    #[test]
    fn finds_square_corner() {
        let f = square(48, 48, 20, 20, 40);
        // only the top-left corner region is foreground
        let mut m = ForegroundMask::new(48, 48);
        for y in 12..30 {
            for x in 12..30 {
                m.set(x, y, true);
            }
        }
        let pts = detect_corners(&f, &m, &CornerParams::default());
        assert!(!pts.is_empty());
        // the true corner sits between pixels 19 and 20
        let best = pts[0];
        let d = ((best[0] - 19.5).powi(2) + (best[1] - 19.5).powi(2)).sqrt();
        assert!(d <= 2.0, "corner at {best:?}");
    }

    #[test]
    fn thinning_keeps_one_of_two_close_corners() {
        // two bright dots 3 px apart
        let (w, h) = (40, 40);
        let mut px = vec![0u8; w * h];
        for (x, y) in [(18, 20), (21, 20)] {
            px[y * w + x] = 255;
        }
        let f = Frame::new(0, w, h, px).unwrap();
        let m = ForegroundMask::full(w, h);
        let params = CornerParams {
            min_distance: 10.0,
            ..CornerParams::default()
        };
        let pts = detect_corners(&f, &m, &params);
        assert_eq!(pts.len(), 1, "{pts:?}");
        let loose = detect_corners(
            &f,
            &m,
            &CornerParams {
                min_distance: 1.0,
                ..params
            },
        );
        assert!(loose.len() >= 2);
    }

    #[test]
    fn respects_max_points_and_min_distance() {
        let (w, h) = (64, 64);
        let px = (0..w * h)
            .map(|i| {
                if ((i % w) / 4 + (i / w) / 4) % 2 == 0 {
                    40
                } else {
                    200
                }
            })
            .collect();
        let f = Frame::new(0, w, h, px).unwrap();
        let m = ForegroundMask::full(w, h);
        let params = CornerParams {
            max_points: 7,
            ..CornerParams::default()
        };
        let pts = detect_corners(&f, &m, &params);
        assert_eq!(pts.len(), 7);
        for i in 0..pts.len() {
            for j in 0..i {
                let d = ((pts[i][0] - pts[j][0]).powi(2) + (pts[i][1] - pts[j][1]).powi(2)).sqrt();
                assert!(d >= 5.0);
            }
        }
    }
}
