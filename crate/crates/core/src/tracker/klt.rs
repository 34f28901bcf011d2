//! Pyramidal Lucas-Kanade point tracking.

use crate::error::{Error, Result};
use crate::frame_io::Frame;
use crate::par::{self, Execution};

use super::pyramid::{bilinear, Level, Pyramid};

#[derive(Debug, Clone, PartialEq)]
pub struct KltParams {
    /// Side of the square integration window (odd).
    pub window: usize,
    /// Pyramid levels including full resolution.
    pub levels: usize,
    pub max_iterations: usize,
    /// Stop iterating once an update is shorter than this (pixels).
    pub epsilon: f32,
    /// Smallest accepted per-pixel minimum eigenvalue of the structure
    /// tensor at full resolution, in squared intensity units per pixel^2.
    pub min_eigen: f32,
}

impl Default for KltParams {
    fn default() -> Self {
        Self {
            window: 15,
            levels: 3,
            max_iterations: 20,
            epsilon: 0.03,
            min_eigen: 1.0,
        }
    }
}

/// Track `points` from `prev` to `next`. `None` marks a lost point.
pub fn klt_step(
    prev: &Frame,
    next: &Frame,
    points: &[[f64; 2]],
    params: &KltParams,
) -> Result<Vec<Option<[f64; 2]>>> {
    if prev.dims() != next.dims() {
        return Err(Error::DimensionMismatch {
            index: next.index,
            want_w: prev.width,
            want_h: prev.height,
            got_w: next.width,
            got_h: next.height,
        });
    }
    let a = Pyramid::build(prev, params.levels);
    let b = Pyramid::build(next, params.levels);
    Ok(track_points(&a, &b, points, params, Execution::Sequential))
}

pub(crate) fn track_points(
    prev: &Pyramid,
    next: &Pyramid,
    points: &[[f64; 2]],
    params: &KltParams,
    exec: Execution,
) -> Vec<Option<[f64; 2]>> {
    par::map(exec, points, |p| track_one(prev, next, *p, params))
}

fn track_one(prev: &Pyramid, next: &Pyramid, p: [f64; 2], params: &KltParams) -> Option<[f64; 2]> {
    let half = (params.window / 2) as isize;
    let side = (2 * half + 1) as usize;
    let n = side * side;
    let mut win_i = vec![0f32; n];
    let mut win_gx = vec![0f32; n];
    let mut win_gy = vec![0f32; n];

    let levels = prev.levels.len().min(next.levels.len());
    let mut guess = [0f32; 2];
    let mut flow = [0f32; 2];
    for level in (0..levels).rev() {
        let scale = 1.0 / (1u32 << level) as f32;
        let lp: &Level = &prev.levels[level];
        let ln: &Level = &next.levels[level];
        let (px, py) = (p[0] as f32 * scale, p[1] as f32 * scale);

        let (mut gxx, mut gxy, mut gyy) = (0f32, 0f32, 0f32);
        let mut k = 0;
        for dy in -half..=half {
            for dx in -half..=half {
                let (x, y) = (px + dx as f32, py + dy as f32);
                let gx = bilinear(&lp.grad_x, lp.width, lp.height, x, y);
                let gy = bilinear(&lp.grad_y, lp.width, lp.height, x, y);
                win_i[k] = bilinear(&lp.image, lp.width, lp.height, x, y);
                win_gx[k] = gx;
                win_gy[k] = gy;
                gxx += gx * gx;
                gxy += gx * gy;
                gyy += gy * gy;
                k += 1;
            }
        }
        let min_eig = 0.5 * (gxx + gyy - ((gxx - gyy).powi(2) + 4.0 * gxy * gxy).sqrt()) / n as f32;
        let det = gxx * gyy - gxy * gxy;
        if min_eig < params.min_eigen || det <= f32::EPSILON {
            if level == 0 {
                return None;
            }
            guess = [2.0 * guess[0], 2.0 * guess[1]];
            continue;
        }
        let inv_det = 1.0 / det;

        let mut nu = [0f32; 2];
        let mut converged = false;
        for _ in 0..params.max_iterations {
            let (qx, qy) = (px + guess[0] + nu[0], py + guess[1] + nu[1]);
            if !qx.is_finite()
                || !qy.is_finite()
                || qx < -(half as f32)
                || qy < -(half as f32)
                || qx > (ln.width as isize + half) as f32
                || qy > (ln.height as isize + half) as f32
            {
                return None;
            }
            let (mut bx, mut by) = (0f32, 0f32);
            let mut k = 0;
            for dy in -half..=half {
                for dx in -half..=half {
                    let j = bilinear(
                        &ln.image,
                        ln.width,
                        ln.height,
                        qx + dx as f32,
                        qy + dy as f32,
                    );
                    let diff = win_i[k] - j;
                    bx += diff * win_gx[k];
                    by += diff * win_gy[k];
                    k += 1;
                }
            }
            let ex = inv_det * (gyy * bx - gxy * by);
            let ey = inv_det * (gxx * by - gxy * bx);
            nu[0] += ex;
            nu[1] += ey;
            if ex * ex + ey * ey < params.epsilon * params.epsilon {
                converged = true;
                break;
            }
        }
        if level == 0 {
            if !converged {
                return None;
            }
            flow = [guess[0] + nu[0], guess[1] + nu[1]];
        } else {
            guess = [2.0 * (guess[0] + nu[0]), 2.0 * (guess[1] + nu[1])];
        }
    }

    let nx = p[0] + flow[0] as f64;
    let ny = p[1] + flow[1] as f64;
    let base = next.base();
    if nx < 0.0 || ny < 0.0 || nx > (base.width - 1) as f64 || ny > (base.height - 1) as f64 {
        return None;
    }
    Some([nx, ny])
}
