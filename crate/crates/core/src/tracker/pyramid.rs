//! Gaussian image pyramid with per-level Scharr gradients.

use crate::frame_io::Frame;

#[derive(Debug, Clone)]
pub struct Level {
    pub width: usize,
    pub height: usize,
    pub image: Vec<f32>,
    pub grad_x: Vec<f32>,
    pub grad_y: Vec<f32>,
}

#[derive(Debug, Clone)]
pub struct Pyramid {
    pub levels: Vec<Level>,
}

impl Pyramid {
    /// `levels` counts the full-resolution image as level 0.
    pub fn build(frame: &Frame, levels: usize) -> Self {
        let base: Vec<f32> = frame.pixels.iter().map(|&p| p as f32).collect();
        let mut out = Vec::with_capacity(levels.max(1));
        out.push(Level::new(frame.width, frame.height, base));
        while out.len() < levels.max(1) {
            let prev = out.last().unwrap();
            if prev.width < 8 || prev.height < 8 {
                break;
            }
            let (w, h, img) = downsample(prev.width, prev.height, &prev.image);
            out.push(Level::new(w, h, img));
        }
        Self { levels: out }
    }

    pub fn base(&self) -> &Level {
        &self.levels[0]
    }
}

impl Level {
    fn new(width: usize, height: usize, image: Vec<f32>) -> Self {
        let (grad_x, grad_y) = scharr(width, height, &image);
        Self {
            width,
            height,
            image,
            grad_x,
            grad_y,
        }
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize) -> f32 {
        self.image[y * self.width + x]
    }
}

#[inline]
fn clampi(v: isize, hi: usize) -> usize {
    v.clamp(0, hi as isize - 1) as usize
}

/// Blur with the 5-tap binomial kernel and keep even pixels.
fn downsample(w: usize, h: usize, src: &[f32]) -> (usize, usize, Vec<f32>) {
    const K: [f32; 5] = [1.0 / 16.0, 4.0 / 16.0, 6.0 / 16.0, 4.0 / 16.0, 1.0 / 16.0];
    let (nw, nh) = (w.div_ceil(2), h.div_ceil(2));
    // horizontal blur only at even columns
    let mut tmp = vec![0f32; nw * h];
    for y in 0..h {
        let row = &src[y * w..(y + 1) * w];
        for nx in 0..nw {
            let x = (2 * nx) as isize;
            let mut acc = 0.0;
            for (k, c) in K.iter().enumerate() {
                acc += c * row[clampi(x + k as isize - 2, w)];
            }
            tmp[y * nw + nx] = acc;
        }
    }
    let mut out = vec![0f32; nw * nh];
    for ny in 0..nh {
        let y = (2 * ny) as isize;
        for nx in 0..nw {
            let mut acc = 0.0;
            for (k, c) in K.iter().enumerate() {
                acc += c * tmp[clampi(y + k as isize - 2, h) * nw + nx];
            }
            out[ny * nw + nx] = acc;
        }
    }
    (nw, nh, out)
}

/// Scharr derivatives scaled to intensity units per pixel.
fn scharr(w: usize, h: usize, img: &[f32]) -> (Vec<f32>, Vec<f32>) {
    let mut gx = vec![0f32; w * h];
    let mut gy = vec![0f32; w * h];
    for y in 0..h {
        let ym = clampi(y as isize - 1, h) * w;
        let y0 = y * w;
        let yp = clampi(y as isize + 1, h) * w;
        for x in 0..w {
            let xm = clampi(x as isize - 1, w);
            let xp = clampi(x as isize + 1, w);
            let dx = 3.0 * (img[ym + xp] - img[ym + xm])
                + 10.0 * (img[y0 + xp] - img[y0 + xm])
                + 3.0 * (img[yp + xp] - img[yp + xm]);
            let dy = 3.0 * (img[yp + xm] - img[ym + xm])
                + 10.0 * (img[yp + x] - img[ym + x])
                + 3.0 * (img[yp + xp] - img[ym + xp]);
            gx[y0 + x] = dx / 32.0;
            gy[y0 + x] = dy / 32.0;
        }
    }
    (gx, gy)
}

/// Bilinear sample with border replication.
#[inline]
pub fn bilinear(buf: &[f32], w: usize, h: usize, x: f32, y: f32) -> f32 {
    let x = x.clamp(0.0, (w - 1) as f32);
    let y = y.clamp(0.0, (h - 1) as f32);
    let x0 = x.floor() as usize;
    let y0 = y.floor() as usize;
    let x1 = (x0 + 1).min(w - 1);
    let y1 = (y0 + 1).min(h - 1);
    let ax = x - x0 as f32;
    let ay = y - y0 as f32;
    let top = buf[y0 * w + x0] * (1.0 - ax) + buf[y0 * w + x1] * ax;
    let bot = buf[y1 * w + x0] * (1.0 - ax) + buf[y1 * w + x1] * ax;
    top * (1.0 - ay) + bot * ay
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ramp_gradient_is_exact_in_interior() {
        let (w, h) = (20, 16);
        let px = (0..w * h).map(|i| ((i % w) * 3) as u8).collect();
        let f = Frame::new(0, w, h, px).unwrap();
        let p = Pyramid::build(&f, 3);
        assert_eq!(p.levels.len(), 3);
        assert_eq!((p.levels[1].width, p.levels[1].height), (10, 8));
        let l = p.base();
        assert!((l.grad_x[5 * w + 7] - 3.0).abs() < 1e-5);
        assert!(l.grad_y[5 * w + 7].abs() < 1e-5);
    }

    #[test]
    fn bilinear_interpolates_and_clamps() {
        let buf = [0.0, 10.0, 20.0, 30.0];
        assert_eq!(bilinear(&buf, 2, 2, 0.5, 0.5), 15.0);
        assert_eq!(bilinear(&buf, 2, 2, -3.0, 9.0), 20.0);
    }
}
