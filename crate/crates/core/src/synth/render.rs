use rand_distr::{Distribution, StandardNormal};

use super::{ScenarioSpec, Simulation};
use crate::error::Result;
use crate::frame_io::Frame;
use crate::seed;

/// Draws frames of a simulation one at a time.
pub struct Renderer<'a> {
    sim: &'a Simulation,
    background: Vec<f32>,
    next: usize,
}

impl<'a> Renderer<'a> {
    pub fn new(sim: &'a Simulation) -> Self {
        Self {
            sim,
            background: background(&sim.spec),
            next: 0,
        }
    }

    pub fn frame(&self, t: usize) -> Result<Frame> {
        let spec = &self.sim.spec;
        let (w, h) = (spec.width, spec.height);
        let mut img = self.background.clone();
        for (a, look) in self.sim.appearance.iter().enumerate() {
            let p = self.sim.positions[t][a];
            // wrapped copies keep discs whole while crossing an edge
            for dx in [-(w as f64), 0.0, w as f64] {
                for dy in [-(h as f64), 0.0, h as f64] {
                    draw_disc(
                        &mut img,
                        w,
                        h,
                        [p[0] + dx, p[1] + dy],
                        spec.agent_radius,
                        look,
                    );
                }
            }
        }
        if spec.pixel_noise > 0.0 {
            let mut rng = seed::rng(spec.seed, &[0x7e, t as u64]);
            for v in &mut img {
                let n: f64 = StandardNormal.sample(&mut rng);
                *v += (n * spec.pixel_noise) as f32;
            }
        }
        let px = img
            .iter()
            .map(|&v| v.round().clamp(0.0, 255.0) as u8)
            .collect();
        Frame::new(t as u64, w, h, px)
    }
}

impl Iterator for Renderer<'_> {
    type Item = Result<Frame>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.next >= self.sim.frames() {
            return None;
        }
        self.next += 1;
        Some(self.frame(self.next - 1))
    }
}

pub fn render(sim: &Simulation) -> Renderer<'_> {
    Renderer::new(sim)
}

pub fn render_frame(sim: &Simulation, t: usize) -> Result<Frame> {
    Renderer::new(sim).frame(t)
}

/// Smooth static texture: a few random low-frequency plane waves.
fn background(spec: &ScenarioSpec) -> Vec<f32> {
    use rand::Rng;
    let bg = &spec.background;
    let mut rng = seed::rng(bg.seed, &[0xb9]);
    let waves: Vec<[f64; 4]> = (0..4)
        .map(|_| {
            let ang = rng.random_range(0.0..std::f64::consts::TAU);
            let k = rng.random_range(0.01..0.04);
            [
                k * ang.cos(),
                k * ang.sin(),
                rng.random_range(0.0..6.3),
                rng.random_range(0.5..1.0),
            ]
        })
        .collect();
    let norm: f64 = waves.iter().map(|w| w[3]).sum();
    let mut out = Vec::with_capacity(spec.width * spec.height);
    for y in 0..spec.height {
        for x in 0..spec.width {
            let s: f64 = waves
                .iter()
                .map(|w| w[3] * (w[0] * x as f64 + w[1] * y as f64 + w[2]).sin())
                .sum();
            out.push((bg.mean + bg.contrast * s / norm) as f32);
        }
    }
    out
}

fn draw_disc(img: &mut [f32], w: usize, h: usize, c: [f64; 2], r: f64, look: &super::Appearance) {
    let reach = r + 1.0;
    if c[0] + reach < 0.0
        || c[1] + reach < 0.0
        || c[0] - reach > w as f64
        || c[1] - reach > h as f64
    {
        return;
    }
    let x0 = (c[0] - reach).floor().max(0.0) as usize;
    let x1 = ((c[0] + reach).ceil() as usize).min(w - 1);
    let y0 = (c[1] - reach).floor().max(0.0) as usize;
    let y1 = ((c[1] + reach).ceil() as usize).min(h - 1);
    for y in y0..=y1 {
        for x in x0..=x1 {
            let (dx, dy) = (x as f64 - c[0], y as f64 - c[1]);
            let d = dx.hypot(dy);
            let alpha = (r + 0.5 - d).clamp(0.0, 1.0);
            if alpha == 0.0 {
                continue;
            }
            let mut v = look.base - 30.0 * (d / r).powi(2);
            for b in &look.blobs {
                let q = (dx - b[0]).powi(2) + (dy - b[1]).powi(2);
                v += b[2] * (-q / (2.0 * b[3] * b[3])).exp();
            }
            let px = &mut img[y * w + x];
            *px = (alpha * v + (1.0 - alpha) * *px as f64) as f32;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::super::*;

    fn one_agent(mode: Mode, frames: usize) -> ScenarioSpec {
        ScenarioSpec {
            width: 64,
            height: 48,
            agents: 1,
            agent_radius: 6.0,
            timeline: vec![Segment {
                start: 0,
                end: frames,
                mode,
                heading_noise: 0.0,
            }],
            jitter: 0.0,
            speed_spread: 0.15,
            pace_swing: 0.0,
            pace_period: 100.0,
            pixel_noise: 0.0,
            background: Background {
                mean: 60.0,
                contrast: 5.0,
                seed: 3,
            },
            seed: 9,
        }
    }

    #[test]
    fn disc_pixels_differ_from_background() {
        let spec = one_agent(
            Mode::CoherentFlow {
                direction: 0.0,
                speed: 1.0,
            },
            3,
        );
        let sim = simulate(&spec).unwrap();
        let f = render_frame(&sim, 0).unwrap();
        let p = sim.positions[0][0];
        let centre = f.get(p[0].round() as usize, p[1].round() as usize);
        assert!(centre > 100, "{centre}");
        let mut empty = spec.clone();
        empty.agents = 0;
        let bg = render_frame(&simulate(&empty).unwrap(), 0).unwrap();
        assert!(bg.pixels.iter().all(|&v| (50..=70).contains(&v)));
    }

    #[test]
    fn iterator_yields_every_frame_in_order() {
        let spec = one_agent(Mode::Milling { speed: 1.0 }, 7);
        let sim = simulate(&spec).unwrap();
        let idx: Vec<u64> = render(&sim).map(|f| f.unwrap().index).collect();
        assert_eq!(idx, (0..7).collect::<Vec<_>>());
    }
}
