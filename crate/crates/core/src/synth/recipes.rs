//! Shipped scenario corpora.

use std::f64::consts::{FRAC_PI_2, PI, TAU};
use std::str::FromStr;

use rand::Rng;

use super::{Background, ClipSpec, Mode, ScenarioSpec, Segment};
use crate::error::{Error, Result};
use crate::models::Label;
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Recipe {
    /// Three scenes, two clips each, flow turning into panic at 70%.
    UmnLike,
    /// Forty short clips, half of them violent mixing.
    VfLike,
    /// One 600-frame clip for throughput measurement.
    Throughput,
}

impl FromStr for Recipe {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "umn-like" | "umn_like" => Ok(Recipe::UmnLike),
            "vf-like" | "vf_like" => Ok(Recipe::VfLike),
            "throughput" => Ok(Recipe::Throughput),
            other => Err(Error::InvalidParameter(format!("unknown recipe {other:?}"))),
        }
    }
}

pub fn recipe(r: Recipe, seed: u64) -> Vec<ClipSpec> {
    match r {
        Recipe::UmnLike => umn_like(seed),
        Recipe::VfLike => vf_like(seed),
        Recipe::Throughput => vec![ClipSpec {
            name: "throughput".into(),
            scene: "throughput".into(),
            spec: throughput_scenario(seed),
        }],
    }
}

const WIDTH: usize = 320;
const HEIGHT: usize = 240;

fn base(
    agents: usize,
    radius: f64,
    timeline: Vec<Segment>,
    bg_mean: f64,
    seed: u64,
) -> ScenarioSpec {
    ScenarioSpec {
        width: WIDTH,
        height: HEIGHT,
        agents,
        agent_radius: radius,
        timeline,
        jitter: 0.15,
        speed_spread: 0.15,
        pace_swing: 0.0,
        pace_period: 100.0,
        pixel_noise: 2.0,
        background: Background {
            mean: bg_mean,
            contrast: 10.0,
            seed,
        },
        seed,
    }
}

fn seg(start: usize, end: usize, mode: Mode, heading_noise: f64) -> Segment {
    Segment {
        start,
        end,
        mode,
        heading_noise,
    }
}

pub const UMN_CLIP_FRAMES: usize = 450;
pub const UMN_PANIC_ONSET: usize = 315;

pub fn umn_like(seed: u64) -> Vec<ClipSpec> {
    // (agents, speed, heading noise, background) per scene; scenes differ on purpose
    let scenes: [(usize, f64, f64, f64); 3] = [
        (45, 1.0, 0.15, 70.0),
        (75, 0.7, 0.15, 40.0),
        (30, 1.3, 0.45, 100.0),
    ];
    let mut out = Vec::new();
    for (s, &(agents, speed, noise, bg)) in scenes.iter().enumerate() {
        for c in 0..2 {
            let clip_seed = seed::derive_seed(seed, &[1, s as u64, c as u64]);
            let mut rng = seed::rng(clip_seed, &[0]);
            let direction = rng.random_range(0.0..TAU);
            let timeline = vec![
                seg(
                    0,
                    UMN_PANIC_ONSET,
                    Mode::CoherentFlow { direction, speed },
                    noise,
                ),
                seg(
                    UMN_PANIC_ONSET,
                    UMN_CLIP_FRAMES,
                    Mode::Panic { multiplier: 4.0 },
                    0.15,
                ),
            ];
            let mut spec = base(agents, 8.0, timeline, bg, clip_seed);
            spec.pace_swing = 0.25;
            spec.pace_period = 80.0;
            out.push(ClipSpec {
                name: format!("scene{}_clip{}", s + 1, c + 1),
                scene: format!("scene{}", s + 1),
                spec,
            });
        }
    }
    out
}

pub const VF_CLIP_FRAMES: usize = 120;

pub fn vf_like(seed: u64) -> Vec<ClipSpec> {
    const NOISE: f64 = 0.1;
    let mut out = Vec::new();
    for i in 0..40 {
        let clip_seed = seed::derive_seed(seed, &[2, i as u64]);
        let mut rng = seed::rng(clip_seed, &[0]);
        let d = rng.random_range(0.0..TAU);
        let vary = |rng: &mut rand_chacha::ChaCha8Rng, x: f64| x * rng.random_range(0.9..1.1);
        let n60 = 60;
        let (kind, agents, mode) = if i % 2 == 0 {
            (
                "violent",
                n60,
                Mode::ViolentMix {
                    direction: d,
                    speed: vary(&mut rng, 2.0),
                    crossing_angle: PI,
                },
            )
        } else {
            match (i / 2) % 4 {
                0 => (
                    "crossing",
                    n60,
                    Mode::CrossFlow {
                        direction: d,
                        speed: vary(&mut rng, 2.0),
                        crossing_angle: FRAC_PI_2,
                    },
                ),
                1 => (
                    "milling",
                    n60,
                    Mode::Milling {
                        speed: vary(&mut rng, 2.0),
                    },
                ),
                2 => (
                    "sparse_opposing",
                    20,
                    Mode::CrossFlow {
                        direction: d,
                        speed: vary(&mut rng, 2.0),
                        crossing_angle: PI,
                    },
                ),
                _ => (
                    "slow_opposing",
                    n60,
                    Mode::CrossFlow {
                        direction: d,
                        speed: vary(&mut rng, 0.8),
                        crossing_angle: PI,
                    },
                ),
            }
        };
        let bg = rng.random_range(40.0..90.0);
        let mut spec = base(
            agents,
            7.0,
            vec![seg(0, VF_CLIP_FRAMES, mode, NOISE)],
            bg,
            clip_seed,
        );
        if kind == "slow_opposing" {
            // same relative jitter as the fast clips, so only the pace differs
            spec.jitter *= 0.4;
        }
        out.push(ClipSpec {
            name: format!("clip{:02}_{kind}", i + 1),
            scene: kind.into(),
            spec,
        });
    }
    out
}

/// 320x240, 600 frames, 60 agents: flow with a late panic.
pub fn throughput_scenario(seed: u64) -> ScenarioSpec {
    let s = seed::derive_seed(seed, &[3]);
    base(
        60,
        8.0,
        vec![
            seg(
                0,
                420,
                Mode::CoherentFlow {
                    direction: 0.4,
                    speed: 1.5,
                },
                0.15,
            ),
            seg(420, 600, Mode::Panic { multiplier: 3.0 }, 0.15),
        ],
        60.0,
        s,
    )
}

impl ClipSpec {
    /// Clip-level truth: abnormal when any segment is.
    pub fn label(&self) -> Label {
        Label::abnormal_if(
            self.spec
                .timeline
                .iter()
                .any(|s| s.mode.label().is_abnormal()),
        )
    }
}
