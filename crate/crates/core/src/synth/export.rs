use super::Simulation;
use crate::tracker::{NoiseFilter, TrackMeta, Tracklet};

/// Ground-truth tracklets: each agent's trajectory cut into `window`-frame
/// chunks aligned to frame 0, split where the agent wraps across an edge,
/// then passed through `filter`.
pub fn export_tracklets(
    sim: &Simulation,
    window: usize,
    filter: &NoiseFilter,
) -> (TrackMeta, Vec<Tracklet>) {
    let window = window.max(1);
    let frames = sim.frames();
    let mut out = Vec::new();
    let mut id = 0u64;
    for start in (0..frames).step_by(window) {
        let end = (start + window).min(frames);
        for a in 0..sim.spec.agents {
            let mut run_start = start;
            for t in start..=end {
                if t == end || (t > run_start && sim.wrapped(t, a)) {
                    let pos: Vec<[f64; 2]> = (run_start..t).map(|f| sim.positions[f][a]).collect();
                    let tr = Tracklet::from_positions(id, run_start as u64, pos);
                    id += 1;
                    if filter.keep(&tr) {
                        out.push(tr);
                    }
                    run_start = t;
                }
            }
        }
    }
    let meta = TrackMeta {
        width: sim.spec.width,
        height: sim.spec.height,
        first_frame: 0,
        frame_count: frames as u64,
    };
    (meta, out)
}

#[cfg(test)]
mod tests {
    use super::super::*;
    use crate::tracker::NoiseFilter;

    fn spec(frames: usize, direction: f64, speed: f64) -> ScenarioSpec {
        ScenarioSpec {
            width: 400,
            height: 300,
            agents: 1,
            agent_radius: 5.0,
            timeline: vec![Segment {
                start: 0,
                end: frames,
                mode: Mode::CoherentFlow { direction, speed },
                heading_noise: 0.0,
            }],
            jitter: 0.0,
            speed_spread: 0.15,
            pace_swing: 0.0,
            pace_period: 100.0,
            pixel_noise: 0.0,
            background: Background {
                mean: 50.0,
                contrast: 0.0,
                seed: 0,
            },
            seed: 5,
        }
    }

    #[test]
    fn ninety_frames_make_three_windows() {
        // first seed whose agent never crosses an edge
        let sim = (0..)
            .map(|s| {
                simulate(&ScenarioSpec {
                    seed: s,
                    ..spec(90, 0.3, 0.5)
                })
                .unwrap()
            })
            .find(|sim| (1..90).all(|t| !sim.wrapped(t, 0)))
            .unwrap();
        let (meta, t) = export_tracklets(&sim, 30, &NoiseFilter::default());
        assert_eq!(meta.frame_count, 90);
        assert_eq!(t.len(), 3);
        assert!(t.iter().all(|t| t.len() == 30));
        assert_eq!(
            t.iter().map(|t| t.birth_frame).collect::<Vec<_>>(),
            vec![0, 30, 60]
        );
        for tr in &t {
            assert!(tr.velocities_consistent());
            for (k, v) in tr.velocities.iter().enumerate() {
                let truth = sim.velocities[tr.birth_frame as usize + k + 1][0];
                assert!((v[0] - truth[0]).abs() < 1e-9 && (v[1] - truth[1]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn short_trajectory_is_filtered() {
        let sim = simulate(&spec(4, 0.0, 1.0)).unwrap();
        let (_, t) = export_tracklets(&sim, 30, &NoiseFilter::default());
        assert!(t.is_empty());
    }

    #[test]
    fn wrap_splits_tracklet() {
        let sim = simulate(&spec(30, 0.0, 30.0)).unwrap();
        let (_, t) = export_tracklets(
            &sim,
            30,
            &NoiseFilter {
                min_len: 1,
                static_std: 0.0,
            },
        );
        assert!(t.len() > 1);
        for tr in &t {
            assert!(tr.velocities.iter().all(|v| v[0].abs() < 40.0));
        }
        assert_eq!(t.iter().map(|t| t.len()).sum::<usize>(), 30);
    }
}
