//! Synthetic top-down highway clips: a scrolling textured road with dashed
//! lane markings and one rectangular vehicle followed by the camera. Lane
//! changes follow a smoothstep lateral profile whose midpoint, the event
//! frame, puts the vehicle's bottom-centre exactly on the crossed marking.
//! Turn indicators blink from shortly before the manoeuvre until it ends.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{write_annotations, ManeuverClass, VehicleTrack, DEFAULT_FRAME_RATE};
use crate::error::{Error, Result};
use crate::imageio::write_image;
use crate::roi::Contour;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub width: usize,
    pub height: usize,
    pub lane_width: f64,
    /// Duration of the lateral move, in frames.
    pub maneuver_frames: usize,
    /// Frames of indicator activity before the lateral move starts.
    pub indicator_lead: usize,
    /// Blink period in frames; the light is on for the first 60% of each
    /// period, phase-locked so that it is on at the event frame.
    pub blink_period: usize,
    /// Ego speed range in pixels per frame (background scroll).
    pub min_speed: f64,
    pub max_speed: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            width: 192,
            height: 144,
            lane_width: 48.0,
            maneuver_frames: 30,
            indicator_lead: 10,
            blink_period: 10,
            min_speed: 2.0,
            max_speed: 4.0,
        }
    }
}

/// Rendered frames (`3×H×W`, values in `[0,1]`, index = frame number) and
/// the vehicle's track.
#[derive(Clone, Debug)]
pub struct SyntheticClip {
    pub frames: Vec<Tensor<f32>>,
    pub track: VehicleTrack,
    /// x of the crossed marking, for lane-change scenarios.
    pub marking_x: Option<f64>,
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn lattice(seed: u64, ix: i64, iy: i64) -> f32 {
    let h = splitmix(seed ^ splitmix(ix as u64 ^ splitmix(iy as u64)));
    (h >> 40) as f32 / (1u64 << 24) as f32
}

/// Smooth value noise with 4-pixel cells.
fn value_noise(seed: u64, x: f64, y: f64) -> f32 {
    let (fx, fy) = (x / 4.0, y / 4.0);
    let (ix, iy) = (fx.floor(), fy.floor());
    let s = |t: f64| (t * t * (3.0 - 2.0 * t)) as f32;
    let (tx, ty) = (s(fx - ix), s(fy - iy));
    let (ix, iy) = (ix as i64, iy as i64);
    let a = lattice(seed, ix, iy) * (1.0 - tx) + lattice(seed, ix + 1, iy) * tx;
    let b = lattice(seed, ix, iy + 1) * (1.0 - tx) + lattice(seed, ix + 1, iy + 1) * tx;
    a * (1.0 - ty) + b * ty
}

/// Length of `[a, b)` covered by `[lo, hi)`.
fn overlap(a: f64, b: f64, lo: f64, hi: f64) -> f64 {
    (b.min(hi) - a.max(lo)).max(0.0)
}

/// Measure of the periodic dash set `∪ [kP, kP + L)` within `[0, a)`
/// (signed for negative `a`).
fn dash_measure(a: f64, period: f64, len: f64) -> f64 {
    (a / period).floor() * len + (a.rem_euclid(period)).min(len)
}

fn smoothstep(s: f64) -> f64 {
    let s = s.clamp(0.0, 1.0);
    s * s * (3.0 - 2.0 * s)
}

struct Layer {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
    rgb: [f32; 3],
}

pub fn synthesize_clip(scenario: ManeuverClass, length: usize, seed: u64, cfg: &SynthConfig) -> Result<SyntheticClip> {
    if length < 60 {
        return Err(Error::Config(format!("synthetic clips need at least 60 frames, got {length}")));
    }
    if !(cfg.min_speed <= cfg.max_speed && cfg.min_speed >= 0.0) || cfg.blink_period < 2 {
        return Err(Error::Config("invalid synthetic clip configuration".into()));
    }
    let (w, h) = (cfg.width, cfg.height);
    let lw = cfg.lane_width;
    let centre = w as f64 / 2.0;
    if centre - 1.5 * lw < 0.0 || (h as f64) < 96.0 {
        return Err(Error::Config(format!("frame {w}x{h} too small for three {lw}px lanes")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lanes = [centre - lw, centre, centre + lw];
    let markings = [centre - lw / 2.0, centre + lw / 2.0];
    let edges = [centre - 1.5 * lw, centre + 1.5 * lw];

    let start_lane = match scenario {
        ManeuverClass::Nlc => rng.random_range(0..3),
        ManeuverClass::Llc => rng.random_range(1..3),
        ManeuverClass::Rlc => rng.random_range(0..2),
    };
    let target_lane = match scenario {
        ManeuverClass::Nlc => start_lane,
        ManeuverClass::Llc => start_lane - 1,
        ManeuverClass::Rlc => start_lane + 1,
    };
    let (x_start, x_target) = (lanes[start_lane], lanes[target_lane]);
    let event = (scenario != ManeuverClass::Nlc).then(|| rng.random_range(length - 35..=length - 12));
    let vw: f64 = rng.random_range(16.0..22.0);
    let vh: f64 = rng.random_range(24.0..32.0);
    let yc: f64 = rng.random_range(0.55..0.7) * h as f64;
    let speed: f64 = rng.random_range(cfg.min_speed..=cfg.max_speed);
    let sway_phase: f64 = rng.random_range(0.0..std::f64::consts::TAU);
    let body: [f32; 3] = {
        let hue = rng.random_range(0..4);
        let v: f32 = rng.random_range(0.55..0.9);
        match hue {
            0 => [v, 0.15, 0.15],
            1 => [0.15, 0.25, v],
            2 => [v, v, v],
            _ => [0.2, v * 0.8, 0.3],
        }
    };
    let gain: f32 = rng.random_range(0.85..1.15);
    let tex_seed = rng.random::<u64>();

    let d = cfg.maneuver_frames as f64;
    let lateral = |t: f64| -> f64 {
        match event {
            Some(e) => x_start + (x_target - x_start) * smoothstep((t - (e as f64 - d / 2.0)) / d),
            None => x_start + 0.5 * (std::f64::consts::TAU * t / 37.0 + sway_phase).sin(),
        }
    };
    let vertical = |t: f64| yc + 0.5 * (std::f64::consts::TAU * t / 53.0 + sway_phase).cos();
    let indicator_on = |t: usize| -> bool {
        let Some(e) = event else { return false };
        let half = cfg.maneuver_frames / 2;
        let on_from = e.saturating_sub(half + cfg.indicator_lead);
        if t < on_from || t > e + half {
            return false;
        }
        let p = cfg.blink_period as i64;
        ((t as i64 - e as i64).rem_euclid(p) as f64) < 0.6 * p as f64
    };

    let n = w * h;
    let mut frames = Vec::with_capacity(length);
    let mut contours = Vec::with_capacity(length);
    for t in 0..length {
        let off = speed * t as f64;
        let xc = lateral(t as f64);
        let yv = vertical(t as f64);
        let (bx0, bx1, by0, by1) = (xc - vw / 2.0, xc + vw / 2.0, yv - vh / 2.0, yv + vh / 2.0);
        contours.push(Contour::rectangle(t, bx0, by0, bx1, by1)?);

        let mut layers = vec![
            Layer {
                x0: bx0,
                x1: bx1,
                y0: by0,
                y1: by1,
                rgb: body,
            },
            Layer {
                x0: bx0 + 2.0,
                x1: bx1 - 2.0,
                y0: by1 - 9.0,
                y1: by1 - 5.0,
                rgb: [0.12, 0.12, 0.15],
            },
            Layer {
                x0: bx0 + 2.5,
                x1: bx1 - 2.5,
                y0: by0 + 5.0,
                y1: by0 + 9.0,
                rgb: [0.18, 0.18, 0.22],
            },
            Layer {
                x0: bx0 + 1.0,
                x1: bx0 + 4.0,
                y0: by1 - 2.0,
                y1: by1,
                rgb: [0.8, 0.05, 0.05],
            },
            Layer {
                x0: bx1 - 4.0,
                x1: bx1 - 1.0,
                y0: by1 - 2.0,
                y1: by1,
                rgb: [0.8, 0.05, 0.05],
            },
        ];
        if indicator_on(t) {
            let ix = if scenario == ManeuverClass::Llc { bx0 - 1.0 } else { bx1 - 2.0 };
            for (y0, y1) in [(by1 - 3.0, by1), (by0, by0 + 3.0)] {
                layers.push(Layer {
                    x0: ix,
                    x1: ix + 3.0,
                    y0,
                    y1,
                    rgb: [1.0, 0.6, 0.0],
                });
            }
        }

        let mut img = vec![0.0f32; 3 * n];
        for y in 0..h {
            let (fy0, fy1) = (y as f64, y as f64 + 1.0);
            let wy = y as f64 - off;
            let dash = dash_measure(wy + 1.0, 20.0, 10.0) - dash_measure(wy, 20.0, 10.0);
            for x in 0..w {
                let (fx0, fx1) = (x as f64, x as f64 + 1.0);
                let nz = value_noise(tex_seed, x as f64 + 0.5, wy + 0.5);
                let xm = x as f64 + 0.5;
                let mut px = if xm >= edges[0] && xm < edges[1] {
                    let g = 0.32 + 0.14 * (nz - 0.5);
                    [g, g, g * 1.03]
                } else {
                    [0.22 + 0.1 * nz, 0.42 + 0.12 * nz, 0.18 + 0.06 * nz]
                };
                let mut paint = |cov: f64, rgb: [f32; 3]| {
                    if cov > 0.0 {
                        let a = cov.min(1.0) as f32;
                        for c in 0..3 {
                            px[c] = px[c] * (1.0 - a) + rgb[c] * a;
                        }
                    }
                };
                for &m in &markings {
                    paint(overlap(fx0, fx1, m - 1.0, m + 1.0) * dash, [0.9, 0.9, 0.88]);
                }
                for &e in &edges {
                    paint(overlap(fx0, fx1, e - 1.0, e + 1.0), [0.9, 0.9, 0.88]);
                }
                for l in &layers {
                    paint(overlap(fx0, fx1, l.x0, l.x1) * overlap(fy0, fy1, l.y0, l.y1), l.rgb);
                }
                let i = y * w + x;
                for c in 0..3 {
                    img[c * n + i] = (px[c] * gain).clamp(0.0, 1.0);
                }
            }
        }
        frames.push(Tensor::new(vec![3, h, w], img)?);
    }

    let events = event.map(|e| vec![(e, scenario)]).unwrap_or_default();
    let marking_x = event.map(|_| (x_start + x_target) / 2.0);
    let track = VehicleTrack::new(seed, format!("synth-{scenario}-{seed}"), DEFAULT_FRAME_RATE, contours, events)?;
    Ok(SyntheticClip {
        frames,
        track,
        marking_x,
    })
}

/// Writes `frame_00000.png`, … plus annotation CSVs into `dir`.
pub fn write_clip(dir: &Path, clip: &SyntheticClip) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    for (i, f) in clip.frames.iter().enumerate() {
        write_image(&dir.join(super::materialize::frame_file_name(i)), f)?;
    }
    write_annotations(dir, std::slice::from_ref(&clip.track))
}
