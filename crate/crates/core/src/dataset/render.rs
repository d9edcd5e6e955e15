//! Analytic renderers for the three modalities.
//!
//! Each renderer is a pure function of an [`ObjectSpec`] and a per-sample
//! parameter record. Class identity enters every modality: hue and spatial
//! frequencies in the images, modal frequencies and damping in the audio.

use std::f64::consts::{PI, TAU};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Per-object identity consumed by all three renderers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectSpec {
    pub class_id: usize,
    /// Strictly increasing modal frequencies in Hz.
    pub modal_frequencies: Vec<f64>,
    /// Decay rate (1/s) for each mode.
    pub damping: Vec<f64>,
    pub texture_seed: u64,
    /// `[u frequency, v frequency, radial frequency, hue]`.
    pub shape_params: [f64; 4],
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VisualParams {
    pub camera: [f64; 3],
    pub light: [f64; 3],
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AudioParams {
    pub contact_point: [f64; 3],
    pub force: [f64; 3],
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TactileParams {
    pub contact_point: [f64; 3],
    pub theta: f64,
    pub phi: f64,
    pub displacement: f64,
}

/// Output geometry shared by every sample of a dataset.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RenderShape {
    pub height: usize,
    pub width: usize,
    pub audio_len: usize,
    pub sample_rate: u32,
}

impl Default for RenderShape {
    fn default() -> Self {
        Self {
            height: 64,
            width: 64,
            audio_len: 4096,
            sample_rate: 8192,
        }
    }
}

const FREQ_RANGE: (f64, f64) = (30.0, 1500.0);
const DAMPING_RANGE: (f64, f64) = (3.0, 12.0);
/// Minimum mean relative gap between the frequency sets of two classes.
const MIN_CLASS_GAP: f64 = 0.05;
const AMBIENT: f64 = 0.35;

pub fn generate_object_bank(num_classes: usize, seed: u64) -> Result<Vec<ObjectSpec>> {
    if num_classes < 2 {
        return Err(invalid(format!("num_classes must be >= 2, got {num_classes}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6f62_6a65_6374_5f62);
    let mut bank: Vec<ObjectSpec> = Vec::with_capacity(num_classes);
    let (lo, hi) = (FREQ_RANGE.0.ln(), FREQ_RANGE.1.ln());
    for class_id in 0..num_classes {
        let mut attempts = 0;
        let freqs = loop {
            attempts += 1;
            let n = rng.gen_range(3..=5);
            let mut f: Vec<f64> = (0..n).map(|_| rng.gen_range(lo..hi).exp()).collect();
            f.sort_by(f64::total_cmp);
            let spaced = f.windows(2).all(|w| w[1] > w[0] * 1.08);
            let distinct = bank
                .iter()
                .all(|other| frequency_set_gap(&f, &other.modal_frequencies) >= MIN_CLASS_GAP);
            if (spaced && distinct) || attempts > 10_000 {
                break f;
            }
        };
        let damping = freqs
            .iter()
            .map(|_| rng.gen_range(DAMPING_RANGE.0..DAMPING_RANGE.1))
            .collect();
        let hue = (class_id as f64 + rng.gen_range(0.0..0.35)) / num_classes as f64;
        let shape_params = [
            rng.gen_range(1.5..6.0),
            rng.gen_range(1.5..6.0),
            rng.gen_range(1.0..4.0),
            hue,
        ];
        bank.push(ObjectSpec {
            class_id,
            modal_frequencies: freqs,
            damping,
            texture_seed: rng.gen(),
            shape_params,
        });
    }
    Ok(bank)
}

/// Mean over `a` of the relative distance to the nearest frequency in `b`.
fn frequency_set_gap(a: &[f64], b: &[f64]) -> f64 {
    let total: f64 = a
        .iter()
        .map(|&x| {
            b.iter()
                .map(|&y| (x - y).abs() / x.min(y))
                .fold(f64::INFINITY, f64::min)
        })
        .sum();
    total / a.len() as f64
}

fn all_finite(v: &[f64]) -> bool {
    v.iter().all(|x| x.is_finite())
}

fn norm3(v: [f64; 3]) -> f64 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

/// Three phases in [0, 1) derived from the texture seed.
fn texture_phases(seed: u64) -> [f64; 3] {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    [rng.gen(), rng.gen(), rng.gen()]
}

fn hsv_to_rgb(h: f64, s: f64, v: f64) -> [f64; 3] {
    let h6 = h.rem_euclid(1.0) * 6.0;
    let i = h6.floor();
    let f = h6 - i;
    let (p, q, t) = (v * (1.0 - s), v * (1.0 - s * f), v * (1.0 - s * (1.0 - f)));
    match i as u8 {
        0 => [v, t, p],
        1 => [q, v, p],
        2 => [p, v, t],
        3 => [p, q, v],
        4 => [t, p, v],
        _ => [v, p, q],
    }
}

/// Renders an RGB view of the object, `[H, W, 3]` row-major, values in [0, 1].
pub fn render_visual(spec: &ObjectSpec, params: &VisualParams, shape: RenderShape) -> Result<Vec<f32>> {
    if !all_finite(&params.camera) || !all_finite(&params.light) {
        return Err(invalid("visual params must be finite"));
    }
    let radius = norm3(params.camera);
    if radius == 0.0 {
        return Err(invalid("camera position must have nonzero norm"));
    }
    let [fu, fv, fr, hue] = spec.shape_params;
    let phase = texture_phases(spec.texture_seed);
    let azimuth = params.camera[1].atan2(params.camera[0]);
    let elevation = (params.camera[2] / radius).clamp(-1.0, 1.0).asin();
    let (sin_az, cos_az) = azimuth.sin_cos();
    let zoom = radius / 3.0;
    let tilt = 0.6 + 0.4 * elevation.cos();
    let light_norm = norm3(params.light);
    let light_dir = if light_norm > 0.0 {
        params.light.map(|x| x / light_norm)
    } else {
        [0.0; 3]
    };
    let light_gain = (light_norm / 3.0).min(1.0);

    let (h, w) = (shape.height, shape.width);
    let mut out = Vec::with_capacity(h * w * 3);
    for row in 0..h {
        let v = 2.0 * (row as f64 + 0.5) / h as f64 - 1.0;
        for col in 0..w {
            let u = 2.0 * (col as f64 + 0.5) / w as f64 - 1.0;
            // viewpoint warp
            let ur = zoom * (cos_az * u - sin_az * v);
            let vr = zoom * (sin_az * u + cos_az * v) / tilt + 0.3 * elevation;
            let pattern = 0.5
                + (TAU * (fu * ur + phase[0])).sin() / 6.0
                + (TAU * (fv * vr + phase[1])).cos() / 6.0
                + (TAU * (fr * (ur * ur + vr * vr).sqrt() + phase[2])).sin() / 6.0;
            let albedo = hsv_to_rgb(hue, 0.8, 0.4 + 0.6 * pattern);
            let n_len = (u * u + v * v + 2.25).sqrt();
            let n = [u / n_len, v / n_len, 1.5 / n_len];
            let lambert = (n[0] * light_dir[0] + n[1] * light_dir[1] + n[2] * light_dir[2]).max(0.0);
            let intensity = AMBIENT + (1.0 - AMBIENT) * light_gain * lambert;
            for c in albedo {
                out.push((c * intensity).clamp(0.0, 1.0) as f32);
            }
        }
    }
    Ok(out)
}

/// Smooth position-dependent gain of mode `k` in [0.6, 1.0].
fn contact_gain(k: usize, point: [f64; 3]) -> f64 {
    let kf = (k + 1) as f64;
    let axis_len = (1.0 + kf * kf + kf.powi(4)).sqrt();
    let proj = (point[0] + kf * point[1] + kf * kf * point[2]) / axis_len;
    0.6 + 0.4 * (PI * kf * proj).sin().powi(2)
}

/// Renders an impact response: a sum of exponentially damped sinusoids
/// scaled linearly by the force magnitude.
pub fn render_audio(spec: &ObjectSpec, params: &AudioParams, shape: RenderShape) -> Result<Vec<f32>> {
    if !all_finite(&params.force) {
        return Err(invalid("force must be finite"));
    }
    if !all_finite(&params.contact_point) {
        return Err(invalid("contact point must be finite"));
    }
    let magnitude = norm3(params.force);
    let gains: Vec<f64> = (0..spec.modal_frequencies.len())
        .map(|k| contact_gain(k, params.contact_point))
        .collect();
    let dt = 1.0 / shape.sample_rate as f64;
    let out = (0..shape.audio_len)
        .map(|i| {
            let t = i as f64 * dt;
            let modes: f64 = spec
                .modal_frequencies
                .iter()
                .zip(&spec.damping)
                .zip(&gains)
                .map(|((&f, &damp), &g)| g * (-damp * t).exp() * (TAU * f * t).sin())
                .sum();
            (magnitude * modes) as f32
        })
        .collect();
    Ok(out)
}

fn height_map(spec: &ObjectSpec, phase: &[f64; 3], x: f64, y: f64) -> f64 {
    let [fu, fv, fr, _] = spec.shape_params;
    (TAU * (fu * x + phase[0])).sin() * (TAU * (fv * y + phase[1])).cos()
        + 0.5 * (TAU * (0.5 * fr * (x + y) + phase[2])).sin()
}

/// Renders a gel-sensor contact image. Displacement zero gives a flat gel.
pub fn render_tactile(spec: &ObjectSpec, params: &TactileParams, shape: RenderShape) -> Result<Vec<f32>> {
    if !(params.displacement >= 0.0) {
        return Err(invalid(format!(
            "displacement must be >= 0, got {}",
            params.displacement
        )));
    }
    if !all_finite(&params.contact_point) || !params.theta.is_finite() || !params.phi.is_finite() {
        return Err(invalid("tactile params must be finite"));
    }
    let (h, w) = (shape.height, shape.width);
    if params.displacement == 0.0 {
        return Ok(vec![0.5; h * w * 3]);
    }
    let phase = texture_phases(spec.texture_seed);
    let hue = spec.shape_params[3];
    let tint: [f64; 3] = std::array::from_fn(|c| (TAU * (hue + c as f64 / 3.0)).cos());
    let [px, py, pz] = params.contact_point;
    let offset_x = 2.0 * py.atan2(px) / PI;
    let offset_y = 2.0 * pz.clamp(-1.0, 1.0).asin() / (PI / 2.0);
    let (sin_t, cos_t) = params.theta.sin_cos();
    let shear = 0.5 * params.phi.cos();
    let contrast = 0.3 * params.displacement.tanh();

    let mut out = Vec::with_capacity(h * w * 3);
    for row in 0..h {
        let v = 2.0 * (row as f64 + 0.5) / h as f64 - 1.0;
        for col in 0..w {
            let u = 2.0 * (col as f64 + 0.5) / w as f64 - 1.0;
            let ur = cos_t * u - sin_t * v;
            let vr = sin_t * u + cos_t * v;
            let x = offset_x + 0.5 * (ur + shear * vr);
            let y = offset_y + 0.5 * vr;
            let height = height_map(spec, &phase, x, y) / 1.5;
            for t in tint {
                out.push((0.5 + contrast * height * t).clamp(0.0, 1.0) as f32);
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> RenderShape {
        RenderShape {
            height: 16,
            width: 16,
            audio_len: 4096,
            sample_rate: 8192,
        }
    }

    fn vis() -> VisualParams {
        VisualParams {
            camera: [1.0, 2.0, 1.5],
            light: [0.5, 0.5, 2.0],
        }
    }

    fn mean(v: &[f32]) -> f64 {
        v.iter().map(|&x| x as f64).sum::<f64>() / v.len() as f64
    }

    fn std(v: &[f32]) -> f64 {
        let m = mean(v);
        (v.iter().map(|&x| (x as f64 - m).powi(2)).sum::<f64>() / v.len() as f64).sqrt()
    }

    #[test]
    fn bank_size_and_ids() {
        let bank = generate_object_bank(20, 0).unwrap();
        assert_eq!(bank.len(), 20);
        for (i, spec) in bank.iter().enumerate() {
            assert_eq!(spec.class_id, i);
            assert!((3..=5).contains(&spec.modal_frequencies.len()));
            assert!(spec.modal_frequencies.windows(2).all(|w| w[1] > w[0]));
            assert!(spec.damping.iter().all(|&d| d > 0.0));
        }
        for a in 0..bank.len() {
            for b in a + 1..bank.len() {
                assert!(
                    bank[a].modal_frequencies != bank[b].modal_frequencies
                        || bank[a].shape_params != bank[b].shape_params
                );
            }
        }
    }

    #[test]
    fn bank_is_deterministic_and_seeded() {
        assert_eq!(generate_object_bank(2, 7).unwrap(), generate_object_bank(2, 7).unwrap());
        assert_ne!(generate_object_bank(5, 1).unwrap(), generate_object_bank(5, 2).unwrap());
        assert!(generate_object_bank(1, 0).is_err());
    }

    #[test]
    fn visual_is_deterministic_and_in_range() {
        let spec = &generate_object_bank(3, 4).unwrap()[1];
        let a = render_visual(spec, &vis(), small()).unwrap();
        let b = render_visual(spec, &vis(), small()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 16 * 16 * 3);
        assert!(a.iter().all(|&x| (0.0..=1.0).contains(&x)));
    }

    #[test]
    fn unlit_view_is_darker() {
        let spec = &generate_object_bank(3, 4).unwrap()[0];
        let lit = render_visual(spec, &vis(), small()).unwrap();
        let dark = render_visual(
            spec,
            &VisualParams {
                light: [0.0; 3],
                ..vis()
            },
            small(),
        )
        .unwrap();
        assert!(mean(&dark) < mean(&lit));
    }

    #[test]
    fn camera_moves_change_the_view() {
        let spec = &generate_object_bank(3, 4).unwrap()[2];
        let base = render_visual(spec, &vis(), small()).unwrap();
        for axis in 0..3 {
            let mut p = vis();
            p.camera[axis] += 0.1;
            assert_ne!(render_visual(spec, &p, small()).unwrap(), base, "axis {axis}");
        }
    }

    #[test]
    fn shapes_differ_between_objects() {
        let bank = generate_object_bank(3, 4).unwrap();
        let a = render_visual(&bank[0], &vis(), small()).unwrap();
        let b = render_visual(&bank[1], &vis(), small()).unwrap();
        assert_ne!(a, b);
    }

    #[test]
    fn visual_rejects_non_finite() {
        let spec = &generate_object_bank(2, 0).unwrap()[0];
        let p = VisualParams {
            camera: [f64::NAN, 1.0, 1.0],
            light: [0.0; 3],
        };
        assert!(render_visual(spec, &p, small()).is_err());
        let p = VisualParams {
            camera: [0.0; 3],
            light: [0.0; 3],
        };
        assert!(render_visual(spec, &p, small()).is_err());
    }

    #[test]
    fn zero_force_is_silent() {
        let spec = &generate_object_bank(2, 0).unwrap()[0];
        let p = AudioParams {
            contact_point: [0.0, 0.0, 1.0],
            force: [0.0; 3],
        };
        assert!(render_audio(spec, &p, small()).unwrap().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn doubling_force_doubles_signal() {
        let spec = &generate_object_bank(2, 0).unwrap()[1];
        let p = AudioParams {
            contact_point: [0.6, 0.0, 0.8],
            force: [0.3, -0.7, 0.2],
        };
        let q = AudioParams {
            force: p.force.map(|f| 2.0 * f),
            ..p
        };
        let a = render_audio(spec, &p, small()).unwrap();
        let b = render_audio(spec, &q, small()).unwrap();
        assert!(a.iter().zip(&b).all(|(x, y)| 2.0 * x == *y));
        let bad = AudioParams {
            force: [f64::INFINITY, 0.0, 0.0],
            ..p
        };
        assert!(render_audio(spec, &bad, small()).is_err());
    }

    #[test]
    fn flat_gel_without_contact() {
        let spec = &generate_object_bank(2, 0).unwrap()[0];
        let p = TactileParams {
            contact_point: [1.0, 0.0, 0.0],
            theta: 0.4,
            phi: 1.0,
            displacement: 0.0,
        };
        let img = render_tactile(spec, &p, small()).unwrap();
        assert!(img.iter().all(|&x| x == img[0]));
        let neg = TactileParams {
            displacement: -0.1,
            ..p
        };
        assert!(render_tactile(spec, &neg, small()).is_err());
    }

    #[test]
    fn deeper_press_has_more_contrast() {
        let spec = &generate_object_bank(2, 0).unwrap()[1];
        let p = TactileParams {
            contact_point: [0.0, 0.6, 0.8],
            theta: 1.2,
            phi: 0.7,
            displacement: 0.5,
        };
        let shallow = render_tactile(spec, &p, small()).unwrap();
        let deep = render_tactile(spec, &TactileParams { displacement: 1.0, ..p }, small()).unwrap();
        assert_eq!(shallow, render_tactile(spec, &p, small()).unwrap());
        assert!(std(&deep) > std(&shallow));
    }
}
