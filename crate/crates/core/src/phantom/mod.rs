//! Synthetic dynamic multi-coil phantoms standing in for cardiac subjects,
//! the on-disk subject format and an adapter for challenge-layout files.

mod challenge;
mod io;

use std::f64::consts::PI;
use std::fmt;

use ndarray::{Array2, Array3, Array4, Axis};
use num_complex::Complex32;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::kspace::{self, MultiCoilKSpace, SensitivityMaps, C64};
use crate::sampling::{apply_mask, SamplingMask};

pub use challenge::{read_challenge_subject, ChallengeLayout};
pub use io::{read_subject, write_subject, FORMAT_VERSION};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContrastTag {
    Cine,
    T1w,
    T2w,
    Aorta,
    Tagging,
}

impl ContrastTag {
    pub const ALL: [ContrastTag; 5] = [
        ContrastTag::Cine,
        ContrastTag::T1w,
        ContrastTag::T2w,
        ContrastTag::Aorta,
        ContrastTag::Tagging,
    ];

    /// Intensities of (body, myocardium, blood, lung, spine).
    fn palette(self) -> [f64; 5] {
        match self {
            ContrastTag::Cine => [0.35, 0.3, 0.9, 0.05, 0.5],
            ContrastTag::T1w => [0.55, 0.6, 0.25, 0.05, 0.7],
            ContrastTag::T2w => [0.3, 0.35, 0.8, 0.1, 0.2],
            ContrastTag::Aorta => [0.25, 0.3, 1.0, 0.05, 0.4],
            ContrastTag::Tagging => [0.4, 0.7, 0.6, 0.05, 0.45],
        }
    }
}

impl fmt::Display for ContrastTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = serde_json::to_value(self).expect("unit variant");
        f.write_str(s.as_str().expect("string tag"))
    }
}

impl std::str::FromStr for ContrastTag {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        serde_json::from_value(serde_json::Value::String(s.to_string()))
            .map_err(|_| format!("unknown contrast `{s}` (cine, t1w, t2w, aorta, tagging)"))
    }
}

/// Ellipse in normalized coordinates (`y`, `x` in `[-1, 1]`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ellipse {
    pub center: [f64; 2],
    pub axes: [f64; 2],
    #[serde(default)]
    pub angle: f64,
    pub intensity: f64,
    #[serde(default)]
    pub pulsatility: f64,
}

impl Ellipse {
    fn contains(&self, y: f64, x: f64, scale: f64) -> bool {
        let (s, c) = self.angle.sin_cos();
        let (dy, dx) = (y - self.center[0], x - self.center[1]);
        let u = c * dx + s * dy;
        let v = -s * dx + c * dy;
        let (a, b) = (self.axes[1] * scale, self.axes[0] * scale);
        (u / a).powi(2) + (v / b).powi(2) <= 1.0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhantomSpec {
    pub height: usize,
    pub width: usize,
    pub frames: usize,
    pub coils: usize,
    /// Cardiac phase offset in radians.
    pub heart_rate_phase: f64,
    /// Painted in order, later ellipses overwrite earlier ones.
    pub ellipses: Vec<Ellipse>,
    pub noise_std: f64,
    pub seed: u64,
    pub contrast: ContrastTag,
}

impl PhantomSpec {
    /// A torso with lungs, spine and a beating two-chamber heart, jittered by
    /// `seed`, with intensities from the contrast palette.
    pub fn cardiac(height: usize, width: usize, frames: usize, coils: usize, contrast: ContrastTag, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_cafe);
        let mut j = |s: f64| rng.random_range(-s..s);
        let [body, myo, blood, lung, spine] = contrast.palette();
        let heart = [0.05 + j(0.08), -0.1 + j(0.08)];
        let beat = 0.12 + j(0.03);
        let tilt = 0.5 + j(0.3);
        let ellipses = vec![
            Ellipse {
                center: [0.0, 0.0],
                axes: [0.72 + j(0.05), 0.88 + j(0.05)],
                angle: 0.0,
                intensity: body,
                pulsatility: 0.0,
            },
            Ellipse {
                center: [-0.05 + j(0.05), -0.45 + j(0.05)],
                axes: [0.45, 0.25 + j(0.04)],
                angle: j(0.2),
                intensity: lung,
                pulsatility: 0.0,
            },
            Ellipse {
                center: [-0.05 + j(0.05), 0.45 + j(0.05)],
                axes: [0.45, 0.25 + j(0.04)],
                angle: j(0.2),
                intensity: lung,
                pulsatility: 0.0,
            },
            Ellipse {
                center: [0.55, 0.0],
                axes: [0.1, 0.12],
                angle: 0.0,
                intensity: spine,
                pulsatility: 0.0,
            },
            Ellipse {
                center: heart,
                axes: [0.3 + j(0.03), 0.36 + j(0.03)],
                angle: tilt,
                intensity: myo,
                pulsatility: beat * 0.5,
            },
            Ellipse {
                center: [heart[0], heart[1] + 0.08],
                axes: [0.18, 0.16],
                angle: tilt,
                intensity: blood,
                pulsatility: beat,
            },
            Ellipse {
                center: [heart[0] - 0.02, heart[1] - 0.17],
                axes: [0.15, 0.09],
                angle: tilt,
                intensity: blood * 0.9,
                pulsatility: beat,
            },
        ];
        Self {
            height,
            width,
            frames,
            coils,
            heart_rate_phase: j(PI),
            ellipses,
            noise_std: 0.0,
            seed,
            contrast,
        }
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(
            self.height >= 8 && self.width >= 8,
            Validation,
            "phantom size {}x{} must be at least 8x8",
            self.height,
            self.width
        );
        ensure!(self.frames >= 1, Validation, "frames must be >= 1");
        ensure!(self.coils >= 1, Validation, "coils must be >= 1");
        ensure!(
            self.noise_std >= 0.0 && self.noise_std.is_finite(),
            Validation,
            "noise_std must be a finite non-negative number"
        );
        ensure!(self.heart_rate_phase.is_finite(), Validation, "heart_rate_phase must be finite");
        for (i, e) in self.ellipses.iter().enumerate() {
            ensure!(
                (0.0..=1.0).contains(&e.intensity),
                Validation,
                "ellipse {i}: intensity {} outside [0, 1]",
                e.intensity
            );
            ensure!(
                (0.0..0.5).contains(&e.pulsatility),
                Validation,
                "ellipse {i}: pulsatility {} outside [0, 0.5)",
                e.pulsatility
            );
            ensure!(
                e.axes.iter().all(|&a| a > 0.0 && a.is_finite()) && e.angle.is_finite(),
                Validation,
                "ellipse {i}: axes must be positive"
            );
            ensure!(
                e.center.iter().all(|c| (-1.0..=1.0).contains(c)),
                Validation,
                "ellipse {i}: center {:?} lies outside the field of view",
                e.center
            );
        }
        Ok(())
    }

    /// Intensity image of frame `t`.
    pub fn intensity(&self, t: usize) -> Array2<f64> {
        let (h, w) = (self.height, self.width);
        let phase = 2.0 * PI * t as f64 / self.frames as f64 + self.heart_rate_phase;
        let mut img = Array2::zeros((h, w));
        for e in &self.ellipses {
            let scale = 1.0 + e.pulsatility * phase.sin();
            for ((i, jx), v) in img.indexed_iter_mut() {
                let y = (2 * i + 1) as f64 / h as f64 - 1.0;
                let x = (2 * jx + 1) as f64 / w as f64 - 1.0;
                if e.contains(y, x, scale) {
                    *v = e.intensity;
                }
            }
        }
        img
    }
}

/// Fully sampled subject: k-space, its RSS image and what generated it.
#[derive(Clone, Debug, PartialEq)]
pub struct SubjectRecord {
    /// `[frames, coils, H, W]`.
    pub kspace_full: Array4<Complex32>,
    /// `[frames, H, W]`.
    pub image_rss: Array3<f32>,
    pub spec: PhantomSpec,
    pub contrast: ContrastTag,
}

impl SubjectRecord {
    /// Builds a record from k-space, deriving `image_rss` from it.
    pub fn from_kspace(kspace_full: Array4<Complex32>, spec: PhantomSpec) -> Self {
        let (f, _, h, w) = kspace_full.dim();
        let mut image_rss = Array3::zeros((f, h, w));
        for (mut out, frame) in image_rss.outer_iter_mut().zip(kspace_full.outer_iter()) {
            let k = frame.mapv(|v| C64::new(v.re as f64, v.im as f64));
            out.assign(&kspace::rss_image(k.view()).mapv(|v| v as f32));
        }
        let contrast = spec.contrast;
        Self {
            kspace_full,
            image_rss,
            spec,
            contrast,
        }
    }

    /// `(frames, coils, H, W)`.
    pub fn dims(&self) -> (usize, usize, usize, usize) {
        self.kspace_full.dim()
    }

    /// Largest deviation between `image_rss` and the RSS recomputed from
    /// `kspace_full`.
    pub fn consistency_error(&self) -> f64 {
        let fresh = Self::from_kspace(self.kspace_full.clone(), self.spec.clone());
        fresh
            .image_rss
            .iter()
            .zip(&self.image_rss)
            .map(|(a, b)| (a - b).abs() as f64)
            .fold(0.0, f64::max)
    }

    /// Frames `[frame − (T−1)/2, frame + (T−1)/2]`, clamped at the ends.
    pub fn adjacent(&self, frame: usize, adjacent: usize) -> Result<MultiCoilKSpace> {
        let (f, c, h, w) = self.dims();
        ensure!(adjacent % 2 == 1, Validation, "adjacent count {adjacent} must be odd");
        ensure!(frame < f, Validation, "frame {frame} out of range for {f} frames");
        let half = (adjacent - 1) / 2;
        let mut data = Array4::zeros((adjacent, c, h, w));
        for (k, mut slot) in data.outer_iter_mut().enumerate() {
            let src = (frame + k).saturating_sub(half).min(f - 1);
            slot.assign(
                &self
                    .kspace_full
                    .index_axis(Axis(0), src)
                    .mapv(|v| C64::new(v.re as f64, v.im as f64)),
            );
        }
        MultiCoilKSpace::new(data)
    }
}

/// Smooth Gaussian-lobe coil profiles placed around the field of view, with
/// phase referenced to the first coil and RSS-normalized per pixel.
pub fn simulate_coil_maps(h: usize, w: usize, coils: usize, seed: u64) -> Result<SensitivityMaps> {
    ensure!(coils >= 1, Validation, "coils must be >= 1");
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xc011_5eed);
    let sigma = 0.9;
    let mut maps = Array3::<C64>::zeros((coils, h, w));
    for (c, mut map) in maps.outer_iter_mut().enumerate() {
        let theta = 2.0 * PI * c as f64 / coils as f64 + rng.random_range(-0.2..0.2);
        let (py, px) = (1.3 * theta.sin(), 1.3 * theta.cos());
        let phase0 = rng.random_range(-PI..PI);
        let slope = rng.random_range(0.3..0.8);
        for ((i, j), v) in map.indexed_iter_mut() {
            let y = (2 * i + 1) as f64 / h as f64 - 1.0;
            let x = (2 * j + 1) as f64 / w as f64 - 1.0;
            let d2 = (y - py).powi(2) + (x - px).powi(2);
            let mag = (-d2 / (2.0 * sigma * sigma)).exp();
            let phase = phase0 + slope * (y * theta.sin() + x * theta.cos());
            *v = C64::from_polar(mag, phase);
        }
    }
    let reference = maps.index_axis(Axis(0), 0).mapv(|v| C64::from_polar(1.0, -v.arg()));
    for mut map in maps.outer_iter_mut() {
        map *= &reference;
    }
    kspace::rss_normalize(maps, 1e-30)
}

/// Renders every frame, weights it by the coil maps, transforms to k-space
/// and adds complex Gaussian noise of total standard deviation `noise_std`.
pub fn simulate_subject(spec: &PhantomSpec) -> Result<SubjectRecord> {
    spec.validate()?;
    let (h, w, c, f) = (spec.height, spec.width, spec.coils, spec.frames);
    let maps = simulate_coil_maps(h, w, c, spec.seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ 0x0015_015e);
    let noise = Normal::new(0.0, spec.noise_std / 2f64.sqrt()).map_err(|e| Error::Validation(e.to_string()))?;
    let mut kspace_full = Array4::<Complex32>::zeros((f, c, h, w));
    for (t, mut out) in kspace_full.outer_iter_mut().enumerate() {
        let img = spec.intensity(t).mapv(|v| C64::new(v, 0.0));
        let coil_imgs = kspace::coil_expand(img.insert_axis(Axis(0)).view(), &maps)?;
        let k = kspace::fft2c(&coil_imgs.into_dyn())?;
        for (o, v) in out.iter_mut().zip(k.iter()) {
            let (nr, ni) = if spec.noise_std > 0.0 {
                (noise.sample(&mut rng), noise.sample(&mut rng))
            } else {
                (0.0, 0.0)
            };
            *o = Complex32::new((v.re + nr) as f32, (v.im + ni) as f32);
        }
    }
    Ok(SubjectRecord::from_kspace(kspace_full, spec.clone()))
}

/// `(k0, kG)` for one frame: the clamped adjacent stack and its masked copy.
pub fn make_training_example(
    rec: &SubjectRecord,
    frame: usize,
    mask: &SamplingMask,
    adjacent: usize,
) -> Result<(MultiCoilKSpace, MultiCoilKSpace)> {
    let kg = rec.adjacent(frame, adjacent)?;
    let k0 = apply_mask(&kg, mask)?;
    Ok((k0, kg))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cardiac_spec_is_valid_for_every_contrast() {
        for tag in ContrastTag::ALL {
            PhantomSpec::cardiac(32, 32, 4, 2, tag, 1).validate().unwrap();
            assert_eq!(tag.to_string().parse::<ContrastTag>().unwrap(), tag);
        }
    }

    #[test]
    fn centre_outside_fov_is_rejected() {
        let mut spec = PhantomSpec::cardiac(16, 16, 2, 1, ContrastTag::Cine, 0);
        spec.ellipses[0].center = [1.5, 0.0];
        assert!(spec.validate().is_err());
    }

    #[test]
    fn single_coil_map_is_unity() {
        let m = simulate_coil_maps(16, 16, 1, 4).unwrap();
        assert!(m.data().iter().all(|v| (v.re - 1.0).abs() < 1e-12 && v.im.abs() < 1e-12));
    }
}
