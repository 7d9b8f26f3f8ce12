//! Undersampling masks: equispaced ("uniform"), Gaussian column density and
//! golden-angle pseudo-radial, each with a fully sampled ACS block.

use std::f64::consts::PI;
use std::fmt;

use ndarray::{Array2, Array4, Axis, Zip};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};
use crate::kspace::{acs_window, MultiCoilKSpace, C64};

/// Radial spoke increment, 180° divided by the golden ratio.
pub const GOLDEN_ANGLE: f64 = PI * 0.618_033_988_749_894_9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Trajectory {
    Uniform,
    Gaussian,
    PseudoRadial,
}

impl Trajectory {
    pub const ALL: [Trajectory; 3] = [Trajectory::Uniform, Trajectory::Gaussian, Trajectory::PseudoRadial];

    pub fn is_cartesian(self) -> bool {
        self != Trajectory::PseudoRadial
    }
}

impl fmt::Display for Trajectory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Trajectory::Uniform => "uniform",
            Trajectory::Gaussian => "gaussian",
            Trajectory::PseudoRadial => "pseudo_radial",
        })
    }
}

impl std::str::FromStr for Trajectory {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "uniform" => Ok(Trajectory::Uniform),
            "gaussian" => Ok(Trajectory::Gaussian),
            "pseudo_radial" | "radial" => Ok(Trajectory::PseudoRadial),
            _ => Err(format!("unknown trajectory `{s}` (uniform, gaussian, pseudo_radial)")),
        }
    }
}

/// Binary `[H, W]` sampling pattern plus how it was made.
#[derive(Clone, Debug, PartialEq)]
pub struct SamplingMask {
    data: Array2<u8>,
    pub trajectory: Trajectory,
    pub acceleration: f64,
    pub acs_lines: usize,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaskMeta {
    pub trajectory: Trajectory,
    pub acceleration: f64,
    pub acs_lines: usize,
    pub seed: u64,
    pub height: usize,
    pub width: usize,
    pub sampled: usize,
    pub achieved_acceleration: f64,
}

impl SamplingMask {
    pub fn data(&self) -> &Array2<u8> {
        &self.data
    }

    pub fn dims(&self) -> (usize, usize) {
        self.data.dim()
    }

    pub fn sampled(&self) -> usize {
        self.data.iter().filter(|&&v| v != 0).count()
    }

    /// `H·W / sampled`; infinite for an empty mask.
    pub fn achieved_acceleration(&self) -> f64 {
        self.data.len() as f64 / self.sampled() as f64
    }

    pub fn to_f64(&self) -> Array2<f64> {
        self.data.mapv(f64::from)
    }

    pub fn is_column_constant(&self) -> bool {
        self.data
            .axis_iter(Axis(1))
            .all(|col| col.iter().all(|&v| v == col[0]))
    }

    /// Sampled column indices of a Cartesian mask.
    pub fn sampled_columns(&self) -> Vec<usize> {
        (0..self.data.ncols()).filter(|&j| self.data[[0, j]] != 0).collect()
    }

    pub fn meta(&self) -> MaskMeta {
        let (height, width) = self.dims();
        MaskMeta {
            trajectory: self.trajectory,
            acceleration: self.acceleration,
            acs_lines: self.acs_lines,
            seed: self.seed,
            height,
            width,
            sampled: self.sampled(),
            achieved_acceleration: self.achieved_acceleration(),
        }
    }

    /// A mask with every entry sampled.
    pub fn full(h: usize, w: usize) -> Self {
        Self {
            data: Array2::ones((h, w)),
            trajectory: Trajectory::Uniform,
            acceleration: 1.0,
            acs_lines: w,
            seed: 0,
        }
    }
}

fn check_args(h: usize, w: usize, acceleration: f64, acs_lines: usize) -> Result<()> {
    ensure!(h > 0 && w > 0, Validation, "mask size {h}x{w} must be positive");
    ensure!(
        acceleration.is_finite() && acceleration >= 1.0,
        Validation,
        "acceleration must be a finite number >= 1, got {acceleration}"
    );
    ensure!(acs_lines < w, Validation, "acs_lines {acs_lines} must be smaller than width {w}");
    Ok(())
}

fn set_acs(data: &mut Array2<u8>, acs_lines: usize) {
    let w = data.ncols();
    for j in acs_window(w, acs_lines) {
        data.column_mut(j).fill(1);
    }
}

fn from_columns(h: usize, w: usize, cols: impl IntoIterator<Item = usize>, acs_lines: usize) -> Array2<u8> {
    let mut data = Array2::zeros((h, w));
    for j in cols {
        data.column_mut(j).fill(1);
    }
    set_acs(&mut data, acs_lines);
    data
}

/// Every `ceil(acceleration)`-th column from `offset`, plus the ACS block.
pub fn make_uniform_mask(h: usize, w: usize, acceleration: f64, acs_lines: usize, offset: usize) -> Result<SamplingMask> {
    check_args(h, w, acceleration, acs_lines)?;
    let step = acceleration.ceil() as usize;
    let data = from_columns(h, w, (offset % step..w).step_by(step), acs_lines);
    Ok(SamplingMask {
        data,
        trajectory: Trajectory::Uniform,
        acceleration,
        acs_lines,
        seed: offset as u64,
    })
}

/// Uniform masks whose offset advances by one column per frame, for
/// experiments with frame-varying sampling.
pub fn make_uniform_frame_masks(
    h: usize,
    w: usize,
    acceleration: f64,
    acs_lines: usize,
    frames: usize,
) -> Result<Vec<SamplingMask>> {
    (0..frames)
        .map(|t| make_uniform_mask(h, w, acceleration, acs_lines, t))
        .collect()
}

/// ACS block plus `round(W/acceleration) − acs_lines` further columns drawn
/// without replacement with Gaussian density (σ = W/6) about the centre.
pub fn make_gaussian_mask(h: usize, w: usize, acceleration: f64, acs_lines: usize, seed: u64) -> Result<SamplingMask> {
    check_args(h, w, acceleration, acs_lines)?;
    let acs = acs_window(w, acs_lines);
    let candidates: Vec<usize> = (0..w).filter(|j| !acs.contains(j)).collect();
    let budget = (w as f64 / acceleration).round() as usize;
    let extra = budget.saturating_sub(acs_lines);
    ensure!(
        extra <= candidates.len(),
        Validation,
        "gaussian mask needs {extra} columns beyond the ACS block but only {} exist",
        candidates.len()
    );
    let centre = (w / 2) as f64;
    let sigma = w as f64 / 6.0;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let weight = |i: usize| {
        let d = candidates[i] as f64 - centre;
        (-d * d / (2.0 * sigma * sigma)).exp()
    };
    let picked = rand::seq::index::sample_weighted(&mut rng, candidates.len(), weight, extra)
        .expect("gaussian weights are positive and finite");
    let data = from_columns(h, w, picked.into_iter().map(|i| candidates[i]), acs_lines);
    Ok(SamplingMask {
        data,
        trajectory: Trajectory::Gaussian,
        acceleration,
        acs_lines,
        seed,
    })
}

/// Pixels of full-diameter spokes through `(h/2, w/2)` at the given angles
/// (radians, 0 = along the width axis). Each spoke steps one pixel along its
/// major axis and rounds the minor coordinate half away from zero, so spokes
/// are point-symmetric about the centre.
pub fn rasterize_spokes(h: usize, w: usize, angles: &[f64]) -> Array2<u8> {
    let mut data = Array2::zeros((h, w));
    let (cy, cx) = ((h / 2) as i64, (w / 2) as i64);
    let reach = h.max(w) as i64;
    for &theta in angles {
        let (s, c) = theta.sin_cos();
        for k in -reach..=reach {
            let (y, x) = if c.abs() >= s.abs() {
                (cy + (k as f64 * s / c).round() as i64, cx + k)
            } else {
                (cy + k, cx + (k as f64 * c / s).round() as i64)
            };
            if (0..h as i64).contains(&y) && (0..w as i64).contains(&x) {
                data[[y as usize, x as usize]] = 1;
            }
        }
    }
    data
}

/// Golden-angle spokes from a seeded start angle, with the spoke count
/// chosen so the sampled fraction (ACS included) is closest to
/// `1/acceleration`.
pub fn make_pseudo_radial_mask(h: usize, w: usize, acceleration: f64, acs_lines: usize, seed: u64) -> Result<SamplingMask> {
    check_args(h, w, acceleration, acs_lines)?;
    let meta = |data| SamplingMask {
        data,
        trajectory: Trajectory::PseudoRadial,
        acceleration,
        acs_lines,
        seed,
    };
    if acceleration == 1.0 {
        return Ok(meta(Array2::ones((h, w))));
    }
    let start = rand::Rng::random_range(&mut ChaCha8Rng::seed_from_u64(seed), 0.0..PI);
    let target = (h * w) as f64 / acceleration;
    let mut data = Array2::zeros((h, w));
    set_acs(&mut data, acs_lines);
    let count = |d: &Array2<u8>| d.iter().filter(|&&v| v != 0).count() as f64;
    let mut best = (f64::INFINITY, 0);
    let limit = 4 * (h + w);
    for n in 1..=limit {
        let spoke = rasterize_spokes(h, w, &[start + n as f64 * GOLDEN_ANGLE]);
        Zip::from(&mut data).and(&spoke).for_each(|d, &s| *d |= s);
        let got = count(&data);
        let err = (got - target).abs();
        if err < best.0 {
            best = (err, n);
        }
        if got >= target {
            break;
        }
    }
    let angles: Vec<f64> = (1..=best.1).map(|n| start + n as f64 * GOLDEN_ANGLE).collect();
    let mut data = rasterize_spokes(h, w, &angles);
    set_acs(&mut data, acs_lines);
    Ok(meta(data))
}

/// Dispatches on `trajectory`. Uniform masks ignore `seed` and start at
/// column 0.
pub fn make_mask(trajectory: Trajectory, h: usize, w: usize, acceleration: f64, acs_lines: usize, seed: u64) -> Result<SamplingMask> {
    match trajectory {
        Trajectory::Uniform => make_uniform_mask(h, w, acceleration, acs_lines, 0),
        Trajectory::Gaussian => make_gaussian_mask(h, w, acceleration, acs_lines, seed),
        Trajectory::PseudoRadial => make_pseudo_radial_mask(h, w, acceleration, acs_lines, seed),
    }
}

/// `k · M`, with the mask broadcast over adjacent slices and coils.
pub fn apply_mask(ksp: &MultiCoilKSpace, mask: &SamplingMask) -> Result<MultiCoilKSpace> {
    let (_, _, h, w) = ksp.dims();
    ensure!(
        mask.dims() == (h, w),
        Validation,
        "mask {:?} does not match k-space {h}x{w}",
        mask.dims()
    );
    let mut data: Array4<C64> = ksp.data().clone();
    for mut frame in data.outer_iter_mut() {
        for mut coil in frame.outer_iter_mut() {
            Zip::from(&mut coil).and(&mask.data).for_each(|k, &m| {
                if m == 0 {
                    *k = C64::new(0.0, 0.0);
                }
            });
        }
    }
    MultiCoilKSpace::new(data)
}

/// Per-slice masking: slice `t` uses `masks[t]`.
pub fn apply_frame_masks(ksp: &MultiCoilKSpace, masks: &[SamplingMask]) -> Result<MultiCoilKSpace> {
    let (t, _, h, w) = ksp.dims();
    ensure!(masks.len() == t, Validation, "{} masks for {t} slices", masks.len());
    let mut data: Array4<C64> = ksp.data().clone();
    for (mut frame, mask) in data.outer_iter_mut().zip(masks) {
        ensure!(mask.dims() == (h, w), Validation, "mask {:?} does not match {h}x{w}", mask.dims());
        for mut coil in frame.outer_iter_mut() {
            Zip::from(&mut coil).and(&mask.data).for_each(|k, &m| {
                if m == 0 {
                    *k = C64::new(0.0, 0.0);
                }
            });
        }
    }
    MultiCoilKSpace::new(data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_acceleration_samples_everything() {
        for t in Trajectory::ALL {
            let m = make_mask(t, 16, 16, 1.0, 4, 3).unwrap();
            assert_eq!(m.sampled(), 256, "{t}");
        }
    }

    #[test]
    fn acs_must_fit() {
        assert!(make_uniform_mask(8, 8, 4.0, 8, 0).is_err());
        assert!(make_uniform_mask(8, 8, 0.5, 2, 0).is_err());
    }

    #[test]
    fn gaussian_budget_can_be_exhausted() {
        let m = make_gaussian_mask(4, 16, 1.25, 2, 0).unwrap();
        assert_eq!(m.sampled_columns().len(), 13);
        assert!(make_gaussian_mask(4, 16, 1.0, 2, 0).is_ok());
    }

    #[test]
    fn trajectory_names_roundtrip() {
        for t in Trajectory::ALL {
            assert_eq!(t.to_string().parse::<Trajectory>().unwrap(), t);
        }
    }
}
