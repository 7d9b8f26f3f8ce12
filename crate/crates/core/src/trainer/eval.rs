use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Example, Subject};
use crate::cascade::{reconstruct_image, Generator};
use crate::error::{ensure, Result};
use crate::objectives::{Metrics, MetricsRecord, MetricsReport};
use crate::sampling::{make_mask, Trajectory};

/// Which masks and frames to evaluate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSpec {
    pub trajectories: Vec<Trajectory>,
    pub accelerations: Vec<f64>,
    /// Every frame when unset.
    pub frames: Option<Vec<usize>>,
    pub seed: u64,
}

impl Default for EvalSpec {
    fn default() -> Self {
        Self {
            trajectories: vec![Trajectory::Uniform],
            accelerations: vec![4.0, 8.0, 10.0],
            frames: None,
            seed: 1234,
        }
    }
}

impl EvalSpec {
    pub fn validate(&self) -> Result<()> {
        ensure!(!self.trajectories.is_empty(), Config, "eval.trajectories is empty");
        ensure!(!self.accelerations.is_empty(), Config, "eval.accelerations is empty");
        for &af in &self.accelerations {
            ensure!(af.is_finite() && af >= 1.0, Config, "eval acceleration {af} must be >= 1");
        }
        Ok(())
    }
}

/// Reconstructs every (subject, frame, trajectory, AF) case with `gen` and
/// scores it against the ground truth and the zero-filled baseline.
pub fn evaluate(gen: &Generator, subjects: &[Subject], spec: &EvalSpec) -> Result<MetricsReport> {
    let cfg = gen.config();
    evaluate_with(subjects, spec, cfg.adjacent, cfg.acs_lines, |ex| {
        Ok(reconstruct_image(&gen.reconstruct(&ex.k0, &ex.masks[0])?))
    })
}

/// Like [`evaluate`] with an arbitrary reconstructor returning the central
/// RSS image in example units. Images are rescaled by the subject's volume
/// maximum before scoring.
pub fn evaluate_with(
    subjects: &[Subject],
    spec: &EvalSpec,
    adjacent: usize,
    acs_lines: usize,
    mut recon: impl FnMut(&Example) -> Result<Array2<f64>>,
) -> Result<MetricsReport> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut report = MetricsReport::default();
    for (si, sub) in subjects.iter().enumerate() {
        let (f, _, h, w) = sub.record.dims();
        let vmax = sub.record.image_rss.iter().copied().fold(0.0f32, f32::max) as f64;
        ensure!(vmax > 0.0, Data, "subject `{}` has no ground truth signal", sub.name);
        let frames = spec.frames.clone().unwrap_or_else(|| (0..f).collect());
        for &frame in &frames {
            ensure!(frame < f, Validation, "frame {frame} out of range for `{}` ({f} frames)", sub.name);
            for &traj in &spec.trajectories {
                for &af in &spec.accelerations {
                    let mask = make_mask(traj, h, w, af, acs_lines, rng.random())?;
                    let ex = Example::new(&sub.record, si, frame, vec![mask], adjacent)?;
                    let to_unit = ex.scale / vmax;
                    let gt = ex.gt_image() * to_unit;
                    let zf = ex.zero_filled_image() * to_unit;
                    let rec = recon(&ex)? * to_unit;
                    report.records.push(MetricsRecord {
                        subject: sub.name.clone(),
                        contrast: sub.record.contrast.to_string(),
                        frame,
                        trajectory: traj.to_string(),
                        acceleration: af,
                        recon: Metrics::compute(&rec, &gt)?,
                        zero_filled: Metrics::compute(&zf, &gt)?,
                    });
                }
            }
        }
    }
    Ok(report)
}
