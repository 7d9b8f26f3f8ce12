//! Losses and image-quality metrics.
//!
//! The generator loss is `λ · Σ_t L_step(t) + L_adv`, where each step loss is
//! a k-space magnitude/phase MSE plus `1 − SSIM` of the coil-combined image.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use cmr_autograd::{no_grad, Tensor, Var};
use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};
use crate::kspace::CVar;

pub const SSIM_WINDOW: usize = 7;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;
/// Lower bound on the SSIM dynamic range.
pub const DATA_RANGE_FLOOR: f64 = 1e-12;

/// How phase differences enter the physical loss.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhaseMode {
    /// Plain difference of principal values; jumps by 2π across the branch cut.
    #[default]
    Raw,
    /// `arg(pred · conj(gt))`, continuous across the cut.
    Wrapped,
}

/// `MSE(|pred|, |gt|) + MSE(Φ(pred), Φ(gt))` with `Φ(0) = 0`.
pub fn physical_loss(pred: &CVar, gt: &CVar, mode: PhaseMode) -> Result<Var> {
    ensure!(
        pred.shape() == gt.shape(),
        Validation,
        "physical_loss: {:?} vs {:?}",
        pred.shape(),
        gt.shape()
    );
    let mag = pred.abs().sub(&gt.abs()).sqr().mean_all();
    let phase = match mode {
        PhaseMode::Raw => pred.phase().sub(&gt.phase()),
        PhaseMode::Wrapped => pred.mul(&gt.conj()).phase(),
    };
    Ok(mag.add(&phase.sqr().mean_all()))
}

/// Normalised 7×7 Gaussian window as a `[1, 1, 7, 7]` conv kernel.
pub fn gaussian_window() -> Tensor {
    let r = (SSIM_WINDOW / 2) as f64;
    let g: Vec<f64> = (0..SSIM_WINDOW)
        .map(|i| (-((i as f64 - r).powi(2)) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp())
        .collect();
    let total: f64 = g.iter().sum::<f64>().powi(2);
    let data = g.iter().flat_map(|a| g.iter().map(move |b| a * b / total)).collect();
    Tensor::new(&[1, 1, SSIM_WINDOW, SSIM_WINDOW], data)
}

/// Mean SSIM over all fully contained windows. Inputs are `[..., H, W]`;
/// leading axes are treated as independent images.
pub fn ssim(pred: &Var, gt: &Var, data_range: f64) -> Result<Var> {
    let s = pred.shape();
    ensure!(s == gt.shape(), Validation, "ssim: {s:?} vs {:?}", gt.shape());
    ensure!(s.len() >= 2, Validation, "ssim needs [.., H, W], got {s:?}");
    let (h, w) = (s[s.len() - 2], s[s.len() - 1]);
    ensure!(
        h >= SSIM_WINDOW && w >= SSIM_WINDOW,
        Validation,
        "ssim needs images of at least {SSIM_WINDOW}x{SSIM_WINDOW}, got {h}x{w}"
    );
    let n = pred.numel() / (h * w);
    let l = data_range.max(DATA_RANGE_FLOOR);
    let (c1, c2) = ((SSIM_K1 * l).powi(2), (SSIM_K2 * l).powi(2));
    let win = Var::constant(gaussian_window());
    let spec = cmr_autograd::Conv2dSpec { stride: 1, padding: 0 };
    let blur = |v: &Var| v.conv2d(&win, None, spec);
    let x = pred.reshape(&[n, 1, h, w]);
    let y = gt.reshape(&[n, 1, h, w]);
    let (mx, my) = (blur(&x), blur(&y));
    let (mx2, my2, mxy) = (mx.sqr(), my.sqr(), mx.mul(&my));
    let sxx = blur(&x.sqr()).sub(&mx2);
    let syy = blur(&y.sqr()).sub(&my2);
    let sxy = blur(&x.mul(&y)).sub(&mxy);
    let num = mxy.scale(2.0).add_scalar(c1).mul(&sxy.scale(2.0).add_scalar(c2));
    let den = mx2.add(&my2).add_scalar(c1).mul(&sxx.add(&syy).add_scalar(c2));
    Ok(num.div(&den).mean_all())
}

/// `1 − SSIM` with the dynamic range taken from `gt`.
pub fn ssim_loss(pred: &Var, gt: &Var) -> Result<Var> {
    let range = gt.value().data().iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(ssim(pred, gt, range)?.neg().add_scalar(1.0))
}

pub struct StepLoss {
    pub physical: Var,
    pub ssim: Var,
    pub total: Var,
}

/// Physical loss on central k-space `[C, H, W]` plus SSIM loss on the RSS
/// images of prediction and target.
pub fn step_loss(pred: &CVar, gt: &CVar, mode: PhaseMode) -> Result<StepLoss> {
    let physical = physical_loss(pred, gt, mode)?;
    let img_pred = pred.ifft2c().rss(0);
    let img_gt = gt.ifft2c().rss(0);
    let ssim = ssim_loss(&img_pred, &img_gt)?;
    let total = physical.add(&ssim);
    Ok(StepLoss { physical, ssim, total })
}

/// `λ · Σ step_losses + adv`.
pub fn generator_loss(step_losses: &[Var], adv: &Var, lambda: f64) -> Result<Var> {
    ensure!(!step_losses.is_empty(), Validation, "generator_loss needs at least one step loss");
    let mut sum = step_losses[0].clone();
    for l in &step_losses[1..] {
        sum = sum.add(l);
    }
    Ok(sum.scale(lambda).add(adv))
}

/// Label map of the "real" class: all zeros.
pub fn label_real(shape: &[usize]) -> Tensor {
    Tensor::zeros(shape)
}

/// Label map of the "fake" class: all ones.
pub fn label_fake(shape: &[usize]) -> Tensor {
    Tensor::ones(shape)
}

/// `½ (BCE(real labels, pred_real) + BCE(fake labels, pred_fake))` on logits.
pub fn discriminator_loss(pred_real: &Var, pred_fake: &Var) -> Var {
    let real = pred_real.bce_with_logits(&label_real(pred_real.shape()));
    let fake = pred_fake.bce_with_logits(&label_fake(pred_fake.shape()));
    real.add(&fake).scale(0.5)
}

/// BCE of fake logits against the real label.
pub fn generator_adversarial_loss(pred_fake: &Var) -> Var {
    pred_fake.bce_with_logits(&label_real(pred_fake.shape()))
}

fn max_of(a: &Array2<f64>) -> f64 {
    a.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

fn to_var(a: &Array2<f64>) -> Var {
    Var::constant(Tensor::new(&[a.nrows(), a.ncols()], a.iter().copied().collect()))
}

/// SSIM with the dynamic range set by `max(gt)`.
pub fn metric_ssim(pred: &Array2<f64>, gt: &Array2<f64>) -> Result<f64> {
    no_grad(|| Ok(ssim(&to_var(pred), &to_var(gt), max_of(gt))?.item()))
}

/// `10 log10(max(gt)² / MSE)`; `+∞` when the images are identical.
pub fn metric_psnr(pred: &Array2<f64>, gt: &Array2<f64>) -> Result<f64> {
    ensure!(pred.dim() == gt.dim(), Validation, "psnr: {:?} vs {:?}", pred.dim(), gt.dim());
    let mse = (pred - gt).mapv(|v| v * v).mean().unwrap_or(0.0);
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (max_of(gt).powi(2) / mse).log10())
}

/// `‖pred − gt‖² / ‖gt‖²`.
pub fn metric_nmse(pred: &Array2<f64>, gt: &Array2<f64>) -> Result<f64> {
    ensure!(pred.dim() == gt.dim(), Validation, "nmse: {:?} vs {:?}", pred.dim(), gt.dim());
    let energy: f64 = gt.iter().map(|v| v * v).sum();
    ensure!(energy > 0.0, Validation, "nmse is undefined for an all-zero ground truth");
    Ok((pred - gt).mapv(|v| v * v).sum() / energy)
}

mod inf_as_string {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_infinite() {
            s.serialize_str(if *v > 0.0 { "inf" } else { "-inf" })
        } else {
            v.serialize(s)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Num {
            F(f64),
            S(String),
        }
        match Num::deserialize(d)? {
            Num::F(v) => Ok(v),
            Num::S(s) if s == "inf" => Ok(f64::INFINITY),
            Num::S(s) if s == "-inf" => Ok(f64::NEG_INFINITY),
            Num::S(s) => Err(serde::de::Error::custom(format!("bad number `{s}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub nmse: f64,
    #[serde(with = "inf_as_string")]
    pub psnr: f64,
    pub ssim: f64,
}

impl Metrics {
    pub fn compute(pred: &Array2<f64>, gt: &Array2<f64>) -> Result<Self> {
        Ok(Self {
            nmse: metric_nmse(pred, gt)?,
            psnr: metric_psnr(pred, gt)?,
            ssim: metric_ssim(pred, gt)?,
        })
    }

    /// `NMSE/PSNR/SSIM`, SSIM as a fraction.
    pub fn triple(&self) -> String {
        format!("{:.4}/{:.2}/{:.4}", self.nmse, self.psnr, self.ssim)
    }
}

/// One evaluated frame.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub subject: String,
    pub contrast: String,
    pub frame: usize,
    pub trajectory: String,
    pub acceleration: f64,
    pub recon: Metrics,
    pub zero_filled: Metrics,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    #[serde(with = "inf_as_string")]
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    pub fn of(values: impl IntoIterator<Item = f64>) -> Self {
        let v: Vec<f64> = values.into_iter().collect();
        let n = v.len().max(1) as f64;
        let mean = v.iter().sum::<f64>() / n;
        let std = if mean.is_finite() {
            (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt()
        } else {
            0.0
        };
        Self { mean, std }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub contrast: String,
    pub trajectory: String,
    pub acceleration: f64,
    pub count: usize,
    pub nmse: MeanStd,
    pub psnr: MeanStd,
    pub ssim: MeanStd,
    pub zf_nmse: MeanStd,
    pub zf_psnr: MeanStd,
    pub zf_ssim: MeanStd,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub records: Vec<MetricsRecord>,
}

impl MetricsReport {
    /// Groups by contrast, trajectory and acceleration, plus an `all` row.
    pub fn aggregates(&self) -> Vec<Aggregate> {
        let mut groups: BTreeMap<(String, String, u64), Vec<&MetricsRecord>> = BTreeMap::new();
        for r in &self.records {
            let key = (r.contrast.clone(), r.trajectory.clone(), r.acceleration.to_bits());
            groups.entry(key).or_default().push(r);
        }
        let mut out: Vec<Aggregate> = groups
            .into_iter()
            .map(|((contrast, trajectory, af), rs)| Self::aggregate(contrast, trajectory, f64::from_bits(af), &rs))
            .collect();
        if !self.records.is_empty() {
            let all: Vec<&MetricsRecord> = self.records.iter().collect();
            out.push(Self::aggregate("all".into(), "all".into(), f64::NAN, &all));
        }
        out
    }

    fn aggregate(contrast: String, trajectory: String, acceleration: f64, rs: &[&MetricsRecord]) -> Aggregate {
        let ms = |f: &dyn Fn(&MetricsRecord) -> f64| MeanStd::of(rs.iter().map(|r| f(r)));
        Aggregate {
            contrast,
            trajectory,
            acceleration,
            count: rs.len(),
            nmse: ms(&|r| r.recon.nmse),
            psnr: ms(&|r| r.recon.psnr),
            ssim: ms(&|r| r.recon.ssim),
            zf_nmse: ms(&|r| r.zero_filled.nmse),
            zf_psnr: ms(&|r| r.zero_filled.psnr),
            zf_ssim: ms(&|r| r.zero_filled.ssim),
        }
    }

    /// Mean `NMSE/PSNR/SSIM` per group for the reconstruction and the
    /// zero-filled baseline; SSIM also shown ×100.
    pub fn table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{:<8} {:<14} {:>5} {:>4}  {:<26} {:<26}",
            "contrast", "trajectory", "AF", "n", "recon NMSE/PSNR/SSIM", "zero-filled NMSE/PSNR/SSIM"
        );
        for a in self.aggregates() {
            let af = if a.acceleration.is_nan() { "-".into() } else { format!("{}", a.acceleration) };
            let cell = |n: MeanStd, p: MeanStd, q: MeanStd| {
                format!("{:.4}/{:.2}/{:.4} ({:.2})", n.mean, p.mean, q.mean, 100.0 * q.mean)
            };
            let _ = writeln!(
                s,
                "{:<8} {:<14} {:>5} {:>4}  {:<26} {:<26}",
                a.contrast,
                a.trajectory,
                af,
                a.count,
                cell(a.nmse, a.psnr, a.ssim),
                cell(a.zf_nmse, a.zf_psnr, a.zf_ssim)
            );
        }
        s
    }

    /// One JSON object per line.
    pub fn to_jsonl(&self) -> String {
        self.records
            .iter()
            .map(|r| serde_json::to_string(r).expect("record serializes") + "\n")
            .collect()
    }
}

/// Every scalar of one generator update.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub physical: Vec<f64>,
    pub ssim: Vec<f64>,
    pub step: Vec<f64>,
    pub stepwise_sum: f64,
    pub lambda: f64,
    pub adversarial: f64,
    pub total: f64,
    /// Discriminator loss of each update made during the step.
    pub discriminator: Vec<f64>,
    pub grad_norm: f64,
    pub skipped: bool,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn window_sums_to_one() {
        let w = gaussian_window();
        assert!((w.sum() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn psnr_closed_form() {
        let gt = Array2::from_shape_fn((8, 8), |(i, j)| (i * 8 + j) as f64 / 63.0);
        let pred = &gt + 0.1;
        assert!((metric_psnr(&pred, &gt).unwrap() - 20.0).abs() < 1e-12);
        assert_eq!(metric_psnr(&gt, &gt).unwrap(), f64::INFINITY);
    }

    #[test]
    fn infinite_psnr_roundtrips_through_json() {
        let m = Metrics { nmse: 0.0, psnr: f64::INFINITY, ssim: 1.0 };
        let s = serde_json::to_string(&m).unwrap();
        assert!(s.contains("\"inf\""));
        assert_eq!(serde_json::from_str::<Metrics>(&s).unwrap(), m);
    }

    #[test]
    fn zero_ground_truth_has_no_nmse() {
        let z = Array2::zeros((8, 8));
        assert!(metric_nmse(&z, &z).is_err());
    }

    #[test]
    fn eq3_arithmetic() {
        let steps: Vec<Var> = [1.0, 2.0, 3.0].iter().map(|&v| Var::scalar(v)).collect();
        let adv = Var::scalar(0.5);
        assert_eq!(generator_loss(&steps, &adv, 1.0).unwrap().item(), 6.5);
        assert_eq!(generator_loss(&steps, &adv, 0.0).unwrap().item(), 0.5);
        assert!(generator_loss(&[], &adv, 1.0).is_err());
    }
}
