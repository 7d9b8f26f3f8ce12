//! Adversarial training of the generator, curricula over acceleration
//! factors, checkpoints and evaluation.

mod checkpoint;
mod curriculum;
mod eval;

use cmr_autograd::optim::{clip_grad_norm, AdamW, AdamWConfig, StepLr};
use cmr_autograd::{no_grad, ParamStore, Tensor, Var};
use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::adversarial::{image_var, make_conditioned_input, Discriminator, DiscriminatorConfig};
use crate::cascade::{frame_masks_var, mask_var, Generator, GeneratorConfig};
use crate::error::{ensure, Error, Result};
use crate::kspace::{rss_image, CVar, MultiCoilKSpace};
use crate::objectives::{
    discriminator_loss, generator_adversarial_loss, generator_loss, step_loss, LossReport, PhaseMode,
};
use crate::phantom::SubjectRecord;
use crate::sampling::{apply_frame_masks, apply_mask, SamplingMask, Trajectory};

pub use checkpoint::{Checkpoint, CheckpointMeta};
pub use curriculum::{
    run_curriculum, stage_examples, train_stage, CurriculumSchedule, LogRecord, Stage, StageInit, StageResult,
};
pub use eval::{evaluate, evaluate_with, EvalSpec};

/// A named fully sampled subject.
#[derive(Clone, Debug)]
pub struct Subject {
    pub name: String,
    pub record: SubjectRecord,
}

/// When the discriminator is updated inside one generator step.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiscUpdates {
    /// After every reconstructor, on that reconstructor's output.
    #[default]
    EveryStep,
    /// Once, on the final output.
    FinalStep,
    /// Frozen discriminator; only the generator learns.
    Never,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub lr: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Global gradient-norm bound, for both networks.
    pub grad_clip: f64,
    /// Epochs between learning-rate decays.
    pub lr_step: usize,
    pub lr_gamma: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Examples per epoch; one pass over the training frames when unset.
    pub steps_per_epoch: Option<usize>,
    pub seed: u64,
    /// Weight of the summed step losses.
    pub lambda: f64,
    pub phase_mode: PhaseMode,
    pub disc_updates: DiscUpdates,
    /// Skip generator updates whose loss exceeds `divergence_factor` times
    /// the running loss average.
    pub divergence_guard: bool,
    pub divergence_factor: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 0.002,
            weight_decay: 0.1,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            grad_clip: 0.1,
            lr_step: 11,
            lr_gamma: 0.1,
            epochs: 12,
            batch_size: 1,
            steps_per_epoch: None,
            seed: 0,
            lambda: 1.0,
            phase_mode: PhaseMode::Raw,
            disc_updates: DiscUpdates::EveryStep,
            divergence_guard: true,
            divergence_factor: 10.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("lr", self.lr),
            ("grad_clip", self.grad_clip),
            ("lr_gamma", self.lr_gamma),
            ("eps", self.eps),
            ("divergence_factor", self.divergence_factor),
        ] {
            ensure!(v > 0.0 && v.is_finite(), Config, "train.{name} must be positive, got {v}");
        }
        for (name, v) in [("weight_decay", self.weight_decay), ("lambda", self.lambda)] {
            ensure!(v >= 0.0 && v.is_finite(), Config, "train.{name} must be non-negative, got {v}");
        }
        ensure!(
            (0.0..1.0).contains(&self.beta1) && (0.0..1.0).contains(&self.beta2),
            Config,
            "train betas must lie in [0, 1)"
        );
        ensure!(self.epochs >= 1, Config, "train.epochs must be >= 1");
        ensure!(self.lr_step >= 1, Config, "train.lr_step must be >= 1");
        ensure!(self.batch_size >= 1, Config, "train.batch_size must be >= 1");
        ensure!(self.steps_per_epoch != Some(0), Config, "train.steps_per_epoch must be >= 1");
        Ok(())
    }

    pub fn schedule(&self) -> StepLr {
        StepLr {
            base_lr: self.lr,
            step_size: self.lr_step,
            gamma: self.lr_gamma,
        }
    }

    fn adamw(&self) -> AdamWConfig {
        AdamWConfig {
            lr: self.lr,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps,
            weight_decay: self.weight_decay,
        }
    }
}

/// Generator and discriminator with their separate parameter stores.
pub struct Model {
    pub gen_store: ParamStore,
    pub disc_store: ParamStore,
    pub generator: Generator,
    pub discriminator: Discriminator,
}

impl Model {
    pub const DISC_PREFIX: &'static str = "disc";

    pub fn new(gen: &GeneratorConfig, disc: &DiscriminatorConfig, seed: u64) -> Result<Self> {
        let gen_store = ParamStore::new(seed);
        let disc_store = ParamStore::new(seed.wrapping_add(0x9e37_79b9));
        let generator = Generator::new(&gen_store, gen)?;
        let discriminator = Discriminator::new(&disc_store.root().pp(Self::DISC_PREFIX), disc)?;
        Ok(Self {
            gen_store,
            disc_store,
            generator,
            discriminator,
        })
    }

    /// Every parameter of both networks by name.
    pub fn tensors(&self) -> std::collections::BTreeMap<String, Tensor> {
        let mut all = self.gen_store.values();
        all.extend(self.disc_store.values());
        all
    }

    /// Strict load: names and shapes must match exactly.
    pub fn load(&self, tensors: &std::collections::BTreeMap<String, Tensor>) -> Result<()> {
        let prefix = format!("{}.", Self::DISC_PREFIX);
        let (disc, gen): (std::collections::BTreeMap<_, _>, std::collections::BTreeMap<_, _>) = tensors
            .iter()
            .map(|(k, v)| (k.clone(), v.clone()))
            .partition(|(k, _)| k.starts_with(&prefix));
        self.gen_store.load(&gen)?;
        self.disc_store.load(&disc)?;
        Ok(())
    }
}

/// One training or evaluation frame, scaled so its zero-filled image peaks at 1.
#[derive(Clone, Debug)]
pub struct Example {
    pub k0: MultiCoilKSpace,
    pub kg: MultiCoilKSpace,
    /// One mask, or one per adjacent slice.
    pub masks: Vec<SamplingMask>,
    /// Factor the raw k-space was divided by.
    pub scale: f64,
    pub subject: usize,
    pub frame: usize,
}

impl Example {
    pub fn new(rec: &SubjectRecord, subject: usize, frame: usize, masks: Vec<SamplingMask>, adjacent: usize) -> Result<Self> {
        let kg = rec.adjacent(frame, adjacent)?;
        let k0 = match masks.len() {
            1 => apply_mask(&kg, &masks[0])?,
            _ => apply_frame_masks(&kg, &masks)?,
        };
        let scale = rss_image(k0.central()).iter().copied().fold(0.0, f64::max);
        ensure!(
            scale > 0.0 && scale.is_finite(),
            Data,
            "subject {subject} frame {frame}: zero-filled image is empty"
        );
        let inv = 1.0 / scale;
        let k0 = MultiCoilKSpace::new(k0.data().mapv(|v| v * inv))?;
        let kg = MultiCoilKSpace::new(kg.data().mapv(|v| v * inv))?;
        Ok(Self {
            k0,
            kg,
            masks,
            scale,
            subject,
            frame,
        })
    }

    pub fn trajectory(&self) -> Trajectory {
        self.masks[0].trajectory
    }

    pub fn acceleration(&self) -> f64 {
        self.masks[0].acceleration
    }

    pub fn mask_var(&self) -> Var {
        match self.masks.len() {
            1 => mask_var(&self.masks[0]),
            _ => frame_masks_var(&self.masks),
        }
    }

    pub fn k0_var(&self) -> CVar {
        CVar::constant(&self.k0.data().clone().into_dyn())
    }

    pub fn gt_central(&self) -> CVar {
        CVar::constant(&self.kg.central().to_owned().into_dyn())
    }

    /// Ground-truth RSS image in example units.
    pub fn gt_image(&self) -> Array2<f64> {
        rss_image(self.kg.central())
    }

    pub fn zero_filled_image(&self) -> Array2<f64> {
        rss_image(self.k0.central())
    }
}

fn first_non_finite<'a>(named: impl IntoIterator<Item = (String, &'a Var)>) -> Option<String> {
    named.into_iter().find(|(_, v)| !v.value().is_finite()).map(|(n, _)| n)
}

fn numerical(what: String) -> Error {
    Error::Numerical(format!("non-finite values in {what}"))
}

/// Generator and discriminator optimisation state.
pub struct Trainer {
    pub model: Model,
    cfg: TrainConfig,
    gen_opt: AdamW,
    disc_opt: AdamW,
    loss_avg: Option<f64>,
}

impl Trainer {
    pub fn new(model: Model, cfg: &TrainConfig) -> Result<Self> {
        cfg.validate()?;
        ensure!(
            model.generator.config().num_reconstructors >= 1,
            Config,
            "training needs at least one reconstructor"
        );
        Ok(Self {
            model,
            cfg: cfg.clone(),
            gen_opt: AdamW::new(cfg.adamw()),
            disc_opt: AdamW::new(cfg.adamw()),
            loss_avg: None,
        })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    pub fn lr(&self) -> f64 {
        self.gen_opt.lr()
    }

    /// Applies the step schedule for `epoch` (0-based) to both optimizers.
    pub fn set_epoch(&mut self, epoch: usize) {
        let lr = self.cfg.schedule().lr_at(epoch);
        self.gen_opt.set_lr(lr);
        self.disc_opt.set_lr(lr);
    }

    /// One discriminator update on a real and a fake image, both conditioned
    /// on the zero-filled image. Returns the loss before the update.
    pub fn discriminator_step(&mut self, real: &Array2<f64>, fake: &Array2<f64>, zero_filled: &Array2<f64>) -> Result<f64> {
        self.discriminator_step_vars(&image_var(real), &image_var(fake), &image_var(zero_filled))
    }

    fn discriminator_step_vars(&mut self, real: &Var, fake: &Var, zf: &Var) -> Result<f64> {
        let d = &self.model.discriminator;
        let pred_real = d.forward(&make_conditioned_input(real, zf)?)?;
        let pred_fake = d.forward(&make_conditioned_input(fake, zf)?)?;
        let loss = discriminator_loss(&pred_real, &pred_fake);
        if let Some(n) = first_non_finite([("discriminator loss".to_string(), &loss)]) {
            return Err(numerical(n));
        }
        let mut grads = loss.backward();
        clip_grad_norm(&self.model.disc_store, &mut grads, self.cfg.grad_clip);
        self.disc_opt.step(&self.model.disc_store, &grads);
        Ok(loss.item())
    }

    /// Generator forward, per-step losses and discriminator updates, the
    /// adversarial term on the final output, then one clipped AdamW step on
    /// the generator.
    pub fn train_step(&mut self, batch: &[Example]) -> Result<LossReport> {
        ensure!(!batch.is_empty(), Validation, "empty batch");
        let n_steps = self.model.generator.config().num_reconstructors;
        let lambda = self.cfg.lambda;
        let mut report = LossReport {
            physical: vec![0.0; n_steps],
            ssim: vec![0.0; n_steps],
            step: vec![0.0; n_steps],
            lambda,
            ..LossReport::default()
        };
        let inv_b = 1.0 / batch.len() as f64;
        let mut totals = Vec::with_capacity(batch.len());
        for ex in batch {
            let out = self.model.generator.forward(&ex.k0_var(), &ex.mask_var())?;
            let gt = ex.gt_central();
            let gt_img = ex.gt_image();
            let gt_max = gt_img.iter().copied().fold(0.0, f64::max);
            ensure!(gt_max > 0.0, Data, "subject {} frame {}: empty ground truth", ex.subject, ex.frame);
            let norm = 1.0 / gt_max;
            let real = image_var(&gt_img.mapv(|v| v * norm));
            let zf = image_var(&ex.zero_filled_image().mapv(|v| v * norm));
            let mut named = vec![("sensitivity maps".to_string(), &out.maps.re), ("sensitivity maps".to_string(), &out.maps.im)];
            for (t, k) in out.intermediates.iter().enumerate() {
                named.push((format!("reconstructor {t} k-space"), &k.re));
                named.push((format!("reconstructor {t} k-space"), &k.im));
            }
            if let Some(n) = first_non_finite(named) {
                return Err(numerical(n));
            }
            let mut steps = Vec::with_capacity(n_steps);
            for (t, k) in out.intermediates.iter().enumerate() {
                let sl = step_loss(k, &gt, self.cfg.phase_mode)?;
                if let Some(n) = first_non_finite([(format!("step {t} loss"), &sl.total)]) {
                    return Err(numerical(n));
                }
                report.physical[t] += sl.physical.item() * inv_b;
                report.ssim[t] += sl.ssim.item() * inv_b;
                report.step[t] += sl.total.item() * inv_b;
                steps.push(sl.total);
                let update = match self.cfg.disc_updates {
                    DiscUpdates::EveryStep => true,
                    DiscUpdates::FinalStep => t + 1 == n_steps,
                    DiscUpdates::Never => false,
                };
                if update {
                    let fake = no_grad(|| k.detach().ifft2c().rss(0).scale(norm));
                    let l = self.discriminator_step_vars(&real, &fake, &zf)?;
                    report.discriminator.push(l);
                }
            }
            let last = out.intermediates.last().expect("at least one reconstructor");
            let fake = last.ifft2c().rss(0).scale(norm);
            let pred_fake = self.model.discriminator.forward(&make_conditioned_input(&fake, &zf)?)?;
            let adv = generator_adversarial_loss(&pred_fake);
            let total = generator_loss(&steps, &adv, lambda)?;
            if let Some(n) = first_non_finite([("adversarial loss".to_string(), &adv), ("generator loss".to_string(), &total)]) {
                return Err(numerical(n));
            }
            report.adversarial += adv.item() * inv_b;
            totals.push(total);
        }
        let mut total = totals[0].clone();
        for t in &totals[1..] {
            total = total.add(t);
        }
        let total = total.scale(inv_b);
        report.total = total.item();
        report.stepwise_sum = report.step.iter().sum();

        if self.cfg.divergence_guard {
            if let Some(avg) = self.loss_avg {
                if report.total > self.cfg.divergence_factor * avg {
                    report.skipped = true;
                    return Ok(report);
                }
            }
        }
        let mut grads = total.backward();
        report.grad_norm = clip_grad_norm(&self.model.gen_store, &mut grads, self.cfg.grad_clip);
        self.gen_opt.step(&self.model.gen_store, &grads);
        self.loss_avg = Some(match self.loss_avg {
            None => report.total,
            Some(a) => 0.9 * a + 0.1 * report.total,
        });
        Ok(report)
    }

    /// `λ · Σ_t L_step(t)` averaged over `examples`, without updating anything.
    pub fn eval_loss(&self, examples: &[Example]) -> Result<f64> {
        stepwise_loss(&self.model.generator, examples, self.cfg.lambda, self.cfg.phase_mode)
    }
}

/// `λ · Σ_t L_step(t)` averaged over `examples`.
pub fn stepwise_loss(gen: &Generator, examples: &[Example], lambda: f64, mode: PhaseMode) -> Result<f64> {
    ensure!(!examples.is_empty(), Validation, "no examples to evaluate");
    no_grad(|| {
        let mut sum = 0.0;
        for ex in examples {
            let out = gen.forward(&ex.k0_var(), &ex.mask_var())?;
            let gt = ex.gt_central();
            for k in &out.intermediates {
                sum += lambda * step_loss(k, &gt, mode)?.total.item();
            }
        }
        Ok(sum / examples.len() as f64)
    })
}
