//! Patch discriminator conditioned on the zero-filled image.
//!
//! Labels follow the training algorithm literally: the real class is the
//! all-zeros map and the fake class the all-ones map (see
//! [`crate::objectives::label_real`]). This is the reverse of the usual
//! convention.

use cmr_autograd::{ParamPath, Tensor, Var};
use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};
use crate::layers::{instance_norm, Conv};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DiscriminatorConfig {
    /// Conv blocks before the final logit conv; all but the last stride 2.
    pub layers: usize,
    pub base_channels: usize,
    pub kernel: usize,
    pub negative_slope: f64,
    /// Instance norm after every block but the first.
    pub instance_norm: bool,
}

impl Default for DiscriminatorConfig {
    fn default() -> Self {
        Self {
            layers: 4,
            base_channels: 64,
            kernel: 4,
            negative_slope: 0.2,
            instance_norm: true,
        }
    }
}

impl DiscriminatorConfig {
    pub fn tiny() -> Self {
        Self {
            layers: 3,
            base_channels: 8,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(self.layers >= 1, Config, "discriminator needs at least one layer");
        ensure!(self.base_channels >= 1, Config, "discriminator base_channels must be >= 1");
        ensure!(self.kernel >= 2, Config, "discriminator kernel must be >= 2");
        Ok(())
    }

    /// Stride of block `i`.
    pub fn stride(&self, i: usize) -> usize {
        if i + 1 < self.layers {
            2
        } else {
            1
        }
    }

    /// Output side for a square input of side `n`, if positive.
    pub fn output_size(&self, n: usize) -> Option<usize> {
        let pad = 1;
        let mut s = n;
        for i in 0..=self.layers {
            let stride = if i < self.layers { self.stride(i) } else { 1 };
            let padded = s + 2 * pad;
            if padded < self.kernel {
                return None;
            }
            s = (padded - self.kernel) / stride + 1;
        }
        Some(s)
    }
}

pub struct Discriminator {
    cfg: DiscriminatorConfig,
    blocks: Vec<Conv>,
    head: Conv,
}

impl Discriminator {
    pub const IN_CHANNELS: usize = 2;

    /// Registers `{p}.block{i}.*` and `{p}.head.*`.
    pub fn new(p: &ParamPath, cfg: &DiscriminatorConfig) -> Result<Self> {
        cfg.validate()?;
        let mut ci = Self::IN_CHANNELS;
        let mut blocks = Vec::new();
        for i in 0..cfg.layers {
            let co = cfg.base_channels << i.min(3);
            blocks.push(Conv::new(&p.pp(format!("block{i}")), ci, co, cfg.kernel, cfg.stride(i), 1));
            ci = co;
        }
        let head = Conv::new(&p.pp("head"), ci, 1, cfg.kernel, 1, 1);
        Ok(Self {
            cfg: cfg.clone(),
            blocks,
            head,
        })
    }

    pub fn config(&self) -> &DiscriminatorConfig {
        &self.cfg
    }

    /// `[N, 2, H, W]` images to `[N, 1, h, w]` patch logits.
    pub fn forward(&self, x: &Var) -> Result<Var> {
        let s = x.shape();
        ensure!(
            s.len() == 4 && s[1] == Self::IN_CHANNELS,
            Validation,
            "discriminator expects [N, 2, H, W], got {s:?}"
        );
        ensure!(
            self.cfg.output_size(s[2]).is_some() && self.cfg.output_size(s[3]).is_some(),
            Validation,
            "input {}x{} is smaller than the discriminator's receptive field",
            s[2],
            s[3]
        );
        let mut y = x.clone();
        for (i, b) in self.blocks.iter().enumerate() {
            y = b.forward(&y);
            if i > 0 && self.cfg.instance_norm {
                y = instance_norm(&y);
            }
            y = y.leaky_relu(self.cfg.negative_slope);
        }
        Ok(self.head.forward(&y))
    }
}

/// Stacks `[candidate, zero_filled]` into a `[1, 2, H, W]` input.
pub fn make_conditioned_input(candidate: &Var, zero_filled: &Var) -> Result<Var> {
    ensure!(
        candidate.shape() == zero_filled.shape() && candidate.shape().len() == 2,
        Validation,
        "conditioned input needs two [H, W] images, got {:?} and {:?}",
        candidate.shape(),
        zero_filled.shape()
    );
    let (h, w) = (candidate.shape()[0], candidate.shape()[1]);
    Ok(Var::concat(
        &[candidate.reshape(&[1, 1, h, w]), zero_filled.reshape(&[1, 1, h, w])],
        1,
    ))
}

/// Constant `[H, W]` image for use as discriminator input.
pub fn image_var(img: &Array2<f64>) -> Var {
    Var::constant(Tensor::new(&[img.nrows(), img.ncols()], img.iter().copied().collect()))
}
