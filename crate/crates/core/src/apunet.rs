//! Attention-based prompt UNet: a residual encoder–decoder built from
//! channel-attention blocks, with a prompt block at the bottleneck and at
//! every decoder level.
//!
//! A prompt block pools its input into softmax weights over a bank of
//! learned spatial prompts, resizes the mixed prompt to the feature size,
//! concatenates it to the features and fuses the result with a 3×3 conv.

use cmr_autograd::{Init, Param, ParamPath, Var};
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};
use crate::layers::{global_pool, Conv, Linear, LEAKY_SLOPE};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PromptConfig {
    /// Bank entries `N_p` per level.
    pub components: usize,
    /// Spatial side of each bank entry.
    pub size: usize,
    /// Also inject prompts after each encoder block.
    pub encoder_prompts: bool,
}

impl Default for PromptConfig {
    fn default() -> Self {
        Self {
            components: 5,
            size: 8,
            encoder_prompts: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ApunetConfig {
    pub levels: usize,
    pub base_channels: usize,
    pub channel_mult: Vec<usize>,
    /// Set by the owner of the network (real/imag pairs of its inputs).
    #[serde(skip)]
    pub in_channels: usize,
    #[serde(skip)]
    pub out_channels: usize,
    pub attention_reduction: usize,
    pub prompt: PromptConfig,
}

impl Default for ApunetConfig {
    fn default() -> Self {
        Self {
            levels: 4,
            base_channels: 32,
            channel_mult: vec![1, 2, 4, 8],
            in_channels: 10,
            out_channels: 10,
            attention_reduction: 8,
            prompt: PromptConfig::default(),
        }
    }
}

impl ApunetConfig {
    /// Two levels of 8 and 16 channels.
    pub fn tiny() -> Self {
        Self {
            levels: 2,
            base_channels: 8,
            channel_mult: vec![1, 2],
            attention_reduction: 4,
            prompt: PromptConfig {
                components: 3,
                size: 4,
                encoder_prompts: false,
            },
            ..Self::default()
        }
    }

    pub fn with_channels(mut self, channels: usize) -> Self {
        self.in_channels = channels;
        self.out_channels = channels;
        self
    }

    pub fn channels(&self, level: usize) -> usize {
        self.base_channels * self.channel_mult[level]
    }

    /// Spatial dims must be multiples of this (inputs are padded to it).
    pub fn divisor(&self) -> usize {
        1 << (self.levels - 1)
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(self.levels >= 2, Config, "apunet levels must be >= 2, got {}", self.levels);
        ensure!(
            self.channel_mult.len() == self.levels,
            Config,
            "channel_mult has {} entries for {} levels",
            self.channel_mult.len(),
            self.levels
        );
        ensure!(
            self.in_channels >= 1 && self.in_channels == self.out_channels,
            Config,
            "apunet in/out channels must match for the residual path ({} vs {})",
            self.in_channels,
            self.out_channels
        );
        ensure!(self.attention_reduction >= 1, Config, "attention_reduction must be >= 1");
        for l in 0..self.levels {
            let c = self.channels(l);
            ensure!(
                c >= self.attention_reduction && c.is_multiple_of(self.attention_reduction),
                Config,
                "level {l} has {c} channels, not a positive multiple of attention_reduction {}",
                self.attention_reduction
            );
        }
        ensure!(
            self.prompt.components >= 1 && self.prompt.size >= 1,
            Config,
            "prompt components and size must be >= 1"
        );
        Ok(())
    }
}

/// Squeeze-excitation gate inside a residual conv unit:
/// `x + CA(conv(act(conv(x))))`.
pub struct ChannelAttentionBlock {
    conv1: Conv,
    conv2: Conv,
    squeeze: Linear,
    excite: Linear,
}

impl ChannelAttentionBlock {
    pub fn new(p: &ParamPath, channels: usize, reduction: usize) -> Self {
        let hidden = channels / reduction;
        Self {
            conv1: Conv::same3(&p.pp("conv1"), channels, channels),
            conv2: Conv::same3(&p.pp("conv2"), channels, channels),
            squeeze: Linear::new(&p.pp("squeeze"), channels, hidden),
            excite: Linear::new(&p.pp("excite"), hidden, channels),
        }
    }

    /// The conv unit alone, before gating.
    pub fn body(&self, x: &Var) -> Var {
        self.conv2.forward(&self.conv1.forward(x).leaky_relu(LEAKY_SLOPE))
    }

    /// Per-channel gates in `(0, 1)` for features `y`, shape `[N, C]`.
    pub fn gates(&self, y: &Var) -> Var {
        self.excite
            .forward(&self.squeeze.forward(&global_pool(y)).relu())
            .sigmoid()
    }

    pub fn forward(&self, x: &Var) -> Var {
        let y = self.body(x);
        let s = y.shape();
        let g = self.gates(&y).reshape(&[s[0], s[1], 1, 1]);
        x.add(&y.mul(&g))
    }

    pub fn excite_bias(&self) -> &Param {
        self.excite.bias()
    }
}

/// Input-adaptive prompt: softmax-weighted sum of a learned bank, resized
/// and fused into the features.
pub struct PromptBlock {
    bank: Param,
    proj: Linear,
    fuse: Conv,
    dim: usize,
    size: usize,
}

impl PromptBlock {
    pub fn new(p: &ParamPath, channels: usize, cfg: &PromptConfig) -> Self {
        let dim = channels;
        Self {
            bank: p.param(
                "bank",
                &[cfg.components, dim, cfg.size, cfg.size],
                Init::Uniform { lo: 0.0, hi: 1.0 },
            ),
            proj: Linear::new(&p.pp("proj"), channels, cfg.components),
            fuse: Conv::same3(&p.pp("fuse"), channels + dim, channels),
            dim,
            size: cfg.size,
        }
    }

    pub fn bank(&self) -> &Param {
        &self.bank
    }

    /// Softmax weights over the bank, `[N, N_p]`.
    pub fn weights(&self, features: &Var) -> Var {
        self.proj.forward(&global_pool(features)).softmax_last()
    }

    /// The mixed prompt resized to the feature map, `[N, D, H, W]`.
    pub fn prompt(&self, features: &Var) -> Var {
        let s = features.shape();
        let (n, h, w) = (s[0], s[2], s[3]);
        let np = self.bank.shape()[0];
        let flat = self.bank.var().reshape(&[np, self.dim * self.size * self.size]);
        self.weights(features)
            .matmul(&flat)
            .reshape(&[n, self.dim, self.size, self.size])
            .resize_bilinear(h, w)
    }

    pub fn forward(&self, features: &Var) -> Result<Var> {
        let s = features.shape();
        ensure!(
            s[2] >= 2 && s[3] >= 2,
            Validation,
            "prompt block needs at least 2x2 features, got {}x{}",
            s[2],
            s[3]
        );
        let mixed = Var::concat(&[features.clone(), self.prompt(features)], 1);
        Ok(self.fuse.forward(&mixed))
    }
}

struct Level {
    enc: ChannelAttentionBlock,
    enc_prompt: Option<PromptBlock>,
    down: Option<Conv>,
    up: Option<Conv>,
    merge: Option<Conv>,
    prompt: PromptBlock,
    dec: Option<ChannelAttentionBlock>,
}

pub struct Apunet {
    cfg: ApunetConfig,
    head: Conv,
    tail: Conv,
    levels: Vec<Level>,
}

impl Apunet {
    /// Registers parameters as `{p}.level{i}.{block}.{param}`.
    pub fn new(p: &ParamPath, cfg: &ApunetConfig) -> Result<Self> {
        cfg.validate()?;
        let l0 = p.pp("level0");
        let head = Conv::same3(&l0.pp("head"), cfg.in_channels, cfg.channels(0));
        let tail = Conv::zeroed3(&l0.pp("tail"), cfg.channels(0), cfg.out_channels);
        let last = cfg.levels - 1;
        let levels = (0..cfg.levels)
            .map(|i| {
                let lp = p.pp(format!("level{i}"));
                let c = cfg.channels(i);
                let deeper = (i < last).then(|| cfg.channels(i + 1));
                Level {
                    enc: ChannelAttentionBlock::new(&lp.pp("enc"), c, cfg.attention_reduction),
                    enc_prompt: (cfg.prompt.encoder_prompts && i < last)
                        .then(|| PromptBlock::new(&lp.pp("enc_prompt"), c, &cfg.prompt)),
                    down: deeper.map(|d| Conv::new(&lp.pp("down"), c, d, 3, 2, 1)),
                    up: deeper.map(|d| Conv::same3(&lp.pp("up"), d, c)),
                    merge: deeper.map(|_| Conv::new(&lp.pp("merge"), 2 * c, c, 1, 1, 0)),
                    prompt: PromptBlock::new(&lp.pp("prompt"), c, &cfg.prompt),
                    dec: deeper.map(|_| ChannelAttentionBlock::new(&lp.pp("dec"), c, cfg.attention_reduction)),
                }
            })
            .collect();
        Ok(Self {
            cfg: cfg.clone(),
            head,
            tail,
            levels,
        })
    }

    pub fn config(&self) -> &ApunetConfig {
        &self.cfg
    }

    /// Prompt blocks from the top level down to the bottleneck.
    pub fn prompt_blocks(&self) -> Vec<&PromptBlock> {
        self.levels.iter().map(|l| &l.prompt).collect()
    }

    pub fn attention_blocks(&self) -> Vec<&ChannelAttentionBlock> {
        self.levels
            .iter()
            .flat_map(|l| std::iter::once(&l.enc).chain(l.dec.as_ref()))
            .collect()
    }

    /// The body's correction `f(x)`; the network output is `x + f(x)`.
    pub fn correction(&self, x: &Var) -> Result<Var> {
        let s = x.shape();
        ensure!(s.len() == 4, Validation, "apunet expects [N, C, H, W], got {s:?}");
        ensure!(
            s[1] == self.cfg.in_channels,
            Validation,
            "apunet expects {} channels, got {}",
            self.cfg.in_channels,
            s[1]
        );
        let (h, w) = (s[2], s[3]);
        let d = self.cfg.divisor();
        let (ph, pw) = (h.next_multiple_of(d) - h, w.next_multiple_of(d) - w);
        ensure!(
            ph < h && pw < w,
            Validation,
            "input {h}x{w} is too small to pad to a multiple of {d}"
        );
        ensure!(
            (h + ph) / d >= 2 && (w + pw) / d >= 2,
            Validation,
            "input {h}x{w} leaves less than 2x2 at the deepest of {} levels",
            self.cfg.levels
        );
        let mut y = self.head.forward(&x.pad_reflect_br(ph, pw));
        let mut skips = Vec::new();
        let last = self.levels.len() - 1;
        for lvl in &self.levels[..last] {
            y = lvl.enc.forward(&y);
            if let Some(p) = &lvl.enc_prompt {
                y = p.forward(&y)?;
            }
            skips.push(y.clone());
            y = lvl.down.as_ref().expect("inner level").forward(&y).leaky_relu(LEAKY_SLOPE);
        }
        y = self.levels[last].enc.forward(&y);
        y = self.levels[last].prompt.forward(&y)?;
        for (lvl, skip) in self.levels[..last].iter().zip(skips).rev() {
            y = lvl.up.as_ref().expect("inner level").forward(&y.upsample_nearest2x()).leaky_relu(LEAKY_SLOPE);
            y = lvl.merge.as_ref().expect("inner level").forward(&Var::concat(&[y, skip], 1));
            y = lvl.prompt.forward(&y)?;
            y = lvl.dec.as_ref().expect("inner level").forward(&y);
        }
        Ok(self.tail.forward(&y).crop_tl(h, w))
    }

    /// `x + f(x)`.
    pub fn forward(&self, x: &Var) -> Result<Var> {
        Ok(x.add(&self.correction(x)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use cmr_autograd::{ParamStore, Tensor};
    use rand::SeedableRng;

    fn input(shape: &[usize], seed: u64) -> Var {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        Var::constant(Tensor::randn(shape, 1.0, &mut rng))
    }

    #[test]
    fn shapes_are_preserved_including_padding() {
        let store = ParamStore::new(0);
        let net = Apunet::new(&store.root().pp("apunet"), &ApunetConfig::tiny().with_channels(6)).unwrap();
        for (h, w) in [(16, 16), (15, 13), (9, 12)] {
            let y = net.forward(&input(&[1, 6, h, w], 1)).unwrap();
            assert_eq!(y.shape(), &[1, 6, h, w]);
        }
    }

    #[test]
    fn zeroed_network_is_identity() {
        let store = ParamStore::new(0);
        let net = Apunet::new(&store.root(), &ApunetConfig::tiny().with_channels(2)).unwrap();
        store.zero_all();
        let x = input(&[3, 2, 8, 8], 2);
        assert_eq!(net.forward(&x).unwrap().value(), x.value());
    }

    #[test]
    fn one_bank_per_level_with_expected_names() {
        let store = ParamStore::new(0);
        let cfg = ApunetConfig::tiny().with_channels(2);
        let net = Apunet::new(&store.root().pp("apunet"), &cfg).unwrap();
        assert_eq!(net.prompt_blocks().len(), cfg.levels);
        assert!(store.get("apunet.level0.prompt.bank").is_some());
        assert!(store.get("apunet.level1.prompt.bank").is_some());
        assert!(store.get("apunet.level0.enc.conv1.weight").is_some());
    }

    #[test]
    fn too_small_input_is_rejected() {
        let store = ParamStore::new(0);
        let mut cfg = ApunetConfig::tiny().with_channels(2);
        cfg.levels = 3;
        cfg.channel_mult = vec![1, 2, 4];
        let net = Apunet::new(&store.root(), &cfg).unwrap();
        assert!(net.forward(&input(&[1, 2, 3, 3], 0)).is_err());
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let mut cfg = ApunetConfig::tiny().with_channels(2);
        cfg.channel_mult = vec![1];
        assert!(cfg.validate().is_err());
        let mut cfg = ApunetConfig::tiny().with_channels(2);
        cfg.attention_reduction = 3;
        assert!(cfg.validate().is_err());
    }
}
