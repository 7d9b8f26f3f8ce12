//! The generator: sensitivity estimation from the ACS lines, then a cascade
//! of reconstructors, each doing
//!
//! ```text
//! I_SC = Σ_c conj(S_c) · ifft2c(k_t)_c
//! G_k  = fft2c(S · f_t(I_SC))
//! k_{t+1} = k_t − η_t · M · (k_t − k_0) + G_k
//! ```
//!
//! where `f_t` is the correction of the step's APUNet (its output minus
//! its input). With a zeroed network `G_k = 0`, so a fully sampled input
//! with `η = 1` is a fixed point.

use cmr_autograd::{no_grad, Init, Param, ParamStore, Tensor, Var};
use ndarray::{Array2, Array4, Zip};
use serde::{Deserialize, Serialize};

use crate::apunet::{Apunet, ApunetConfig};
use crate::error::{ensure, Result};
use crate::kspace::{acs_window, rss_image, CVar, MultiCoilKSpace, C64};
use crate::sampling::SamplingMask;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GeneratorConfig {
    pub num_reconstructors: usize,
    /// Adjacent slices `T` fed to each reconstructor (odd).
    pub adjacent: usize,
    pub acs_lines: usize,
    pub apunet: ApunetConfig,
    pub sme: ApunetConfig,
    pub eta_init: f64,
    /// One APUNet (and prompt set) shared by every step.
    pub share_weights: bool,
    /// Added under the square root when RSS-normalizing estimated maps.
    pub sme_eps: f64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            num_reconstructors: 12,
            adjacent: 5,
            acs_lines: 16,
            apunet: ApunetConfig::default(),
            sme: ApunetConfig {
                levels: 3,
                base_channels: 16,
                channel_mult: vec![1, 2, 4],
                ..ApunetConfig::default()
            },
            eta_init: 1.0,
            share_weights: false,
            sme_eps: 1e-12,
        }
    }
}

impl GeneratorConfig {
    /// Two reconstructors, `T = 3`, tiny APUNets.
    pub fn tiny() -> Self {
        Self {
            num_reconstructors: 2,
            adjacent: 3,
            acs_lines: 16,
            apunet: ApunetConfig::tiny(),
            sme: ApunetConfig::tiny(),
            eta_init: 1.0,
            share_weights: false,
            sme_eps: 1e-12,
        }
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(self.adjacent % 2 == 1, Config, "adjacent must be odd, got {}", self.adjacent);
        ensure!(self.eta_init.is_finite(), Config, "eta_init must be finite");
        ensure!(self.sme_eps >= 0.0, Config, "sme_eps must be >= 0");
        self.step_net().validate()?;
        self.sme_net().validate()
    }

    fn step_net(&self) -> ApunetConfig {
        self.apunet.clone().with_channels(2 * self.adjacent)
    }

    fn sme_net(&self) -> ApunetConfig {
        self.sme.clone().with_channels(2)
    }
}

/// Everything a forward pass produces.
pub struct GeneratorOutput {
    /// `[T, C, H, W]`.
    pub k_final: CVar,
    /// Central slice `[C, H, W]` after each reconstructor.
    pub intermediates: Vec<CVar>,
    /// Estimated maps `[C, H, W]`.
    pub maps: CVar,
}

pub struct Generator {
    cfg: GeneratorConfig,
    steps: Vec<Apunet>,
    sme: Apunet,
    etas: Vec<Param>,
}

impl Generator {
    /// Registers `generator.step{t}.apunet.*` (or `generator.shared.apunet.*`),
    /// `sme.apunet.*` and `eta.{t}`.
    pub fn new(store: &ParamStore, cfg: &GeneratorConfig) -> Result<Self> {
        cfg.validate()?;
        let root = store.root();
        let step_cfg = cfg.step_net();
        let steps = if cfg.share_weights && cfg.num_reconstructors > 0 {
            vec![Apunet::new(&root.pp("generator").pp("shared").pp("apunet"), &step_cfg)?]
        } else {
            (0..cfg.num_reconstructors)
                .map(|t| Apunet::new(&root.pp("generator").pp(format!("step{t}")).pp("apunet"), &step_cfg))
                .collect::<Result<_>>()?
        };
        let sme = Apunet::new(&root.pp("sme").pp("apunet"), &cfg.sme_net())?;
        let eta = root.pp("eta");
        let etas = (0..cfg.num_reconstructors)
            .map(|t| eta.param(&t.to_string(), &[1], Init::Const(cfg.eta_init)))
            .collect();
        Ok(Self {
            cfg: cfg.clone(),
            steps,
            sme,
            etas,
        })
    }

    pub fn config(&self) -> &GeneratorConfig {
        &self.cfg
    }

    pub fn etas(&self) -> &[Param] {
        &self.etas
    }

    pub fn eta_values(&self) -> Vec<f64> {
        self.etas.iter().map(|p| p.value().item()).collect()
    }

    pub fn step_network(&self, t: usize) -> &Apunet {
        &self.steps[if self.cfg.share_weights { 0 } else { t }]
    }

    pub fn sme_network(&self) -> &Apunet {
        &self.sme
    }

    /// ACS images of the central slice through the SME network, RSS-normalized
    /// across coils: `[T, C, H, W]` k-space to `[C, H, W]` maps.
    pub fn estimate_sensitivity_maps(&self, k0: &CVar) -> Result<CVar> {
        let s = k0.shape().to_vec();
        let (t, h, w) = (s[0], s[2], s[3]);
        let cols = acs_window(w, self.cfg.acs_lines);
        ensure!(!cols.is_empty(), Validation, "ACS region is empty (acs_lines = 0)");
        let central = k0.index0((t - 1) / 2);
        let col_mask: Vec<f64> = (0..w).map(|j| if cols.contains(&j) { 1.0 } else { 0.0 }).collect();
        let acs = central.mul_real(&Var::constant(Tensor::new(&[w], col_mask)));
        let energy: f64 = acs.abs2().value().sum();
        ensure!(energy > 0.0, Validation, "ACS region of k0 holds no signal");
        let imgs = acs.ifft2c();
        let refined = CVar::from_channel_pairs(&self.sme.forward(&imgs.to_channel_pairs())?);
        let rss = refined
            .abs2()
            .sum_to(&[1, h, w])
            .add_scalar(self.cfg.sme_eps)
            .sqrt();
        Ok(CVar::new(refined.re.div(&rss), refined.im.div(&rss)))
    }

    /// One reconstructor: `k_t → k_{t+1}`. `mask` broadcasts against
    /// `[T, C, H, W]`.
    pub fn reconstructor_step(&self, t: usize, k_t: &CVar, k0: &CVar, maps: &CVar, mask: &Var) -> Result<CVar> {
        let n = k_t.shape()[0];
        let i_sc = k_t.ifft2c().reduce_coils(maps);
        let x = i_sc.to_channel_pairs();
        let s = x.shape().to_vec();
        let x = x.reshape(&[1, 2 * n, s[2], s[3]]);
        let corr = CVar::from_channel_pairs(&self.step_network(t).correction(&x)?);
        let g_k = corr.expand_coils(maps).fft2c();
        Ok(dc_update_var(k_t, k0, mask, &self.etas[t].var(), &g_k))
    }

    pub fn forward(&self, k0: &CVar, mask: &Var) -> Result<GeneratorOutput> {
        let s = k0.shape();
        ensure!(s.len() == 4, Validation, "generator expects [T, C, H, W] k-space, got {s:?}");
        ensure!(
            s[0] == self.cfg.adjacent,
            Validation,
            "generator configured for {} adjacent slices, got {}",
            self.cfg.adjacent,
            s[0]
        );
        let central = (s[0] - 1) / 2;
        let maps = self.estimate_sensitivity_maps(k0)?;
        let mut k = k0.clone();
        let mut intermediates = Vec::with_capacity(self.cfg.num_reconstructors);
        for t in 0..self.cfg.num_reconstructors {
            k = self.reconstructor_step(t, &k, k0, &maps, mask)?;
            intermediates.push(k.index0(central));
        }
        Ok(GeneratorOutput {
            k_final: k,
            intermediates,
            maps,
        })
    }

    /// Inference on plain arrays without recording a graph.
    pub fn reconstruct(&self, k0: &MultiCoilKSpace, mask: &SamplingMask) -> Result<MultiCoilKSpace> {
        let out = no_grad(|| self.forward(&CVar::constant(&k0.data().clone().into_dyn()), &mask_var(mask)))?;
        let arr = out.k_final.to_array().into_dimensionality().expect("rank 4");
        MultiCoilKSpace::new(arr)
    }
}

/// `[1, 1, H, W]` constant mask.
pub fn mask_var(mask: &SamplingMask) -> Var {
    let (h, w) = mask.dims();
    Var::constant(Tensor::new(&[1, 1, h, w], mask.to_f64().iter().copied().collect()))
}

/// `[T, 1, H, W]` constant from per-slice masks.
pub fn frame_masks_var(masks: &[SamplingMask]) -> Var {
    let (h, w) = masks[0].dims();
    let data = masks.iter().flat_map(|m| m.to_f64().into_iter()).collect();
    Var::constant(Tensor::new(&[masks.len(), 1, h, w], data))
}

/// `k_t − η · M · (k_t − k_0) + G_k` on the tape.
pub fn dc_update_var(k_t: &CVar, k0: &CVar, mask: &Var, eta: &Var, g_k: &CVar) -> CVar {
    let correction = k_t.sub(k0).mul_real(mask).mul_real(eta);
    k_t.sub(&correction).add(g_k)
}

/// `k_t − η · M · (k_t − k_0) + G_k` on plain arrays.
pub fn dc_update(
    k_t: &MultiCoilKSpace,
    k0: &MultiCoilKSpace,
    mask: &SamplingMask,
    eta: f64,
    g_k: &MultiCoilKSpace,
) -> Result<MultiCoilKSpace> {
    let dims = k_t.dims();
    ensure!(
        k0.dims() == dims && g_k.dims() == dims,
        Validation,
        "dc_update shapes differ: {:?}, {:?}, {:?}",
        dims,
        k0.dims(),
        g_k.dims()
    );
    ensure!(
        mask.dims() == (dims.2, dims.3),
        Validation,
        "mask {:?} does not match k-space {}x{}",
        mask.dims(),
        dims.2,
        dims.3
    );
    let m: Array2<f64> = mask.to_f64();
    let mut out: Array4<C64> = k_t.data().clone();
    for (((mut o, a), b), g) in out
        .outer_iter_mut()
        .zip(k0.data().outer_iter())
        .zip(k_t.data().outer_iter())
        .zip(g_k.data().outer_iter())
    {
        for (((mut oc, ac), bc), gc) in o.outer_iter_mut().zip(a.outer_iter()).zip(b.outer_iter()).zip(g.outer_iter()) {
            Zip::from(&mut oc)
                .and(&ac)
                .and(&bc)
                .and(&gc)
                .and(&m)
                .for_each(|o, &k0v, &ktv, &gv, &mv| *o = ktv - (ktv - k0v) * (eta * mv) + gv);
        }
    }
    MultiCoilKSpace::new(out)
}

/// RSS magnitude of the central slice.
pub fn reconstruct_image(k_final: &MultiCoilKSpace) -> Array2<f64> {
    rss_image(k_final.central())
}
