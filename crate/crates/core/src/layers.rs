//! Parameterised building blocks shared by the networks.

use cmr_autograd::{Conv2dSpec, Init, Param, ParamPath, Var};

pub(crate) const LEAKY_SLOPE: f64 = 0.2;

pub(crate) struct Conv {
    weight: Param,
    bias: Param,
    spec: Conv2dSpec,
}

impl Conv {
    pub fn new(p: &ParamPath, ci: usize, co: usize, k: usize, stride: usize, padding: usize) -> Self {
        let fan_in = ci * k * k;
        Self {
            weight: p.param("weight", &[co, ci, k, k], Init::FanIn(fan_in)),
            bias: p.param("bias", &[co], Init::FanIn(fan_in)),
            spec: Conv2dSpec { stride, padding },
        }
    }

    pub fn same3(p: &ParamPath, ci: usize, co: usize) -> Self {
        Self::new(p, ci, co, 3, 1, 1)
    }

    /// 3×3 same-size conv starting at zero.
    pub fn zeroed3(p: &ParamPath, ci: usize, co: usize) -> Self {
        Self {
            weight: p.param("weight", &[co, ci, 3, 3], Init::Zeros),
            bias: p.param("bias", &[co], Init::Zeros),
            spec: Conv2dSpec { stride: 1, padding: 1 },
        }
    }

    pub fn forward(&self, x: &Var) -> Var {
        x.conv2d(&self.weight.var(), Some(&self.bias.var()), self.spec)
    }
}

/// `x · W + b` on `[N, in]` rows.
pub(crate) struct Linear {
    weight: Param,
    bias: Param,
}

impl Linear {
    pub fn new(p: &ParamPath, i: usize, o: usize) -> Self {
        Self {
            weight: p.param("weight", &[i, o], Init::FanIn(i)),
            bias: p.param("bias", &[o], Init::FanIn(i)),
        }
    }

    pub fn forward(&self, x: &Var) -> Var {
        x.matmul(&self.weight.var()).add(&self.bias.var())
    }

    pub fn bias(&self) -> &Param {
        &self.bias
    }
}

/// Per-sample, per-channel normalisation over the spatial axes, no affine.
pub(crate) fn instance_norm(x: &Var) -> Var {
    let mean = x.mean_keepdim(&[2, 3]);
    let centred = x.sub(&mean);
    let var = centred.sqr().mean_keepdim(&[2, 3]);
    centred.div(&var.add_scalar(1e-5).sqrt())
}

/// `[N, C, H, W] → [N, C]` global average.
pub(crate) fn global_pool(x: &Var) -> Var {
    let s = x.shape();
    let (n, c) = (s[0], s[1]);
    x.mean_keepdim(&[2, 3]).reshape(&[n, c])
}
