use cmr_autograd::{Tensor, Var};
use ndarray::{ArrayD, IxDyn};

use super::{fft2c_planes, C64};

/// Complex tensor on the autodiff tape, held as separate real and
/// imaginary parts of equal shape.
#[derive(Clone)]
pub struct CVar {
    pub re: Var,
    pub im: Var,
}

impl CVar {
    pub fn new(re: Var, im: Var) -> Self {
        assert_eq!(re.shape(), im.shape(), "real/imag shape mismatch");
        Self { re, im }
    }

    fn split(a: &ArrayD<C64>) -> (Tensor, Tensor) {
        let a = a.as_standard_layout();
        let re = a.iter().map(|v| v.re).collect();
        let im = a.iter().map(|v| v.im).collect();
        (Tensor::new(a.shape(), re), Tensor::new(a.shape(), im))
    }

    /// A non-differentiable copy of `a`.
    pub fn constant(a: &ArrayD<C64>) -> Self {
        let (re, im) = Self::split(a);
        Self::new(Var::constant(re), Var::constant(im))
    }

    /// Differentiable leaves holding a copy of `a`.
    pub fn leaf(a: &ArrayD<C64>) -> Self {
        let (re, im) = Self::split(a);
        Self::new(Var::leaf(re), Var::leaf(im))
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::new(Var::constant(Tensor::zeros(shape)), Var::constant(Tensor::zeros(shape)))
    }

    pub fn shape(&self) -> &[usize] {
        self.re.shape()
    }

    pub fn to_array(&self) -> ArrayD<C64> {
        let data = self
            .re
            .value()
            .data()
            .iter()
            .zip(self.im.value().data())
            .map(|(&r, &i)| C64::new(r, i))
            .collect();
        ArrayD::from_shape_vec(IxDyn(self.shape()), data).expect("consistent shape")
    }

    pub fn detach(&self) -> Self {
        Self::new(self.re.detach(), self.im.detach())
    }

    pub fn add(&self, o: &CVar) -> CVar {
        Self::new(self.re.add(&o.re), self.im.add(&o.im))
    }

    pub fn sub(&self, o: &CVar) -> CVar {
        Self::new(self.re.sub(&o.re), self.im.sub(&o.im))
    }

    /// Complex product with broadcasting.
    pub fn mul(&self, o: &CVar) -> CVar {
        let re = self.re.mul(&o.re).sub(&self.im.mul(&o.im));
        let im = self.re.mul(&o.im).add(&self.im.mul(&o.re));
        Self::new(re, im)
    }

    /// Product with a real tensor, broadcasting.
    pub fn mul_real(&self, r: &Var) -> CVar {
        Self::new(self.re.mul(r), self.im.mul(r))
    }

    pub fn scale(&self, c: f64) -> CVar {
        Self::new(self.re.scale(c), self.im.scale(c))
    }

    pub fn conj(&self) -> CVar {
        Self::new(self.re.clone(), self.im.neg())
    }

    pub fn abs2(&self) -> Var {
        self.re.sqr().add(&self.im.sqr())
    }

    pub fn abs(&self) -> Var {
        self.re.hypot(&self.im)
    }

    /// Principal phase, 0 where the value is 0.
    pub fn phase(&self) -> Var {
        self.im.atan2(&self.re)
    }

    pub fn reshape(&self, shape: &[usize]) -> CVar {
        Self::new(self.re.reshape(shape), self.im.reshape(shape))
    }

    pub fn narrow(&self, axis: usize, start: usize, len: usize) -> CVar {
        Self::new(self.re.narrow(axis, start, len), self.im.narrow(axis, start, len))
    }

    /// Entry `i` of the leading axis, with that axis removed.
    pub fn index0(&self, i: usize) -> CVar {
        let shape = self.shape()[1..].to_vec();
        self.narrow(0, i, 1).reshape(&shape)
    }

    /// Sum over `axis`, removing it.
    pub fn sum_axis(&self, axis: usize) -> CVar {
        let mut keep = self.shape().to_vec();
        keep[axis] = 1;
        let mut out = keep.clone();
        out.remove(axis);
        Self::new(
            self.re.sum_to(&keep).reshape(&out),
            self.im.sum_to(&keep).reshape(&out),
        )
    }

    pub fn fft2c(&self) -> CVar {
        centered(self, false)
    }

    pub fn ifft2c(&self) -> CVar {
        centered(self, true)
    }

    /// `Σ_c conj(S_c) · I_c`: `[T, C, H, W]` with maps `[C, H, W]` to `[T, H, W]`.
    pub fn reduce_coils(&self, maps: &CVar) -> CVar {
        self.mul(&maps.conj()).sum_axis(1)
    }

    /// `[T, H, W]` with maps `[C, H, W]` to `[T, C, H, W]`.
    pub fn expand_coils(&self, maps: &CVar) -> CVar {
        let s = self.shape();
        self.reshape(&[s[0], 1, s[1], s[2]]).mul(maps)
    }

    /// Root-sum-of-squares over `axis`, removing it.
    pub fn rss(&self, axis: usize) -> Var {
        let mut keep = self.shape().to_vec();
        keep[axis] = 1;
        let mut out = keep.clone();
        out.remove(axis);
        self.abs2().sum_to(&keep).reshape(&out).sqrt()
    }

    /// `[N, H, W]` to real channels `[N, 2, H, W]` (real part first).
    pub fn to_channel_pairs(&self) -> Var {
        let s = self.shape();
        let one = [s[0], 1, s[1], s[2]];
        Var::concat(&[self.re.reshape(&one), self.im.reshape(&one)], 1)
    }

    /// Inverse of [`Self::to_channel_pairs`]; accepts `[N, 2, H, W]` or the
    /// flattened `[1, 2N, H, W]` layout.
    pub fn from_channel_pairs(x: &Var) -> CVar {
        let s = x.shape();
        let (n, h, w) = (s[0] * s[1] / 2, s[2], s[3]);
        let x = x.reshape(&[n, 2, h, w]);
        Self::new(
            x.narrow(1, 0, 1).reshape(&[n, h, w]),
            x.narrow(1, 1, 1).reshape(&[n, h, w]),
        )
    }
}

fn apply_packed(t: &Tensor, inverse: bool) -> Tensor {
    let s = t.shape();
    let (h, w) = (s[s.len() - 2], s[s.len() - 1]);
    let n = t.numel() / 2;
    let d = t.data();
    let mut buf: Vec<C64> = (0..n).map(|i| C64::new(d[i], d[n + i])).collect();
    fft2c_planes(&mut buf, h, w, inverse);
    let mut out = vec![0.0; 2 * n];
    for (i, v) in buf.iter().enumerate() {
        out[i] = v.re;
        out[n + i] = v.im;
    }
    Tensor::new(s, out)
}

/// The transform is unitary, so its vector-Jacobian product is the
/// opposite-direction transform of the incoming gradient.
fn centered(x: &CVar, inverse: bool) -> CVar {
    let shape = x.shape().to_vec();
    let mut one = vec![1];
    one.extend_from_slice(&shape);
    let packed = Var::concat(&[x.re.reshape(&one), x.im.reshape(&one)], 0);
    let value = apply_packed(packed.value(), inverse);
    let name = if inverse { "ifft2c" } else { "fft2c" };
    let out = Var::from_op(value, vec![packed], name, move |g, _, _| {
        vec![Some(apply_packed(g, !inverse))]
    });
    CVar::new(
        out.narrow(0, 0, 1).reshape(&shape),
        out.narrow(0, 1, 1).reshape(&shape),
    )
}
