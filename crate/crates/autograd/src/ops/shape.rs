use std::rc::Rc;

use crate::graph::Var;
use crate::tensor::{numel, Tensor};

/// (outer, axis, inner) extents of `shape` around `axis`.
fn split_at_axis(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

impl Var {
    pub fn reshape(&self, shape: &[usize]) -> Var {
        let value = self.value().clone().reshape(shape);
        Var::from_op(value, vec![self.clone()], "reshape", |g, p, _| {
            vec![Some(g.clone().reshape(p[0].shape()))]
        })
    }

    /// Slice `len` entries of `axis` starting at `start`.
    pub fn narrow(&self, axis: usize, start: usize, len: usize) -> Var {
        let shape = self.shape();
        assert!(axis < shape.len() && start + len <= shape[axis], "narrow out of range");
        let (outer, n, inner) = split_at_axis(shape, axis);
        let src = self.value().data();
        let mut data = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let base = (o * n + start) * inner;
            data.extend_from_slice(&src[base..base + len * inner]);
        }
        let mut out_shape = shape.to_vec();
        out_shape[axis] = len;
        let value = Tensor::new(&out_shape, data);
        Var::from_op(value, vec![self.clone()], "narrow", move |g, p, _| {
            let mut full = vec![0.0; p[0].numel()];
            let gd = g.data();
            for o in 0..outer {
                let base = (o * n + start) * inner;
                let gbase = o * len * inner;
                full[base..base + len * inner].copy_from_slice(&gd[gbase..gbase + len * inner]);
            }
            vec![Some(Tensor::new(p[0].shape(), full))]
        })
    }

    /// Concatenate along `axis`; all other extents must agree.
    pub fn concat(vars: &[Var], axis: usize) -> Var {
        assert!(!vars.is_empty(), "concat of nothing");
        let first = vars[0].shape();
        for v in vars {
            assert_eq!(v.shape().len(), first.len(), "concat rank mismatch");
            for (d, (&a, &b)) in v.shape().iter().zip(first).enumerate() {
                assert!(d == axis || a == b, "concat shape mismatch {:?} vs {:?}", v.shape(), first);
            }
        }
        let (outer, _, inner) = split_at_axis(first, axis);
        let sizes: Vec<usize> = vars.iter().map(|v| v.shape()[axis]).collect();
        let total: usize = sizes.iter().sum();
        let mut data = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for (v, &s) in vars.iter().zip(&sizes) {
                let base = o * s * inner;
                data.extend_from_slice(&v.value().data()[base..base + s * inner]);
            }
        }
        let mut shape = first.to_vec();
        shape[axis] = total;
        let value = Tensor::new(&shape, data);
        Var::from_op(value, vars.to_vec(), "concat", move |g, p, _| {
            let gd = g.data();
            let mut parts: Vec<Vec<f64>> = sizes
                .iter()
                .map(|&s| Vec::with_capacity(outer * s * inner))
                .collect();
            let mut off = 0;
            for _ in 0..outer {
                for (part, &s) in parts.iter_mut().zip(&sizes) {
                    part.extend_from_slice(&gd[off..off + s * inner]);
                    off += s * inner;
                }
            }
            parts
                .into_iter()
                .zip(p)
                .map(|(d, v)| v.requires_grad().then(|| Tensor::new(v.shape(), d)))
                .collect()
        })
    }

    /// `out[i] = self.flat[indices[i]]`; the backward pass scatter-adds.
    /// Covers padding, cropping and arbitrary permutations.
    pub fn gather(&self, out_shape: &[usize], indices: Rc<Vec<usize>>) -> Var {
        assert_eq!(numel(out_shape), indices.len(), "gather index count");
        let src = self.value().data();
        let data = indices.iter().map(|&i| src[i]).collect();
        let value = Tensor::new(out_shape, data);
        Var::from_op(value, vec![self.clone()], "gather", move |g, p, _| {
            let mut full = vec![0.0; p[0].numel()];
            for (&i, &gv) in indices.iter().zip(g.data()) {
                full[i] += gv;
            }
            vec![Some(Tensor::new(p[0].shape(), full))]
        })
    }

    /// Reflect-pad the last two axes at the bottom and right edge.
    pub fn pad_reflect_br(&self, pad_h: usize, pad_w: usize) -> Var {
        if pad_h == 0 && pad_w == 0 {
            return self.clone();
        }
        let shape = self.shape();
        let r = shape.len();
        let (h, w) = (shape[r - 2], shape[r - 1]);
        assert!(pad_h < h && pad_w < w, "reflect padding must be smaller than the input");
        let (ho, wo) = (h + pad_h, w + pad_w);
        let planes = numel(&shape[..r - 2]);
        let reflect = |i: usize, n: usize| if i < n { i } else { 2 * (n - 1) - i };
        let mut idx = Vec::with_capacity(planes * ho * wo);
        for pl in 0..planes {
            for i in 0..ho {
                for j in 0..wo {
                    idx.push(pl * h * w + reflect(i, h) * w + reflect(j, w));
                }
            }
        }
        let mut out_shape = shape.to_vec();
        out_shape[r - 2] = ho;
        out_shape[r - 1] = wo;
        self.gather(&out_shape, Rc::new(idx))
    }

    /// Keep the top-left `h × w` window of the last two axes.
    pub fn crop_tl(&self, h: usize, w: usize) -> Var {
        let r = self.shape().len();
        if self.shape()[r - 2] == h && self.shape()[r - 1] == w {
            return self.clone();
        }
        self.narrow(r - 2, 0, h).narrow(r - 1, 0, w)
    }
}
