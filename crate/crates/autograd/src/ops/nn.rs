use crate::gemm::{gemm, MatRef};
use crate::graph::Var;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Conv2dSpec {
    pub stride: usize,
    pub padding: usize,
}

impl Conv2dSpec {
    pub const fn same3x3() -> Self {
        Self { stride: 1, padding: 1 }
    }

    pub fn output_size(&self, input: usize, kernel: usize) -> Option<usize> {
        let padded = input + 2 * self.padding;
        (padded >= kernel).then(|| (padded - kernel) / self.stride + 1)
    }
}

struct ConvGeom {
    ci: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    pad: usize,
    ho: usize,
    wo: usize,
}

impl ConvGeom {
    fn is_pointwise(&self) -> bool {
        self.kh == 1 && self.kw == 1 && self.stride == 1 && self.pad == 0
    }

    /// Output columns `[lo, hi)` whose input column `ow*s + kj - pad` is in range.
    fn valid_cols(&self, kj: usize) -> (usize, usize) {
        let (s, p, w) = (self.stride, self.pad, self.w);
        let lo = if kj >= p { 0 } else { (p - kj).div_ceil(s) };
        let hi = if w + p > kj { ((w + p - kj - 1) / s + 1).min(self.wo) } else { 0 };
        (lo.min(hi), hi)
    }

    fn im2col(&self, x: &[f64], col: &mut [f64]) {
        let (ho, wo) = (self.ho, self.wo);
        let plane = ho * wo;
        for c in 0..self.ci {
            let xc = &x[c * self.h * self.w..(c + 1) * self.h * self.w];
            for ki in 0..self.kh {
                for kj in 0..self.kw {
                    let row = (c * self.kh + ki) * self.kw + kj;
                    let dst = &mut col[row * plane..(row + 1) * plane];
                    let (lo, hi) = self.valid_cols(kj);
                    for oh in 0..ho {
                        let d = &mut dst[oh * wo..(oh + 1) * wo];
                        let ih = (oh * self.stride + ki) as isize - self.pad as isize;
                        if ih < 0 || ih as usize >= self.h {
                            d.fill(0.0);
                            continue;
                        }
                        let src = &xc[ih as usize * self.w..(ih as usize + 1) * self.w];
                        d[..lo].fill(0.0);
                        d[hi..].fill(0.0);
                        if self.stride == 1 {
                            let start = lo + kj - self.pad;
                            d[lo..hi].copy_from_slice(&src[start..start + hi - lo]);
                        } else {
                            for (ow, v) in d.iter_mut().enumerate().take(hi).skip(lo) {
                                *v = src[ow * self.stride + kj - self.pad];
                            }
                        }
                    }
                }
            }
        }
    }

    fn col2im(&self, col: &[f64], x: &mut [f64]) {
        let (ho, wo) = (self.ho, self.wo);
        let plane = ho * wo;
        for c in 0..self.ci {
            let xc = &mut x[c * self.h * self.w..(c + 1) * self.h * self.w];
            for ki in 0..self.kh {
                for kj in 0..self.kw {
                    let row = (c * self.kh + ki) * self.kw + kj;
                    let src = &col[row * plane..(row + 1) * plane];
                    let (lo, hi) = self.valid_cols(kj);
                    for oh in 0..ho {
                        let ih = (oh * self.stride + ki) as isize - self.pad as isize;
                        if ih < 0 || ih as usize >= self.h {
                            continue;
                        }
                        let dst = &mut xc[ih as usize * self.w..(ih as usize + 1) * self.w];
                        let s = &src[oh * wo..(oh + 1) * wo];
                        for ow in lo..hi {
                            dst[ow * self.stride + kj - self.pad] += s[ow];
                        }
                    }
                }
            }
        }
    }
}

impl Var {
    /// 2D matrix product `[m, k] × [k, n]`.
    pub fn matmul(&self, other: &Var) -> Var {
        let (a, b) = (self.value(), other.value());
        let (&[m, k], &[k2, n]) = (a.shape(), b.shape()) else {
            panic!("matmul expects rank-2 operands, got {:?} and {:?}", a.shape(), b.shape());
        };
        assert_eq!(k, k2, "matmul inner dimension");
        let mut out = vec![0.0; m * n];
        gemm(MatRef::new(a.data(), m, k), MatRef::new(b.data(), k, n), &mut out, 0.0);
        Var::from_op(
            Tensor::new(&[m, n], out),
            vec![self.clone(), other.clone()],
            "matmul",
            move |g, p, _| {
                let (a, b) = (p[0].value(), p[1].value());
                let ga = p[0].requires_grad().then(|| {
                    let mut d = vec![0.0; m * k];
                    gemm(MatRef::new(g.data(), m, n), MatRef::new(b.data(), k, n).t(), &mut d, 0.0);
                    Tensor::new(&[m, k], d)
                });
                let gb = p[1].requires_grad().then(|| {
                    let mut d = vec![0.0; k * n];
                    gemm(MatRef::new(a.data(), m, k).t(), MatRef::new(g.data(), m, n), &mut d, 0.0);
                    Tensor::new(&[k, n], d)
                });
                vec![ga, gb]
            },
        )
    }

    /// Cross-correlation of `[N, Ci, H, W]` with `[Co, Ci, kh, kw]` weights,
    /// zero padding, optional per-channel bias.
    pub fn conv2d(&self, weight: &Var, bias: Option<&Var>, spec: Conv2dSpec) -> Var {
        let (n, ci, h, w) = self.value().dims4();
        let (co, wci, kh, kw) = weight.value().dims4();
        assert_eq!(ci, wci, "conv2d input channels {ci} vs weight {wci}");
        let (Some(ho), Some(wo)) = (spec.output_size(h, kh), spec.output_size(w, kw)) else {
            panic!("conv2d kernel {kh}x{kw} larger than padded input {h}x{w}");
        };
        if let Some(b) = bias {
            assert_eq!(b.shape(), &[co], "conv2d bias shape");
        }
        let geom = ConvGeom {
            ci,
            h,
            w,
            kh,
            kw,
            stride: spec.stride,
            pad: spec.padding,
            ho,
            wo,
        };
        let k = ci * kh * kw;
        let plane = ho * wo;
        let x = self.value().data();
        let wd = weight.value().data();
        let mut out = vec![0.0; n * co * plane];
        let mut col = if geom.is_pointwise() { Vec::new() } else { vec![0.0; k * plane] };
        for b in 0..n {
            let xb = &x[b * ci * h * w..(b + 1) * ci * h * w];
            let cols: &[f64] = if geom.is_pointwise() {
                xb
            } else {
                geom.im2col(xb, &mut col);
                &col
            };
            let ob = &mut out[b * co * plane..(b + 1) * co * plane];
            gemm(MatRef::new(wd, co, k), MatRef::new(cols, k, plane), ob, 0.0);
            if let Some(bias) = bias {
                for (c, &bv) in bias.value().data().iter().enumerate() {
                    for v in &mut ob[c * plane..(c + 1) * plane] {
                        *v += bv;
                    }
                }
            }
        }
        let mut parents = vec![self.clone(), weight.clone()];
        if let Some(b) = bias {
            parents.push(b.clone());
        }
        Var::from_op(
            Tensor::new(&[n, co, ho, wo], out),
            parents,
            "conv2d",
            move |g, p, _| {
                let x = p[0].value().data();
                let wd = p[1].value().data();
                let gd = g.data();
                let want_x = p[0].requires_grad();
                let want_w = p[1].requires_grad();
                let want_b = p.len() > 2 && p[2].requires_grad();
                let mut gx = want_x.then(|| vec![0.0; n * ci * h * w]);
                let mut gw = want_w.then(|| vec![0.0; co * k]);
                let mut gb = want_b.then(|| vec![0.0; co]);
                let mut col = vec![0.0; if geom.is_pointwise() { 0 } else { k * plane }];
                let mut dcol = vec![0.0; k * plane];
                for b in 0..n {
                    let gn = &gd[b * co * plane..(b + 1) * co * plane];
                    if let Some(gw) = gw.as_mut() {
                        let xb = &x[b * ci * h * w..(b + 1) * ci * h * w];
                        let cols: &[f64] = if geom.is_pointwise() {
                            xb
                        } else {
                            geom.im2col(xb, &mut col);
                            &col
                        };
                        gemm(MatRef::new(gn, co, plane), MatRef::new(cols, k, plane).t(), gw, 1.0);
                    }
                    if let Some(gx) = gx.as_mut() {
                        let gxb = &mut gx[b * ci * h * w..(b + 1) * ci * h * w];
                        if geom.is_pointwise() {
                            gemm(MatRef::new(wd, co, k).t(), MatRef::new(gn, co, plane), gxb, 0.0);
                        } else {
                            gemm(MatRef::new(wd, co, k).t(), MatRef::new(gn, co, plane), &mut dcol, 0.0);
                            geom.col2im(&dcol, gxb);
                        }
                    }
                    if let Some(gb) = gb.as_mut() {
                        for (c, acc) in gb.iter_mut().enumerate() {
                            *acc += gn[c * plane..(c + 1) * plane].iter().sum::<f64>();
                        }
                    }
                }
                let mut grads = vec![
                    gx.map(|d| Tensor::new(&[n, ci, h, w], d)),
                    gw.map(|d| Tensor::new(&[co, ci, kh, kw], d)),
                ];
                if p.len() > 2 {
                    grads.push(gb.map(|d| Tensor::new(&[co], d)));
                }
                grads
            },
        )
    }

    /// Nearest-neighbour ×2 upsampling of the last two axes of `[N, C, H, W]`.
    pub fn upsample_nearest2x(&self) -> Var {
        let (n, c, h, w) = self.value().dims4();
        let x = self.value().data();
        let (ho, wo) = (2 * h, 2 * w);
        let mut out = vec![0.0; n * c * ho * wo];
        for pl in 0..n * c {
            let src = &x[pl * h * w..(pl + 1) * h * w];
            let dst = &mut out[pl * ho * wo..(pl + 1) * ho * wo];
            for i in 0..ho {
                for j in 0..wo {
                    dst[i * wo + j] = src[(i / 2) * w + j / 2];
                }
            }
        }
        Var::from_op(
            Tensor::new(&[n, c, ho, wo], out),
            vec![self.clone()],
            "upsample_nearest2x",
            move |g, _, _| {
                let gd = g.data();
                let mut gx = vec![0.0; n * c * h * w];
                for pl in 0..n * c {
                    let src = &gd[pl * ho * wo..(pl + 1) * ho * wo];
                    let dst = &mut gx[pl * h * w..(pl + 1) * h * w];
                    for i in 0..ho {
                        for j in 0..wo {
                            dst[(i / 2) * w + j / 2] += src[i * wo + j];
                        }
                    }
                }
                vec![Some(Tensor::new(&[n, c, h, w], gx))]
            },
        )
    }

    /// Bilinear resize of `[N, C, h, w]` to `[N, C, out_h, out_w]` using
    /// half-pixel centres (`align_corners = false`).
    pub fn resize_bilinear(&self, out_h: usize, out_w: usize) -> Var {
        let (n, c, h, w) = self.value().dims4();
        let ry = bilinear_taps(h, out_h);
        let rx = bilinear_taps(w, out_w);
        let x = self.value().data();
        let mut out = vec![0.0; n * c * out_h * out_w];
        for pl in 0..n * c {
            let src = &x[pl * h * w..(pl + 1) * h * w];
            let dst = &mut out[pl * out_h * out_w..(pl + 1) * out_h * out_w];
            for (oy, &(y0, y1, wy)) in ry.iter().enumerate() {
                for (ox, &(x0, x1, wx)) in rx.iter().enumerate() {
                    let top = (1.0 - wx) * src[y0 * w + x0] + wx * src[y0 * w + x1];
                    let bot = (1.0 - wx) * src[y1 * w + x0] + wx * src[y1 * w + x1];
                    dst[oy * out_w + ox] = (1.0 - wy) * top + wy * bot;
                }
            }
        }
        Var::from_op(
            Tensor::new(&[n, c, out_h, out_w], out),
            vec![self.clone()],
            "resize_bilinear",
            move |g, _, _| {
                let gd = g.data();
                let mut gx = vec![0.0; n * c * h * w];
                for pl in 0..n * c {
                    let src = &gd[pl * out_h * out_w..(pl + 1) * out_h * out_w];
                    let dst = &mut gx[pl * h * w..(pl + 1) * h * w];
                    for (oy, &(y0, y1, wy)) in ry.iter().enumerate() {
                        for (ox, &(x0, x1, wx)) in rx.iter().enumerate() {
                            let gv = src[oy * out_w + ox];
                            dst[y0 * w + x0] += gv * (1.0 - wy) * (1.0 - wx);
                            dst[y0 * w + x1] += gv * (1.0 - wy) * wx;
                            dst[y1 * w + x0] += gv * wy * (1.0 - wx);
                            dst[y1 * w + x1] += gv * wy * wx;
                        }
                    }
                }
                vec![Some(Tensor::new(&[n, c, h, w], gx))]
            },
        )
    }

    /// Softmax over the last axis of a rank-2 tensor.
    pub fn softmax_last(&self) -> Var {
        let &[rows, cols] = self.shape() else {
            panic!("softmax_last expects rank 2, got {:?}", self.shape());
        };
        let x = self.value().data();
        let mut out = vec![0.0; rows * cols];
        for r in 0..rows {
            let row = &x[r * cols..(r + 1) * cols];
            let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut z = 0.0;
            for (o, &v) in out[r * cols..(r + 1) * cols].iter_mut().zip(row) {
                *o = (v - m).exp();
                z += *o;
            }
            for o in &mut out[r * cols..(r + 1) * cols] {
                *o /= z;
            }
        }
        Var::from_op(
            Tensor::new(&[rows, cols], out),
            vec![self.clone()],
            "softmax",
            move |g, _, y| {
                let (gd, yd) = (g.data(), y.data());
                let mut gx = vec![0.0; rows * cols];
                for r in 0..rows {
                    let s = r * cols..(r + 1) * cols;
                    let dot: f64 = gd[s.clone()].iter().zip(&yd[s.clone()]).map(|(a, b)| a * b).sum();
                    for i in s {
                        gx[i] = yd[i] * (gd[i] - dot);
                    }
                }
                vec![Some(Tensor::new(&[rows, cols], gx))]
            },
        )
    }
}

/// Per output index: (lower source index, upper source index, upper weight).
fn bilinear_taps(input: usize, output: usize) -> Vec<(usize, usize, f64)> {
    let scale = input as f64 / output as f64;
    (0..output)
        .map(|o| {
            let src = ((o as f64 + 0.5) * scale - 0.5).max(0.0);
            let i0 = (src.floor() as usize).min(input - 1);
            let i1 = (i0 + 1).min(input - 1);
            (i0, i1, src - i0 as f64)
        })
        .collect()
}
