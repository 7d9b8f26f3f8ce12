use crate::graph::Var;
use crate::tensor::{broadcast_zip, Tensor};

fn zip3(g: &Tensor, x: &Tensor, y: &Tensor, f: impl Fn(f64, f64, f64) -> f64) -> Tensor {
    let data = g
        .data()
        .iter()
        .zip(x.data())
        .zip(y.data())
        .map(|((&g, &x), &y)| f(g, x, y))
        .collect();
    Tensor::new(g.shape(), data)
}

impl Var {
    /// Elementwise map with derivative `df(x, y)` where `y = f(x)`.
    fn unary(
        &self,
        name: &'static str,
        f: impl Fn(f64) -> f64,
        df: impl Fn(f64, f64) -> f64 + 'static,
    ) -> Var {
        let y = self.value().map(f);
        Var::from_op(y, vec![self.clone()], name, move |g, p, y| {
            vec![Some(zip3(g, p[0].value(), y, |g, x, y| g * df(x, y)))]
        })
    }

    pub fn neg(&self) -> Var {
        self.scale(-1.0)
    }

    pub fn scale(&self, c: f64) -> Var {
        let y = self.value().map(|x| c * x);
        Var::from_op(y, vec![self.clone()], "scale", move |g, _, _| {
            vec![Some(g.map(|g| c * g))]
        })
    }

    pub fn add_scalar(&self, c: f64) -> Var {
        let y = self.value().map(|x| x + c);
        Var::from_op(y, vec![self.clone()], "add_scalar", |g, _, _| {
            vec![Some(g.clone())]
        })
    }

    pub fn exp(&self) -> Var {
        self.unary("exp", f64::exp, |_, y| y)
    }

    pub fn ln(&self) -> Var {
        self.unary("ln", f64::ln, |x, _| 1.0 / x)
    }

    /// Square root with the derivative taken as 0 at 0.
    pub fn sqrt(&self) -> Var {
        self.unary("sqrt", f64::sqrt, |_, y| if y > 0.0 { 0.5 / y } else { 0.0 })
    }

    pub fn sqr(&self) -> Var {
        self.unary("sqr", |x| x * x, |x, _| 2.0 * x)
    }

    pub fn sigmoid(&self) -> Var {
        self.unary("sigmoid", sigmoid, |_, y| y * (1.0 - y))
    }

    pub fn relu(&self) -> Var {
        self.unary("relu", |x| x.max(0.0), |x, _| if x > 0.0 { 1.0 } else { 0.0 })
    }

    pub fn leaky_relu(&self, slope: f64) -> Var {
        self.unary(
            "leaky_relu",
            move |x| if x > 0.0 { x } else { slope * x },
            move |x, _| if x > 0.0 { 1.0 } else { slope },
        )
    }

    pub fn tanh(&self) -> Var {
        self.unary("tanh", f64::tanh, |_, y| 1.0 - y * y)
    }

    fn binary(
        &self,
        other: &Var,
        name: &'static str,
        f: impl Fn(f64, f64) -> f64,
        grads: impl Fn(&Tensor, &Tensor, &Tensor, &Tensor) -> (Option<Tensor>, Option<Tensor>)
            + 'static,
    ) -> Var {
        let y = broadcast_zip(self.value(), other.value(), f);
        Var::from_op(y, vec![self.clone(), other.clone()], name, move |g, p, y| {
            let (ga, gb) = grads(g, p[0].value(), p[1].value(), y);
            vec![
                ga.filter(|_| p[0].requires_grad())
                    .map(|t| t.sum_to(p[0].shape())),
                gb.filter(|_| p[1].requires_grad())
                    .map(|t| t.sum_to(p[1].shape())),
            ]
        })
    }

    pub fn add(&self, other: &Var) -> Var {
        self.binary(other, "add", |a, b| a + b, |g, _, _, _| {
            (Some(g.clone()), Some(g.clone()))
        })
    }

    pub fn sub(&self, other: &Var) -> Var {
        self.binary(other, "sub", |a, b| a - b, |g, _, _, _| {
            (Some(g.clone()), Some(g.map(|x| -x)))
        })
    }

    pub fn mul(&self, other: &Var) -> Var {
        self.binary(other, "mul", |a, b| a * b, |g, a, b, _| {
            (
                Some(broadcast_zip(g, b, |g, b| g * b)),
                Some(broadcast_zip(g, a, |g, a| g * a)),
            )
        })
    }

    pub fn div(&self, other: &Var) -> Var {
        self.binary(other, "div", |a, b| a / b, |g, _, b, y| {
            let ga = broadcast_zip(g, b, |g, b| g / b);
            let gy = g.zip_map(y, |g, y| g * y);
            (Some(ga), Some(broadcast_zip(&gy, b, |gy, b| -gy / b)))
        })
    }

    /// Four-quadrant `atan2(self, x)`; the phase of zero is 0 with zero gradient.
    pub fn atan2(&self, x: &Var) -> Var {
        assert_eq!(self.shape(), x.shape(), "atan2 operands must share a shape");
        let value = self
            .value()
            .zip_map(x.value(), |y, x| if y == 0.0 && x == 0.0 { 0.0 } else { y.atan2(x) });
        Var::from_op(value, vec![self.clone(), x.clone()], "atan2", |g, p, _| {
            let (y, x) = (p[0].value(), p[1].value());
            let r2 = y.zip_map(x, |y, x| y * y + x * x);
            let gy = zip3(g, x, &r2, |g, x, r2| if r2 > 0.0 { g * x / r2 } else { 0.0 });
            let gx = zip3(g, y, &r2, |g, y, r2| if r2 > 0.0 { -g * y / r2 } else { 0.0 });
            vec![Some(gy), Some(gx)]
        })
    }

    /// `sqrt(self² + other²)` with zero gradient at the origin.
    pub fn hypot(&self, other: &Var) -> Var {
        assert_eq!(self.shape(), other.shape(), "hypot operands must share a shape");
        let value = self.value().zip_map(other.value(), f64::hypot);
        Var::from_op(value, vec![self.clone(), other.clone()], "hypot", |g, p, r| {
            let ga = zip3(g, p[0].value(), r, |g, a, r| if r > 0.0 { g * a / r } else { 0.0 });
            let gb = zip3(g, p[1].value(), r, |g, b, r| if r > 0.0 { g * b / r } else { 0.0 });
            vec![Some(ga), Some(gb)]
        })
    }

    pub fn sum_all(&self) -> Var {
        let value = Tensor::scalar(self.value().sum());
        Var::from_op(value, vec![self.clone()], "sum_all", |g, p, _| {
            vec![Some(Tensor::full(p[0].shape(), g.item()))]
        })
    }

    pub fn mean_all(&self) -> Var {
        let n = self.numel() as f64;
        self.sum_all().scale(1.0 / n)
    }

    /// Sum over broadcast axes down to `shape`.
    pub fn sum_to(&self, shape: &[usize]) -> Var {
        let value = self.value().sum_to(shape);
        Var::from_op(value, vec![self.clone()], "sum_to", |g, p, _| {
            vec![Some(g.broadcast_to(p[0].shape()))]
        })
    }

    pub fn broadcast_to(&self, shape: &[usize]) -> Var {
        let value = self.value().broadcast_to(shape);
        Var::from_op(value, vec![self.clone()], "broadcast_to", |g, p, _| {
            vec![Some(g.sum_to(p[0].shape()))]
        })
    }

    /// Mean over the given axes, kept as size-1 axes.
    pub fn mean_keepdim(&self, axes: &[usize]) -> Var {
        let mut shape = self.shape().to_vec();
        let mut count = 1;
        for &a in axes {
            count *= shape[a];
            shape[a] = 1;
        }
        self.sum_to(&shape).scale(1.0 / count as f64)
    }

    /// Mean binary cross-entropy between `sigmoid(self)` and a fixed target,
    /// computed in the numerically stable logits form.
    pub fn bce_with_logits(&self, target: &Tensor) -> Var {
        assert_eq!(self.shape(), target.shape(), "bce target shape");
        let n = self.numel() as f64;
        let loss: f64 = self
            .value()
            .data()
            .iter()
            .zip(target.data())
            .map(|(&x, &t)| x.max(0.0) - x * t + (-x.abs()).exp().ln_1p())
            .sum::<f64>()
            / n;
        let target = target.clone();
        Var::from_op(
            Tensor::scalar(loss),
            vec![self.clone()],
            "bce_with_logits",
            move |g, p, _| {
                let s = g.item() / n;
                vec![Some(
                    p[0].value().zip_map(&target, |x, t| s * (sigmoid(x) - t)),
                )]
            },
        )
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn leaf(shape: &[usize], data: &[f64]) -> Var {
        Var::leaf(Tensor::new(shape, data.to_vec()))
    }

    #[test]
    fn broadcast_mul_grad_reduces() {
        let x = leaf(&[2, 3], &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let w = leaf(&[3], &[1.0, 10.0, 100.0]);
        let g = x.mul(&w).sum_all().backward();
        assert_eq!(g.get(&w).unwrap().data(), &[5.0, 7.0, 9.0]);
        assert_eq!(g.get(&x).unwrap().data(), &[1.0, 10.0, 100.0, 1.0, 10.0, 100.0]);
    }

    #[test]
    fn atan2_zero_convention() {
        let y = leaf(&[2], &[0.0, 1.0]);
        let x = leaf(&[2], &[0.0, 0.0]);
        let p = y.atan2(&x);
        assert_eq!(p.value().data()[0], 0.0);
        let g = p.sum_all().backward();
        assert_eq!(g.get(&y).unwrap().data()[0], 0.0);
        assert_eq!(g.get(&x).unwrap().data()[1], -1.0);
    }

    #[test]
    fn bce_at_zero_logits_is_ln2() {
        let x = leaf(&[4], &[0.0; 4]);
        let l = x.bce_with_logits(&Tensor::zeros(&[4]));
        assert!((l.item() - std::f64::consts::LN_2).abs() < 1e-15);
    }
}
