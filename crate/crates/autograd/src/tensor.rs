use rand::Rng;
use rand_distr::StandardNormal;

/// Dense row-major `f64` array.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

pub(crate) fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

impl Tensor {
    pub fn new(shape: &[usize], data: Vec<f64>) -> Self {
        assert_eq!(
            numel(shape),
            data.len(),
            "tensor data length does not match shape {shape:?}"
        );
        Self {
            shape: shape.to_vec(),
            data,
        }
    }

    pub fn full(shape: &[usize], value: f64) -> Self {
        Self::new(shape, vec![value; numel(shape)])
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, 0.0)
    }

    pub fn ones(shape: &[usize]) -> Self {
        Self::full(shape, 1.0)
    }

    /// Rank-0 tensor.
    pub fn scalar(value: f64) -> Self {
        Self::new(&[], vec![value])
    }

    pub fn randn<R: Rng + ?Sized>(shape: &[usize], std: f64, rng: &mut R) -> Self {
        let data = (0..numel(shape))
            .map(|_| std * rng.sample::<f64, _>(StandardNormal))
            .collect();
        Self::new(shape, data)
    }

    pub fn uniform<R: Rng + ?Sized>(shape: &[usize], lo: f64, hi: f64, rng: &mut R) -> Self {
        let data = (0..numel(shape)).map(|_| rng.random_range(lo..hi)).collect();
        Self::new(shape, data)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    /// Value of a single-element tensor.
    pub fn item(&self) -> f64 {
        assert_eq!(self.numel(), 1, "item() on tensor of shape {:?}", self.shape);
        self.data[0]
    }

    pub fn dims4(&self) -> (usize, usize, usize, usize) {
        match self.shape[..] {
            [a, b, c, d] => (a, b, c, d),
            _ => panic!("expected a rank-4 tensor, got {:?}", self.shape),
        }
    }

    pub fn reshape(mut self, shape: &[usize]) -> Self {
        assert_eq!(
            numel(shape),
            self.data.len(),
            "cannot reshape {:?} into {shape:?}",
            self.shape
        );
        self.shape = shape.to_vec();
        self
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Tensor, f: impl Fn(f64, f64) -> f64) -> Self {
        assert_eq!(self.shape, other.shape, "zip_map shape mismatch");
        Self {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    pub fn add_assign(&mut self, other: &Tensor) {
        assert_eq!(self.shape, other.shape, "add_assign shape mismatch");
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn scale_in_place(&mut self, s: f64) {
        for a in &mut self.data {
            *a *= s;
        }
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn sq_norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// Copies this tensor into a larger shape following numpy broadcasting.
    pub fn broadcast_to(&self, shape: &[usize]) -> Tensor {
        if self.shape == shape {
            return self.clone();
        }
        let strides = broadcast_strides(&self.shape, shape);
        let mut out = Vec::with_capacity(numel(shape));
        for_each_row(shape, &[&strides], |offs, inner, inner_strides| {
            let (o, s) = (offs[0], inner_strides[0]);
            for i in 0..inner {
                out.push(self.data[o + i * s]);
            }
        });
        Tensor::new(shape, out)
    }

    /// Sums a broadcast result back down to `shape` (the adjoint of
    /// [`Tensor::broadcast_to`]).
    pub fn sum_to(&self, shape: &[usize]) -> Tensor {
        if self.shape == shape {
            return self.clone();
        }
        let strides = broadcast_strides(shape, &self.shape);
        let mut out = vec![0.0; numel(shape)];
        let mut src = 0;
        for_each_row(&self.shape, &[&strides], |offs, inner, inner_strides| {
            let (o, s) = (offs[0], inner_strides[0]);
            for i in 0..inner {
                out[o + i * s] += self.data[src];
                src += 1;
            }
        });
        Tensor::new(shape, out)
    }
}

/// Result shape of broadcasting `a` against `b`, or `None` if incompatible.
pub fn broadcast_shape(a: &[usize], b: &[usize]) -> Option<Vec<usize>> {
    let rank = a.len().max(b.len());
    let mut out = vec![0; rank];
    for i in 0..rank {
        let da = if i + a.len() >= rank { a[i + a.len() - rank] } else { 1 };
        let db = if i + b.len() >= rank { b[i + b.len() - rank] } else { 1 };
        out[i] = match (da, db) {
            (x, y) if x == y => x,
            (1, y) => y,
            (x, 1) => x,
            _ => return None,
        };
    }
    Some(out)
}

/// Element strides of `input` laid over `out`; broadcast axes get stride 0.
pub(crate) fn broadcast_strides(input: &[usize], out: &[usize]) -> Vec<usize> {
    let rank = out.len();
    assert!(input.len() <= rank, "cannot broadcast {input:?} to {out:?}");
    let mut strides = vec![0; rank];
    let mut acc = 1;
    for i in (0..input.len()).rev() {
        let o = i + rank - input.len();
        assert!(
            input[i] == out[o] || input[i] == 1,
            "cannot broadcast {input:?} to {out:?}"
        );
        strides[o] = if input[i] == 1 { 0 } else { acc };
        acc *= input[i];
    }
    strides
}

/// Walks `shape` row by row (the last axis is the inner loop), handing the
/// callback each operand's starting offset, the row length and each operand's
/// inner stride.
pub(crate) fn for_each_row(
    shape: &[usize],
    strides: &[&[usize]],
    mut f: impl FnMut(&[usize], usize, &[usize]),
) {
    let total = numel(shape);
    if total == 0 {
        return;
    }
    let rank = shape.len();
    if rank == 0 {
        f(&vec![0; strides.len()], 1, &vec![0; strides.len()]);
        return;
    }
    let inner = shape[rank - 1];
    let inner_strides: Vec<usize> = strides.iter().map(|s| s[rank - 1]).collect();
    let mut idx = vec![0usize; rank - 1];
    let mut offs = vec![0usize; strides.len()];
    for _ in 0..total / inner {
        for (k, s) in strides.iter().enumerate() {
            offs[k] = idx.iter().zip(s.iter()).map(|(i, st)| i * st).sum();
        }
        f(&offs, inner, &inner_strides);
        for d in (0..rank - 1).rev() {
            idx[d] += 1;
            if idx[d] < shape[d] {
                break;
            }
            idx[d] = 0;
        }
    }
}

/// Elementwise binary op with numpy broadcasting.
pub(crate) fn broadcast_zip(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    if a.shape == b.shape {
        return a.zip_map(b, f);
    }
    if b.numel() == 1 && b.rank() <= a.rank() {
        let y = b.data[0];
        return a.map(|x| f(x, y));
    }
    let shape = broadcast_shape(&a.shape, &b.shape)
        .unwrap_or_else(|| panic!("cannot broadcast {:?} with {:?}", a.shape, b.shape));
    let sa = broadcast_strides(&a.shape, &shape);
    let sb = broadcast_strides(&b.shape, &shape);
    let mut out = Vec::with_capacity(numel(&shape));
    for_each_row(&shape, &[&sa, &sb], |offs, inner, is| {
        for i in 0..inner {
            out.push(f(a.data[offs[0] + i * is[0]], b.data[offs[1] + i * is[1]]));
        }
    });
    Tensor::new(&shape, out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn broadcast_shapes() {
        assert_eq!(broadcast_shape(&[2, 3, 4], &[3, 1]), Some(vec![2, 3, 4]));
        assert_eq!(broadcast_shape(&[1, 5], &[4, 1]), Some(vec![4, 5]));
        assert_eq!(broadcast_shape(&[2, 3], &[4]), None);
        assert_eq!(broadcast_shape(&[], &[2, 2]), Some(vec![2, 2]));
    }

    #[test]
    fn broadcast_then_sum_is_adjoint() {
        let small = Tensor::new(&[3, 1], vec![1.0, 2.0, 3.0]);
        let big = small.broadcast_to(&[2, 3, 4]);
        assert_eq!(big.shape(), &[2, 3, 4]);
        assert_eq!(big.data()[4], 2.0);
        let back = big.sum_to(&[3, 1]);
        assert_eq!(back.data(), &[8.0, 16.0, 24.0]);
    }

    #[test]
    fn zip_broadcast_bias() {
        let x = Tensor::new(&[1, 2, 1, 2], vec![1.0, 2.0, 3.0, 4.0]);
        let b = Tensor::new(&[1, 2, 1, 1], vec![10.0, 20.0]);
        let y = broadcast_zip(&x, &b, |a, b| a + b);
        assert_eq!(y.data(), &[11.0, 12.0, 23.0, 24.0]);
    }
}
