//! Complex-array foundation shared by every other module: the centered
//! orthonormal FFT, multi-coil k-space stacks, sensitivity maps and the
//! SENSE reduce/expand pair.
//!
//! Undersampling always runs along the last (width, phase-encode) axis.

mod diff;
mod fft;

use std::ops::Range;

use ndarray::{s, Array2, Array3, Array4, ArrayD, ArrayView3, ArrayView4, Axis, Zip};
use num_complex::Complex;
use num_traits::Float;
use rustfft::FftNum;

use crate::error::{ensure, Error, Result};

pub use diff::CVar;
pub use fft::fft2c_planes;

pub type C64 = Complex<f64>;

fn transform<T: FftNum + Float>(x: &ArrayD<Complex<T>>, inverse: bool) -> Result<ArrayD<Complex<T>>> {
    ensure!(x.ndim() >= 2, Validation, "fft2c needs at least 2 dims, got shape {:?}", x.shape());
    ensure!(
        x.iter().all(|v| v.re.is_finite() && v.im.is_finite()),
        Validation,
        "fft2c input contains non-finite values"
    );
    let (h, w) = (x.shape()[x.ndim() - 2], x.shape()[x.ndim() - 1]);
    let mut out = x.as_standard_layout().into_owned();
    fft2c_planes(out.as_slice_mut().expect("standard layout"), h, w, inverse);
    Ok(out)
}

/// Centered orthonormal 2D FFT over the last two axes.
pub fn fft2c<T: FftNum + Float>(x: &ArrayD<Complex<T>>) -> Result<ArrayD<Complex<T>>> {
    transform(x, false)
}

/// Inverse of [`fft2c`].
pub fn ifft2c<T: FftNum + Float>(x: &ArrayD<Complex<T>>) -> Result<ArrayD<Complex<T>>> {
    transform(x, true)
}

fn all_finite<'a>(mut it: impl Iterator<Item = &'a C64>) -> bool {
    it.all(|v| v.re.is_finite() && v.im.is_finite())
}

/// Stack of `T` adjacent k-spaces `[T, C, H, W]`; the middle one is the
/// slice being reconstructed.
#[derive(Clone, Debug, PartialEq)]
pub struct MultiCoilKSpace {
    data: Array4<C64>,
}

impl MultiCoilKSpace {
    pub fn new(data: Array4<C64>) -> Result<Self> {
        let t = data.shape()[0];
        ensure!(t % 2 == 1, Validation, "adjacent count must be odd, got {t}");
        ensure!(all_finite(data.iter()), Validation, "k-space contains non-finite values");
        Ok(Self { data })
    }

    pub fn data(&self) -> &Array4<C64> {
        &self.data
    }

    pub fn into_data(self) -> Array4<C64> {
        self.data
    }

    /// `(T, C, H, W)`.
    pub fn dims(&self) -> (usize, usize, usize, usize) {
        self.data.dim()
    }

    pub fn central_index(&self) -> usize {
        (self.data.shape()[0] - 1) / 2
    }

    /// The `[C, H, W]` slice at [`Self::central_index`].
    pub fn central(&self) -> ArrayView3<'_, C64> {
        self.data.index_axis(Axis(0), self.central_index())
    }
}

/// Per-coil complex sensitivities `[C, H, W]`.
#[derive(Clone, Debug, PartialEq)]
pub struct SensitivityMaps {
    data: Array3<C64>,
}

impl SensitivityMaps {
    /// Wraps maps as given; see [`rss_normalize`] for producing normalized ones.
    pub fn new(data: Array3<C64>) -> Result<Self> {
        ensure!(data.shape()[0] >= 1, Validation, "sensitivity maps need at least one coil");
        ensure!(all_finite(data.iter()), Validation, "sensitivity maps contain non-finite values");
        Ok(Self { data })
    }

    pub fn data(&self) -> &Array3<C64> {
        &self.data
    }

    pub fn coils(&self) -> usize {
        self.data.shape()[0]
    }

    /// `Σ_c |S_c(p)|²` per pixel.
    pub fn energy(&self) -> Array2<f64> {
        self.data.map(|v| v.norm_sqr()).sum_axis(Axis(0))
    }
}

/// Divides every pixel's coil vector by its RSS; pixels whose RSS is below
/// `eps` are zeroed and count as outside the support.
pub fn rss_normalize(data: Array3<C64>, eps: f64) -> Result<SensitivityMaps> {
    let mut data = data;
    let rss = data.map(|v| v.norm_sqr()).sum_axis(Axis(0)).mapv(f64::sqrt);
    for mut coil in data.outer_iter_mut() {
        Zip::from(&mut coil).and(&rss).for_each(|v, &r| {
            *v = if r > eps { *v / r } else { C64::new(0.0, 0.0) };
        });
    }
    SensitivityMaps::new(data)
}

/// Column range of the `acs` centered phase-encode lines of a width-`w`
/// k-space: `[w/2 - ceil(acs/2), … )`, so odd widths lean one line left.
pub fn acs_window(w: usize, acs: usize) -> Range<usize> {
    let acs = acs.min(w);
    let start = (w / 2).saturating_sub(acs.div_ceil(2)).min(w - acs);
    start..start + acs
}

/// The central adjacent slice with everything outside the `acs_lines`
/// centered columns zeroed, as a single-slice stack.
pub fn extract_acs(ksp: &MultiCoilKSpace, acs_lines: usize) -> Result<MultiCoilKSpace> {
    let (_, c, h, w) = ksp.dims();
    ensure!(acs_lines <= w, Validation, "acs_lines {acs_lines} exceeds width {w}");
    let cols = acs_window(w, acs_lines);
    let mut out = Array4::<C64>::zeros((1, c, h, w));
    out.slice_mut(s![0, .., .., cols.clone()])
        .assign(&ksp.central().slice(s![.., .., cols]));
    Ok(MultiCoilKSpace { data: out })
}

/// Elementwise complex conjugate of every map.
pub fn conjugate_symmetry(maps: &SensitivityMaps) -> SensitivityMaps {
    SensitivityMaps {
        data: maps.data.mapv(|v| v.conj()),
    }
}

/// `Σ_c S'_c · I_c` for each adjacent slice: `[T, C, H, W] → [T, H, W]`.
/// `maps_conj` are the already-conjugated maps.
pub fn coil_reduce(img_mc: ArrayView4<'_, C64>, maps_conj: &SensitivityMaps) -> Result<Array3<C64>> {
    let (t, c, h, w) = img_mc.dim();
    ensure!(
        maps_conj.data.dim() == (c, h, w),
        Validation,
        "coil_reduce: image {:?} vs maps {:?}",
        img_mc.shape(),
        maps_conj.data.shape()
    );
    let mut out = Array3::<C64>::zeros((t, h, w));
    for (mut o, frame) in out.outer_iter_mut().zip(img_mc.outer_iter()) {
        for (coil, map) in frame.outer_iter().zip(maps_conj.data.outer_iter()) {
            Zip::from(&mut o).and(&coil).and(&map).for_each(|o, &i, &s| *o += s * i);
        }
    }
    Ok(out)
}

/// Replicates each slice across coils and weights it by `S_c`:
/// `[T, H, W] → [T, C, H, W]`.
pub fn coil_expand(img: ArrayView3<'_, C64>, maps: &SensitivityMaps) -> Result<Array4<C64>> {
    let (t, h, w) = img.dim();
    let c = maps.coils();
    ensure!(
        maps.data.shape()[1..] == [h, w],
        Validation,
        "coil_expand: image {:?} vs maps {:?}",
        img.shape(),
        maps.data.shape()
    );
    let mut out = Array4::<C64>::zeros((t, c, h, w));
    for (mut o, frame) in out.outer_iter_mut().zip(img.outer_iter()) {
        for (mut oc, map) in o.outer_iter_mut().zip(maps.data.outer_iter()) {
            Zip::from(&mut oc).and(&frame).and(&map).for_each(|o, &i, &s| *o = s * i);
        }
    }
    Ok(out)
}

/// Root-sum-of-squares magnitude over coils: `[C, H, W] → [H, W]`.
pub fn coil_combine_rss(img_mc: ArrayView3<'_, C64>) -> Array2<f64> {
    img_mc.map(|v| v.norm_sqr()).sum_axis(Axis(0)).mapv(f64::sqrt)
}

/// Magnitude image of a k-space slice `[C, H, W]`.
pub fn rss_image(ksp: ArrayView3<'_, C64>) -> Array2<f64> {
    let img = ifft2c(&ksp.to_owned().into_dyn()).expect("finite k-space");
    let img = img.into_dimensionality().expect("rank 3");
    coil_combine_rss(img.view())
}

/// Reports whether `maps` are RSS-normalized to within `tol` wherever their
/// energy is not (near) zero.
pub fn is_normalized(maps: &SensitivityMaps, tol: f64) -> bool {
    maps.energy().iter().all(|&e| e < 1e-12 || (e - 1.0).abs() <= tol)
}

impl From<SensitivityMaps> for Array3<C64> {
    fn from(m: SensitivityMaps) -> Self {
        m.data
    }
}

impl TryFrom<Array4<C64>> for MultiCoilKSpace {
    type Error = Error;
    fn try_from(a: Array4<C64>) -> Result<Self> {
        Self::new(a)
    }
}
