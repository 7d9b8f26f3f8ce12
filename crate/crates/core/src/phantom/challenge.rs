use std::path::Path;

use hdf5::types::{CompoundField, CompoundType, FloatSize, TypeDescriptor};
use hdf5::H5Type;
use ndarray::{s, Array4, ArrayD, Ix4, Ix5};
use num_complex::Complex32;

use super::{ContrastTag, PhantomSpec, SubjectRecord};
use crate::error::{Error, Result};

/// MATLAB v7.3 complex element.
#[derive(Clone, Copy, Debug, Default)]
#[repr(C)]
struct MatComplex {
    real: f32,
    imag: f32,
}

// Written by hand: the derive macro computes field offsets through a null
// pointer, which aborts at runtime on current compilers.
unsafe impl H5Type for MatComplex {
    fn type_descriptor() -> TypeDescriptor {
        let f32_ty = TypeDescriptor::Float(FloatSize::U4);
        TypeDescriptor::Compound(CompoundType {
            fields: vec![
                CompoundField::new("real", f32_ty.clone(), std::mem::offset_of!(MatComplex, real), 0),
                CompoundField::new("imag", f32_ty, std::mem::offset_of!(MatComplex, imag), 1),
            ],
            size: std::mem::size_of::<MatComplex>(),
        })
    }
}

/// Where to find k-space in a challenge-style file.
#[derive(Clone, Debug)]
pub struct ChallengeLayout {
    /// Dataset name, `kspace_full` in the released data.
    pub dataset: String,
    /// Slice to keep when the array carries a slice axis.
    pub slice: usize,
    pub contrast: ContrastTag,
}

impl Default for ChallengeLayout {
    fn default() -> Self {
        Self {
            dataset: "kspace_full".into(),
            slice: 0,
            contrast: ContrastTag::Cine,
        }
    }
}

/// Reads a challenge `.mat` (HDF5) file. MATLAB's `(kx, ky, coil[, slice],
/// frame)` arrays appear reversed on disk as `[frame, (slice,) coil, ky, kx]`;
/// they are mapped to `[frame, coil, kx, ky]` so the phase-encode axis is
/// last.
pub fn read_challenge_subject(path: impl AsRef<Path>, layout: &ChallengeLayout) -> Result<SubjectRecord> {
    let path = path.as_ref();
    let data_err = |msg: String| Error::Data(format!("{}: {msg}", path.display()));
    let file = hdf5::File::open(path).map_err(|e| Error::hdf5(path, e))?;
    let ds = file
        .dataset(&layout.dataset)
        .map_err(|_| data_err(format!("missing array `{}`", layout.dataset)))?;
    let raw: ArrayD<MatComplex> = ds
        .read_dyn()
        .map_err(|e| data_err(format!("array `{}` must hold {{real, imag}} float32: {e}", layout.dataset)))?;
    let arr: Array4<MatComplex> = match raw.ndim() {
        4 => raw.into_dimensionality::<Ix4>().expect("rank 4"),
        5 => {
            let a = raw.into_dimensionality::<Ix5>().expect("rank 5");
            let slices = a.shape()[1];
            if layout.slice >= slices {
                return Err(data_err(format!("slice {} out of range for {slices} slices", layout.slice)));
            }
            a.slice(s![.., layout.slice, .., .., ..]).to_owned()
        }
        n => return Err(data_err(format!("array `{}` has rank {n}, expected 4 or 5", layout.dataset))),
    };
    let arr = arr.permuted_axes([0, 1, 3, 2]);
    let kspace: Array4<Complex32> = arr.mapv(|v| Complex32::new(v.real, v.imag));
    let (f, c, h, w) = kspace.dim();
    if f == 0 || c == 0 || h < 8 || w < 8 {
        return Err(data_err(format!("implausible k-space shape {:?}", kspace.shape())));
    }
    let spec = PhantomSpec {
        height: h,
        width: w,
        frames: f,
        coils: c,
        heart_rate_phase: 0.0,
        ellipses: Vec::new(),
        noise_std: 0.0,
        seed: 0,
        contrast: layout.contrast,
    };
    Ok(SubjectRecord::from_kspace(kspace.as_standard_layout().into_owned(), spec))
}
