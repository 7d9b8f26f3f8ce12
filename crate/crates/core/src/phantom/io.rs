use std::path::Path;

use hdf5::types::VarLenUnicode;
use ndarray::{Array3, Array4, Array5, Axis};
use num_complex::Complex32;

use super::{ContrastTag, PhantomSpec, SubjectRecord};
use crate::error::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;

fn h5<T>(path: &Path, r: hdf5::Result<T>) -> Result<T> {
    r.map_err(|e| Error::hdf5(path, e))
}

fn text(s: &str) -> VarLenUnicode {
    s.parse().expect("no interior NUL")
}

/// Writes `rec` as one HDF5 file: `kspace_full` as float32 `[F, C, H, W, 2]`
/// (real, imag), `image_rss` as float32 `[F, H, W]`, plus `format_version`,
/// `contrast_tag`, `seed` and the JSON `phantom_spec` attributes.
pub fn write_subject(rec: &SubjectRecord, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let (f, c, h, w) = rec.dims();
    let mut pairs = Array5::<f32>::zeros((f, c, h, w, 2));
    for (mut dst, src) in pairs.lanes_mut(Axis(4)).into_iter().zip(rec.kspace_full.iter()) {
        dst[0] = src.re;
        dst[1] = src.im;
    }
    let file = h5(path, hdf5::File::create(path))?;
    h5(path, file.new_dataset_builder().with_data(&pairs).create("kspace_full"))?;
    h5(path, file.new_dataset_builder().with_data(&rec.image_rss).create("image_rss"))?;
    h5(path, file.new_attr::<u32>().create("format_version").and_then(|a| a.write_scalar(&FORMAT_VERSION)))?;
    h5(path, file.new_attr::<u64>().create("seed").and_then(|a| a.write_scalar(&rec.spec.seed)))?;
    let tag = text(&rec.contrast.to_string());
    h5(path, file.new_attr::<VarLenUnicode>().create("contrast_tag").and_then(|a| a.write_scalar(&tag)))?;
    let spec = text(&serde_json::to_string(&rec.spec).expect("spec serializes"));
    h5(path, file.new_attr::<VarLenUnicode>().create("phantom_spec").and_then(|a| a.write_scalar(&spec)))?;
    h5(path, file.close())
}

/// Reads a file written by [`write_subject`], checking version, array
/// presence and shape agreement.
pub fn read_subject(path: impl AsRef<Path>) -> Result<SubjectRecord> {
    let path = path.as_ref();
    hdf5::silence_errors(true);
    let data_err = |msg: String| Error::Data(format!("{}: {msg}", path.display()));
    let file = h5(path, hdf5::File::open(path))?;
    let attr = |name: &str| {
        file.attr(name)
            .map_err(|_| data_err(format!("missing attribute `{name}`")))
    };
    let version: u32 = h5(path, attr("format_version")?.read_scalar())?;
    if version != FORMAT_VERSION {
        return Err(data_err(format!(
            "format_version {version} is not supported (expected {FORMAT_VERSION})"
        )));
    }
    let dataset = |name: &str| {
        file.dataset(name)
            .map_err(|_| data_err(format!("missing array `{name}`")))
    };
    let pairs: Array5<f32> = dataset("kspace_full")?
        .read()
        .map_err(|e| data_err(format!("array `kspace_full` must be float32 [F, C, H, W, 2]: {e}")))?;
    let image_rss: Array3<f32> = dataset("image_rss")?
        .read()
        .map_err(|e| data_err(format!("array `image_rss` must be float32 [F, H, W]: {e}")))?;
    let (f, c, h, w, two) = pairs.dim();
    if two != 2 {
        return Err(data_err(format!("`kspace_full` trailing axis is {two}, expected 2")));
    }
    if image_rss.dim() != (f, h, w) {
        return Err(data_err(format!(
            "`image_rss` shape {:?} does not match kspace_full frames/size {:?}",
            image_rss.shape(),
            [f, h, w]
        )));
    }
    let tag: VarLenUnicode = h5(path, attr("contrast_tag")?.read_scalar())?;
    let contrast: ContrastTag = tag.as_str().parse().map_err(data_err)?;
    let seed: u64 = h5(path, attr("seed")?.read_scalar())?;
    let spec_json: VarLenUnicode = h5(path, attr("phantom_spec")?.read_scalar())?;
    let spec: PhantomSpec = serde_json::from_str(spec_json.as_str())
        .map_err(|e| data_err(format!("attribute `phantom_spec` is not a valid spec: {e}")))?;
    if (spec.frames, spec.coils, spec.height, spec.width) != (f, c, h, w) || spec.seed != seed || spec.contrast != contrast {
        return Err(data_err("header attributes disagree with array shapes".into()));
    }
    let mut kspace_full = Array4::<Complex32>::zeros((f, c, h, w));
    for (dst, src) in kspace_full.iter_mut().zip(pairs.lanes(Axis(4))) {
        *dst = Complex32::new(src[0], src[1]);
    }
    Ok(SubjectRecord {
        kspace_full,
        image_rss,
        spec,
        contrast,
    })
}
