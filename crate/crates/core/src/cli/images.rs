use std::io::Write;
use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};

/// The values [`write_pgm16`] stores, as read back by [`read_pgm16`].
pub fn quantize16(img: &Array2<f64>) -> Array2<f64> {
    img.mapv(|v| f64::from(to_u16(v)) / f64::from(u16::MAX))
}

fn to_u16(v: f64) -> u16 {
    (v.clamp(0.0, 1.0) * f64::from(u16::MAX)).round() as u16
}

/// Writes `img` (expected in `[0, 1]`, clamped) as a 16-bit binary PGM
/// (`P5`, maxval 65535, big-endian samples). The `image` PNM encoder only
/// emits 8-bit graymaps.
pub fn write_pgm16(path: &Path, img: &Array2<f64>) -> Result<()> {
    let (h, w) = img.dim();
    let mut buf = format!("P5\n{w} {h}\n65535\n").into_bytes();
    buf.extend(img.iter().flat_map(|&v| to_u16(v).to_be_bytes()));
    let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(&buf).map_err(|e| Error::io(path, e))
}

/// Reads a 16-bit PGM back into `[0, 1]`.
pub fn read_pgm16(path: &Path) -> Result<Array2<f64>> {
    let img = image::ImageReader::open(path)
        .map_err(|e| Error::io(path, e))?
        .with_guessed_format()
        .map_err(|e| Error::io(path, e))?
        .decode()
        .map_err(|e| Error::Data(format!("{}: {e}", path.display())))?
        .into_luma16();
    let (w, h) = img.dimensions();
    let data = img.into_raw().into_iter().map(|v| f64::from(v) / f64::from(u16::MAX)).collect();
    Ok(Array2::from_shape_vec((h as usize, w as usize), data).expect("decoded size"))
}
