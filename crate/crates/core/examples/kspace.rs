//! Centred FFTs, coil sensitivities and coil combination on a simulated
//! phantom frame.
//!
//! `cargo run --example kspace`

use cmr_recon::kspace::{
    coil_combine_rss, coil_expand, coil_reduce, conjugate_symmetry, extract_acs, fft2c, ifft2c, is_normalized,
};
use cmr_recon::phantom::{simulate_coil_maps, simulate_subject, ContrastTag, PhantomSpec};
use ndarray::{Array3, Axis};

fn main() -> cmr_recon::Result<()> {
    let spec = PhantomSpec::cardiac(64, 64, 4, 8, ContrastTag::Cine, 3);
    let rec = simulate_subject(&spec)?;
    let ksp = rec.adjacent(1, 3)?;
    println!("adjacent stack (T, C, H, W) = {:?}", ksp.dims());

    let imgs = ifft2c(&ksp.data().clone().into_dyn())?;
    let energy_k: f64 = ksp.data().iter().map(|v| v.norm_sqr()).sum();
    let energy_i: f64 = imgs.iter().map(|v| v.norm_sqr()).sum();
    println!("Parseval: |k|² = {energy_k:.6e}, |x|² = {energy_i:.6e}");
    let back = fft2c(&imgs)?;
    let err = back.iter().zip(ksp.data().iter()).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
    println!("fft2c(ifft2c(k)) max error {err:.2e}");

    let central = imgs.index_axis(Axis(0), 1).to_owned().into_dimensionality().expect("rank 3");
    let rss = coil_combine_rss(central.view());
    println!("central RSS peak {:.4}", rss.iter().copied().fold(0.0, f64::max));

    // Fold a single image through the maps and back.
    let maps = simulate_coil_maps(64, 64, 8, 3)?;
    println!("maps RSS-normalized: {}", is_normalized(&maps, 1e-9));
    let img = Array3::from_shape_fn((1, 64, 64), |(_, i, j)| cmr_recon::kspace::C64::new(i as f64, j as f64));
    let multi = coil_expand(img.view(), &maps)?;
    let folded = coil_reduce(multi.view(), &conjugate_symmetry(&maps))?;
    let err = folded.iter().zip(img.iter()).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
    println!("reduce(expand(x)) max error {err:.2e}");

    let acs = extract_acs(&ksp, 16)?;
    let nonzero: Vec<usize> = (0..64)
        .filter(|&j| acs.data().index_axis(Axis(3), j).iter().any(|v| v.norm() > 0.0))
        .collect();
    println!(
        "ACS keeps columns {}..={}",
        nonzero.first().unwrap(),
        nonzero.last().unwrap()
    );
    Ok(())
}
