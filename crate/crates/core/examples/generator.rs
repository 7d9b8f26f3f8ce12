//! One forward pass of the unrolled generator: estimated coil maps, the
//! per-step intermediates and the final reconstruction.
//!
//! `cargo run --release --example generator`

use cmr_autograd::ParamStore;
use cmr_recon::cascade::{mask_var, reconstruct_image, Generator, GeneratorConfig};
use cmr_recon::kspace::CVar;
use cmr_recon::objectives::Metrics;
use cmr_recon::phantom::{simulate_subject, ContrastTag, PhantomSpec};
use cmr_recon::sampling::{make_mask, Trajectory};
use cmr_recon::trainer::Example;

fn main() -> cmr_recon::Result<()> {
    let rec = simulate_subject(&PhantomSpec::cardiac(64, 64, 6, 4, ContrastTag::T2w, 2))?;
    let cfg = GeneratorConfig::tiny();
    let store = ParamStore::new(0);
    let gen = Generator::new(&store, &cfg)?;
    println!(
        "{} reconstructors, T = {}, {} parameters",
        cfg.num_reconstructors,
        cfg.adjacent,
        store.num_elements()
    );

    let mask = make_mask(Trajectory::Uniform, 64, 64, 4.0, cfg.acs_lines, 0)?;
    let ex = Example::new(&rec, 0, 2, vec![mask.clone()], cfg.adjacent)?;
    let out = gen.forward(&CVar::constant(&ex.k0.data().clone().into_dyn()), &mask_var(&mask))?;
    println!("k_final {:?}, maps {:?}", out.k_final.shape(), out.maps.shape());

    let energy = out.maps.abs2().sum_to(&[1, 64, 64]);
    let covered = energy.value().data().iter().filter(|&&e| (e - 1.0).abs() < 1e-6).count();
    println!("pixels with unit coil energy: {covered}/{}", 64 * 64);

    for (t, k) in out.intermediates.iter().enumerate() {
        let img = k.ifft2c().rss(0).value().data().iter().copied().fold(0.0, f64::max);
        println!("  after step {t}: image peak {img:.4}, eta {:.3}", gen.eta_values()[t]);
    }

    // Untrained networks start from a zero correction, so the output equals
    // the zero-filled input.
    let recon = reconstruct_image(&gen.reconstruct(&ex.k0, &mask)?);
    let m = Metrics::compute(&recon, &ex.gt_image())?;
    let zf = Metrics::compute(&ex.zero_filled_image(), &ex.gt_image())?;
    println!("untrained  {}", m.triple());
    println!("zero-fill  {}", zf.triple());
    Ok(())
}
