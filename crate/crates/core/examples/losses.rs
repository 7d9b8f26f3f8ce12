//! The training objectives and evaluation metrics on a reconstruction
//! degraded step by step.
//!
//! `cargo run --example losses`

use cmr_autograd::{Tensor, Var};
use cmr_recon::kspace::CVar;
use cmr_recon::objectives::{
    discriminator_loss, generator_adversarial_loss, generator_loss, physical_loss, step_loss, Metrics, PhaseMode,
};
use cmr_recon::phantom::{simulate_subject, ContrastTag, PhantomSpec};
use cmr_recon::sampling::{make_mask, Trajectory};
use cmr_recon::trainer::Example;

fn main() -> cmr_recon::Result<()> {
    let rec = simulate_subject(&PhantomSpec::cardiac(48, 48, 4, 4, ContrastTag::Cine, 5))?;
    let gt_ex = Example::new(&rec, 0, 1, vec![make_mask(Trajectory::Uniform, 48, 48, 1.0, 0, 0)?], 1)?;
    let gt = gt_ex.gt_central();
    let gt_img = gt_ex.gt_image();

    println!("  AF   phys/raw phys/wrap    L_phys   L_ssim  NMSE/PSNR/SSIM");
    for af in [2.0, 4.0, 8.0, 16.0] {
        let mask = make_mask(Trajectory::Uniform, 48, 48, af, 6, 0)?;
        let ex = Example::new(&rec, 0, 1, vec![mask], 1)?;
        // Undersampled k-space in the ground truth's units.
        let pred = CVar::constant(&ex.k0.data().mapv(|v| v * ex.scale / gt_ex.scale).into_dyn()).index0(0);
        let raw = physical_loss(&pred, &gt, PhaseMode::Raw)?.item();
        let wrapped = physical_loss(&pred, &gt, PhaseMode::Wrapped)?.item();
        let parts = step_loss(&pred, &gt, PhaseMode::Wrapped)?;
        let img = pred.ifft2c().rss(0);
        let img = ndarray::Array2::from_shape_vec((48, 48), img.value().data().to_vec()).expect("48x48");
        let m = Metrics::compute(&img, &gt_img)?;
        println!(
            "{af:>4}  {raw:>9.4} {wrapped:>9.4}  {:>8.4} {:>8.4}  {}",
            parts.physical.item(),
            parts.ssim.item(),
            m.triple()
        );
    }

    let logits = Var::constant(Tensor::new(&[1, 1, 2, 2], vec![3.0, -1.0, 0.5, 2.0]));
    let fake = logits.neg();
    println!("L_disc on confident logits {:.4}", discriminator_loss(&logits, &fake).item());
    let adv = generator_adversarial_loss(&fake);
    let steps = [Var::scalar(0.3), Var::scalar(0.2)];
    for lambda in [0.0, 1.0, 2.0] {
        println!(
            "lambda {lambda}: L_adv {:.4}, L_G {:.4}",
            adv.item(),
            generator_loss(&steps, &adv, lambda)?.item()
        );
    }
    Ok(())
}
