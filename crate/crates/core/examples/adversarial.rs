//! Trains the patch discriminator alone to separate fully sampled images
//! from zero-filled ones.
//!
//! `cargo run --release --example adversarial -- [steps]`

use cmr_autograd::Var;
use cmr_recon::adversarial::{image_var, make_conditioned_input, DiscriminatorConfig};
use cmr_recon::cascade::GeneratorConfig;
use cmr_recon::phantom::{simulate_subject, ContrastTag, PhantomSpec};
use cmr_recon::sampling::{make_mask, Trajectory};
use cmr_recon::trainer::{Example, Model, TrainConfig, Trainer};

fn sigmoid_mean(v: &Var) -> f64 {
    let d = v.value().data();
    d.iter().map(|x| 1.0 / (1.0 + (-x).exp())).sum::<f64>() / d.len() as f64
}

fn main() -> cmr_recon::Result<()> {
    let steps: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(100);
    let disc_cfg = DiscriminatorConfig::tiny();
    for n in [32, 64, 256] {
        println!("input {n}x{n} -> patch map {:?}", disc_cfg.output_size(n));
    }

    let gen_cfg = GeneratorConfig {
        acs_lines: 4,
        ..GeneratorConfig::tiny()
    };
    let model = Model::new(&gen_cfg, &disc_cfg, 0)?;
    let mut trainer = Trainer::new(model, &TrainConfig::default())?;

    let mut pairs = Vec::new();
    for (i, contrast) in ContrastTag::ALL.iter().take(4).enumerate() {
        let rec = simulate_subject(&PhantomSpec::cardiac(32, 32, 2, 2, *contrast, i as u64))?;
        let mask = make_mask(Trajectory::Uniform, 32, 32, 8.0, 4, 0)?;
        let ex = Example::new(&rec, i, 0, vec![mask], gen_cfg.adjacent)?;
        pairs.push((ex.gt_image(), ex.zero_filled_image()));
    }

    for step in 0..steps {
        let (gt, zf) = &pairs[step % pairs.len()];
        let loss = trainer.discriminator_step(gt, zf, zf)?;
        if step % (steps / 5).max(1) == 0 || step + 1 == steps {
            println!("step {step:4}  L_disc {loss:.4}");
        }
    }

    let disc = &trainer.model.discriminator;
    for (i, (gt, zf)) in pairs.iter().enumerate() {
        let zf_v = image_var(zf);
        let real = disc.forward(&make_conditioned_input(&image_var(gt), &zf_v)?)?;
        let fake = disc.forward(&make_conditioned_input(&zf_v, &zf_v)?)?;
        println!(
            "pair {i}: mean sigmoid on real {:.3} (label 0), on zero-filled {:.3} (label 1)",
            sigmoid_mean(&real),
            sigmoid_mean(&fake)
        );
    }
    Ok(())
}
