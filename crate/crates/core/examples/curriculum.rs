//! Runs the AF 4 → 8 → 10 curriculum on the tiny preset, then evaluates
//! each stage's checkpoint on the held-out subjects.
//!
//! `cargo run --release --example curriculum -- [out_dir]`

use cmr_recon::config::ExperimentConfig;
use cmr_recon::trainer::{evaluate, run_curriculum, Checkpoint, EvalSpec, Model};

fn main() -> cmr_recon::Result<()> {
    let out = std::env::args().nth(1).map(std::path::PathBuf::from);
    let cfg = ExperimentConfig::tiny();
    let (train, held_out) = cfg.data.split(cfg.data.subjects()?)?;
    println!("{} training subjects, {} held out", train.len(), held_out.len());

    let results = run_curriculum(
        &cfg.curriculum,
        &train,
        &cfg.generator,
        &cfg.discriminator,
        &cfg.train,
        out.as_deref(),
    )?;
    for (stage, r) in cfg.curriculum.stages.iter().zip(&results) {
        let first = r.log.first().map_or(f64::NAN, |l| l.losses.total);
        let last = r.log.last().map_or(f64::NAN, |l| l.losses.total);
        println!(
            "{:5} {:?} from {:?}: {} steps, loss {first:.3} -> {last:.3}",
            r.name, stage.accelerations, stage.init, r.steps
        );
        if let Some(p) = &r.checkpoint_path {
            println!("      saved {}", p.display());
        }
    }

    for (stage, r) in cfg.curriculum.stages.iter().zip(&results) {
        let bytes = r.checkpoint.to_bytes()?;
        let model = Model::from_checkpoint(&Checkpoint::from_bytes(&bytes)?, 0)?;
        let spec = EvalSpec {
            accelerations: stage.accelerations.clone(),
            ..EvalSpec::default()
        };
        let report = evaluate(&model.generator, &held_out, &spec)?;
        for a in report.aggregates().iter().filter(|a| a.contrast == "all") {
            println!(
                "{:5} AF {:>4}: recon {}  zero-filled {}",
                r.name,
                a.acceleration,
                format_triple(a.nmse.mean, a.psnr.mean, a.ssim.mean),
                format_triple(a.zf_nmse.mean, a.zf_psnr.mean, a.zf_ssim.mean)
            );
        }
    }
    Ok(())
}

fn format_triple(nmse: f64, psnr: f64, ssim: f64) -> String {
    format!("{nmse:.4}/{psnr:.2}/{ssim:.4}")
}
