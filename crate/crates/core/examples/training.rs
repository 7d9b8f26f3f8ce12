//! Trains the tiny generator on a few phantoms and compares held-out
//! reconstructions with the zero-filled baseline.
//!
//! `cargo run --release --example training -- [steps] [seed] [raw|wrapped]`

use cmr_recon::adversarial::DiscriminatorConfig;
use cmr_recon::cascade::GeneratorConfig;
use cmr_recon::objectives::PhaseMode;
use cmr_recon::phantom::{simulate_subject, ContrastTag, PhantomSpec};
use cmr_recon::sampling::Trajectory;
use cmr_recon::trainer::{evaluate, train_stage, EvalSpec, Model, Stage, StageInit, Subject, TrainConfig, Trainer};

fn subject(i: u64, seed: u64) -> cmr_recon::Result<Subject> {
    let contrast = ContrastTag::ALL[i as usize % ContrastTag::ALL.len()];
    let spec = PhantomSpec::cardiac(64, 64, 8, 4, contrast, seed * 100 + i);
    Ok(Subject {
        name: format!("s{i}"),
        record: simulate_subject(&spec)?,
    })
}

fn main() -> cmr_recon::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let steps: usize = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(100);
    let seed: u64 = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(0);
    let phase_mode = match args.get(3).map(String::as_str) {
        Some("raw") => PhaseMode::Raw,
        _ => PhaseMode::Wrapped,
    };

    let train = (0..4).map(|i| subject(i, seed)).collect::<cmr_recon::Result<Vec<_>>>()?;
    let held_out = (4..6).map(|i| subject(i, seed)).collect::<cmr_recon::Result<Vec<_>>>()?;

    let cfg = TrainConfig {
        epochs: 1,
        steps_per_epoch: Some(steps),
        seed,
        phase_mode,
        ..TrainConfig::default()
    };
    let model = Model::new(&GeneratorConfig::tiny(), &DiscriminatorConfig::tiny(), seed)?;
    let mut trainer = Trainer::new(model, &cfg)?;
    let stage = Stage::new("af04", &[Trajectory::Uniform], &[4.0], StageInit::Fresh);
    let t0 = std::time::Instant::now();
    let log = train_stage(&mut trainer, &stage, &train, seed, None)?;
    for r in log.iter().step_by((steps / 10).max(1)) {
        println!(
            "step {:4}  total {:.4}  steps {:?}  adv {:.3}  disc {:.3}  eta {:?}",
            r.step,
            r.losses.total,
            r.losses.step.iter().map(|v| format!("{v:.4}")).collect::<Vec<_>>(),
            r.losses.adversarial,
            r.losses.discriminator.last().copied().unwrap_or(f64::NAN),
            r.eta.iter().map(|v| format!("{v:.3}")).collect::<Vec<_>>()
        );
    }
    println!("trained {steps} steps in {:.1}s", t0.elapsed().as_secs_f64());

    let spec = EvalSpec {
        trajectories: vec![Trajectory::Uniform],
        accelerations: vec![4.0],
        frames: Some(vec![0, 3, 6]),
        seed: 7,
    };
    let report = evaluate(&trainer.model.generator, &held_out, &spec)?;
    for a in report.aggregates() {
        println!(
            "{:8} {:8} AF {:>4}  recon {:.4}/{:.2}/{:.4}  zero-filled {:.4}/{:.2}/{:.4}",
            a.contrast, a.trajectory, a.acceleration, a.nmse.mean, a.psnr.mean, a.ssim.mean,
            a.zf_nmse.mean, a.zf_psnr.mean, a.zf_ssim.mean
        );
    }
    Ok(())
}
