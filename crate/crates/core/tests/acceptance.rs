//! Acceptance suite: one PASS/FAIL line per criterion. Runs without the
//! libtest harness so the summary is always printed.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use cmr_autograd::gradcheck::{check, GradCheckOptions};
use cmr_autograd::{no_grad, ParamStore, Tensor, Var};
use cmr_recon::adversarial::{image_var, make_conditioned_input, DiscriminatorConfig};
use cmr_recon::apunet::{Apunet, ApunetConfig, PromptConfig};
use cmr_recon::cascade::{dc_update, Generator, GeneratorConfig};
use cmr_recon::config::ExperimentConfig;
use cmr_recon::kspace::{
    coil_expand, coil_reduce, conjugate_symmetry, fft2c, ifft2c, rss_image, CVar, MultiCoilKSpace, C64,
};
use cmr_recon::objectives::{
    discriminator_loss, gaussian_window, generator_loss, metric_nmse, metric_psnr, metric_ssim, physical_loss,
    ssim_loss, step_loss, PhaseMode, SSIM_K1, SSIM_K2, SSIM_WINDOW,
};
use cmr_recon::phantom::simulate_coil_maps;
use cmr_recon::sampling::{make_mask, SamplingMask, Trajectory};
use cmr_recon::trainer::{
    evaluate, run_curriculum, stepwise_loss, train_stage, CurriculumSchedule, DiscUpdates, EvalSpec, Example,
    Model, Stage, StageInit, Subject, TrainConfig, Trainer,
};
use ndarray::{Array2, Array3, Array4, ArrayD, IxDyn};
use num_complex::Complex32;
use rand::Rng;

type Outcome = Result<String, String>;

macro_rules! req {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

const SEEDS: [u64; 5] = [0, 1, 2, 3, 4];
const AFS: [f64; 7] = [4.0, 8.0, 10.0, 12.0, 16.0, 20.0, 24.0];
const GRAD_TOL: f64 = 1e-4;

fn random_c64(shape: &[usize], seed: u64) -> ArrayD<C64> {
    let mut r = common::rng(seed);
    ArrayD::from_shape_fn(IxDyn(shape), |_| C64::new(r.random_range(-1.0..1.0), r.random_range(-1.0..1.0)))
}

fn max_err(a: impl IntoIterator<Item = C64>, b: impl IntoIterator<Item = C64>) -> f64 {
    a.into_iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

fn criterion1() -> Outcome {
    let x = random_c64(&[2, 3, 16, 12], 1);
    let back = ifft2c(&fft2c(&x).unwrap()).unwrap();
    let rt64 = max_err(back.iter().copied(), x.iter().copied());
    let e_x: f64 = x.iter().map(|v| v.norm_sqr()).sum();
    let e_k: f64 = fft2c(&x).unwrap().iter().map(|v| v.norm_sqr()).sum();
    let pv64 = (e_x - e_k).abs() / e_x;
    req!(rt64 < 1e-12 && pv64 < 1e-12, "double: roundtrip {rt64:.2e}, Parseval {pv64:.2e}");

    let x32 = x.mapv(|v| Complex32::new(v.re as f32, v.im as f32));
    let k32 = fft2c(&x32).unwrap();
    let back32 = ifft2c(&k32).unwrap();
    let rt32 = back32.iter().zip(&x32).map(|(a, b)| (a - b).norm()).fold(0.0f32, f32::max) as f64;
    let e32: f64 = x32.iter().map(|v| v.norm_sqr() as f64).sum();
    let k32e: f64 = k32.iter().map(|v| v.norm_sqr() as f64).sum();
    let pv32 = (e32 - k32e).abs() / e32;
    req!(rt32 < 1e-6 && pv32 < 1e-6, "single: roundtrip {rt32:.2e}, Parseval {pv32:.2e}");

    let maps = simulate_coil_maps(32, 32, 8, 3).unwrap();
    let img: Array3<C64> = random_c64(&[2, 32, 32], 4).into_dimensionality().unwrap();
    let expanded = coil_expand(img.view(), &maps).unwrap();
    let reduced = coil_reduce(expanded.view(), &conjugate_symmetry(&maps)).unwrap();
    let pair = max_err(reduced.iter().copied(), img.iter().copied());
    req!(pair < 1e-12, "reduce(expand(x)) deviates by {pair:.2e}");

    let k: Array3<C64> = random_c64(&[4, 10, 9], 5).into_dimensionality().unwrap();
    let imgs = ifft2c(&k.clone().into_dyn()).unwrap();
    let mut oracle = Array2::<f64>::zeros((10, 9));
    for ((i, j), o) in oracle.indexed_iter_mut() {
        let mut s = 0.0;
        for c in 0..4 {
            s += imgs[[c, i, j]].norm_sqr();
        }
        *o = s.sqrt();
    }
    let rss = rss_image(k.view());
    let rss_err = rss.iter().zip(&oracle).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    req!(rss_err < 1e-12, "RSS differs from loop oracle by {rss_err:.2e}");

    let mut worst: f64 = 0.0;
    for traj in Trajectory::ALL {
        for af in AFS {
            let a = make_mask(traj, 128, 128, af, 0, 21).unwrap();
            let b = make_mask(traj, 128, 128, af, 0, 21).unwrap();
            req!(a == b, "{traj} AF {af}: same seed gave different masks");
            let dev = (a.achieved_acceleration() / af - 1.0).abs();
            worst = worst.max(dev);
            req!(dev <= 0.15, "{traj} AF {af}: achieved {:.2}", a.achieved_acceleration());
        }
    }
    Ok(format!(
        "roundtrip f64 {rt64:.1e}, f32 {rt32:.1e}; reduce/expand {pair:.1e}; RSS {rss_err:.1e}; worst AF deviation {:.1}% over 21 masks",
        100.0 * worst
    ))
}

fn criterion2() -> Outcome {
    let rnd = |seed| MultiCoilKSpace::new(random_c64(&[3, 2, 16, 16], seed).into_dimensionality().unwrap()).unwrap();
    let (kt, k0) = (rnd(1), rnd(2));
    let zero = MultiCoilKSpace::new(Array4::zeros((3, 2, 16, 16))).unwrap();
    let mask = make_mask(Trajectory::Gaussian, 16, 16, 4.0, 4, 3).unwrap();
    req!(dc_update(&kt, &k0, &mask, 0.0, &zero).unwrap() == kt, "η = 0 must return k_t");
    let one = dc_update(&kt, &k0, &mask, 1.0, &zero).unwrap();
    for ((idx, &o), (&a, &b)) in one.data().indexed_iter().zip(kt.data().iter().zip(k0.data())) {
        let want = if mask.data()[[idx.2, idx.3]] == 1 { b } else { a };
        req!(o == want, "η = 1 mismatch at {idx:?}");
    }

    let subject = common::phantom_subject(0, 5, 32, 5, 3);
    let kg = subject.record.adjacent(2, 5).unwrap();
    let store = ParamStore::new(0);
    let gen = Generator::new(&store, &GeneratorConfig::default()).unwrap();
    req!(gen.etas().len() == 12, "default generator has {} steps", gen.etas().len());
    store.zero_all();
    for eta in gen.etas() {
        eta.set(Tensor::new(&[1], vec![1.0]));
    }
    let out = gen.reconstruct(&kg, &SamplingMask::full(32, 32)).unwrap();
    let scale = kg.data().iter().map(|v| v.norm()).fold(0.0, f64::max);
    let dev = max_err(out.data().iter().copied(), kg.data().iter().copied()) / scale;
    req!(dev < 1e-12, "fixed point drifted by {dev:.2e} (relative)");
    Ok(format!("closed forms exact; 12-step fixed point relative drift {dev:.1e}"))
}

fn gradcheck_max(store: &ParamStore, loss: impl Fn() -> Var, max_entries: usize) -> (f64, String) {
    let report = check(
        &store.entries(),
        loss,
        GradCheckOptions {
            max_entries,
            ..GradCheckOptions::default()
        },
    );
    let worst = report.worst().unwrap();
    (report.max_rel_error(), worst.name.clone())
}

fn criterion3() -> Outcome {
    let mut parts = Vec::new();
    for mode in [PhaseMode::Raw, PhaseMode::Wrapped] {
        let store = ParamStore::new(1);
        let init = cmr_autograd::Init::Normal { std: 1.0 };
        let re = store.root().param("re", &[2, 4, 4], init);
        let im = store.root().param("im", &[2, 4, 4], init);
        let gt = CVar::constant(&random_c64(&[2, 4, 4], 2));
        let (e, w) = gradcheck_max(&store, || physical_loss(&CVar::new(re.var(), im.var()), &gt, mode).unwrap(), 12);
        req!(e < GRAD_TOL, "physical_loss {mode:?}: {w} {e:.2e}");
        parts.push(format!("physical {mode:?} {e:.1e}"));
    }

    let store = ParamStore::new(3);
    let pred = store.root().param("pred", &[12, 10], cmr_autograd::Init::Uniform { lo: 0.0, hi: 1.0 });
    let gt = Var::constant(Tensor::uniform(&[12, 10], 0.0, 1.0, &mut common::rng(4)));
    let (e, _) = gradcheck_max(&store, || ssim_loss(&pred.var(), &gt).unwrap(), 120);
    req!(e < GRAD_TOL, "ssim_loss: {e:.2e}");
    parts.push(format!("ssim {e:.1e}"));

    let cfg = ApunetConfig {
        prompt: PromptConfig {
            components: 3,
            size: 3,
            encoder_prompts: true,
        },
        ..ApunetConfig::tiny().with_channels(4)
    };
    let store = ParamStore::new(5);
    let net = Apunet::new(&store.root().pp("apunet"), &cfg).unwrap();
    common::randomize(&store, 6, 0.2, &[]);
    let mut r = common::rng(7);
    let x = Var::constant(Tensor::randn(&[1, 4, 7, 6], 1.0, &mut r));
    let proj = Var::constant(Tensor::randn(&[1, 4, 7, 6], 1.0, &mut r));
    let banks = store.entries().iter().filter(|(n, _)| n.ends_with(".bank")).count();
    req!(banks >= 3, "expected prompt banks in every block, found {banks}");
    let (e, w) = gradcheck_max(&store, || net.forward(&x).unwrap().mul(&proj).mean_all(), 12);
    req!(e < GRAD_TOL, "apunet: {w} {e:.2e}");
    parts.push(format!("apunet ({} tensors, {banks} banks) {e:.1e}", store.len()));

    let subject = common::phantom_subject(0, 11, 16, 3, 2);
    let ex = common::example(&subject, 0, 1, 4.0, 4, 3, 3);
    let store = ParamStore::new(8);
    let gen = Generator::new(
        &store,
        &GeneratorConfig {
            acs_lines: 4,
            ..GeneratorConfig::tiny()
        },
    )
    .unwrap();
    common::randomize(&store, 9, 0.15, &["eta"]);
    gen.etas()[0].set(Tensor::new(&[1], vec![0.7]));
    gen.etas()[1].set(Tensor::new(&[1], vec![0.4]));
    let (k0, mask, gt) = (ex.k0_var(), ex.mask_var(), ex.gt_central());
    let loss = || {
        let out = gen.forward(&k0, &mask).unwrap();
        let steps: Vec<Var> = out
            .intermediates
            .iter()
            .map(|k| step_loss(k, &gt, PhaseMode::Raw).unwrap().total)
            .collect();
        generator_loss(&steps, &Var::scalar(0.0), 1.0).unwrap()
    };
    let (e, w) = gradcheck_max(&store, loss, 3);
    req!(e < GRAD_TOL, "generator: {w} {e:.2e}");
    parts.push(format!("generator incl. eta and sme {e:.1e}"));
    Ok(parts.join(", "))
}

fn bce_oracle(logit: f64, label: f64) -> f64 {
    let p = 1.0 / (1.0 + (-logit).exp());
    -(label * p.ln() + (1.0 - label) * (1.0 - p).ln())
}

fn ssim_oracle(x: &Array2<f64>, y: &Array2<f64>, range: f64) -> f64 {
    let g = gaussian_window();
    let g = g.data();
    let (h, w) = x.dim();
    let (c1, c2) = ((SSIM_K1 * range).powi(2), (SSIM_K2 * range).powi(2));
    let (mut total, mut n) = (0.0, 0.0);
    for i in 0..=h - SSIM_WINDOW {
        for j in 0..=w - SSIM_WINDOW {
            let at = |a: usize, b: usize| g[a * SSIM_WINDOW + b];
            let (mut mx, mut my) = (0.0, 0.0);
            for a in 0..SSIM_WINDOW {
                for b in 0..SSIM_WINDOW {
                    mx += at(a, b) * x[[i + a, j + b]];
                    my += at(a, b) * y[[i + a, j + b]];
                }
            }
            let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
            for a in 0..SSIM_WINDOW {
                for b in 0..SSIM_WINDOW {
                    let (dx, dy) = (x[[i + a, j + b]] - mx, y[[i + a, j + b]] - my);
                    sxx += at(a, b) * dx * dx;
                    syy += at(a, b) * dy * dy;
                    sxy += at(a, b) * dx * dy;
                }
            }
            total += (2.0 * mx * my + c1) * (2.0 * sxy + c2) / ((mx * mx + my * my + c1) * (sxx + syy + c2));
            n += 1.0;
        }
    }
    total / n
}

fn criterion4() -> Outcome {
    let mut r = common::rng(1);
    let real: Vec<f64> = (0..16).map(|_| r.random_range(-3.0..3.0)).collect();
    let fake: Vec<f64> = (0..16).map(|_| r.random_range(-3.0..3.0)).collect();
    let v = |d: &[f64]| Var::constant(Tensor::new(&[1, 1, 4, 4], d.to_vec()));
    let want = 0.5
        * (real.iter().map(|&x| bce_oracle(x, 0.0)).sum::<f64>() / 16.0
            + fake.iter().map(|&x| bce_oracle(x, 1.0)).sum::<f64>() / 16.0);
    let bce = (discriminator_loss(&v(&real), &v(&fake)).item() - want).abs();
    req!(bce < 1e-12, "BCE off by {bce:.2e}");

    let gt = Array2::from_shape_fn((16, 16), |_| r.random_range(0.0..1.0));
    let pred = gt.mapv(|x| 0.8 * x) + Array2::from_shape_fn((16, 16), |_| r.random_range(0.0..0.2));
    let range = gt.iter().copied().fold(0.0, f64::max);
    let ssim = (metric_ssim(&pred, &gt).unwrap() - ssim_oracle(&pred, &gt, range)).abs();
    req!(ssim < 1e-6, "SSIM off by {ssim:.2e}");

    let (mut se, mut en) = (0.0, 0.0);
    for (p, g) in pred.iter().zip(&gt) {
        se += (p - g) * (p - g);
        en += g * g;
    }
    let psnr = (metric_psnr(&pred, &gt).unwrap() - 10.0 * (range * range / (se / 256.0)).log10()).abs();
    let nmse = (metric_nmse(&pred, &gt).unwrap() - se / en).abs();
    req!(psnr < 1e-8 && nmse < 1e-8, "PSNR off by {psnr:.2e}, NMSE off by {nmse:.2e}");

    let mut base = Array2::from_shape_fn((8, 8), |_| r.random_range(0.0..0.9));
    base[[0, 0]] = 1.0;
    let db = metric_psnr(&base.mapv(|x| x + 0.1), &base).unwrap();
    req!((db - 20.0).abs() < 1e-12, "closed-form PSNR {db}");

    let p = random_c64(&[4, 4], 8);
    let g = random_c64(&[4, 4], 9);
    let phase = |z: C64| if z == C64::new(0.0, 0.0) { 0.0 } else { z.im.atan2(z.re) };
    let want: f64 = p
        .iter()
        .zip(&g)
        .map(|(a, b)| (a.norm() - b.norm()).powi(2) + (phase(*a) - phase(*b)).powi(2))
        .sum::<f64>()
        / 16.0;
    let got = physical_loss(&CVar::constant(&p), &CVar::constant(&g), PhaseMode::Raw).unwrap().item();
    req!((got - want).abs() < 1e-10, "physical loss off by {:.2e}", (got - want).abs());

    let steps: Vec<Var> = [0.7, 1.3, 2.9].iter().map(|&x| Var::scalar(x)).collect();
    let adv = Var::scalar(0.25);
    let l = |lambda: f64| generator_loss(&steps, &adv, lambda).unwrap().item() - 0.25;
    req!(l(2.0) == 2.0 * l(1.0) && l(0.0) == 0.0, "generator loss is not linear in λ");
    Ok(format!(
        "BCE {bce:.1e}, SSIM {ssim:.1e}, PSNR {psnr:.1e}, NMSE {nmse:.1e}; closed-form PSNR {db:.12} dB; λ-linearity exact"
    ))
}

struct Demo {
    seed: u64,
    trained: Model,
    held_out: Vec<Subject>,
    train: Vec<Subject>,
}

fn demo_config(seed: u64, steps: usize) -> TrainConfig {
    TrainConfig {
        epochs: 1,
        steps_per_epoch: Some(steps),
        seed,
        phase_mode: PhaseMode::Wrapped,
        ..TrainConfig::default()
    }
}

fn criterion5(demos: &mut Vec<Demo>) -> Outcome {
    let mut rows = Vec::new();
    let mut wins = 0;
    for seed in SEEDS {
        let train = common::subjects(0..4, seed, 64, 8, 4);
        let held_out = common::subjects(4..6, seed, 64, 8, 4);
        let model = Model::new(&GeneratorConfig::tiny(), &DiscriminatorConfig::tiny(), seed).unwrap();
        let mut trainer = Trainer::new(model, &demo_config(seed, 300)).unwrap();
        let stage = Stage::new("af04", &[Trajectory::Uniform], &[4.0], StageInit::Fresh);
        train_stage(&mut trainer, &stage, &train, seed, None).map_err(|e| e.to_string())?;
        let spec = EvalSpec {
            trajectories: vec![Trajectory::Uniform],
            accelerations: vec![4.0],
            frames: Some(vec![0, 3, 6]),
            seed: 7,
        };
        let report = evaluate(&trainer.model.generator, &held_out, &spec).map_err(|e| e.to_string())?;
        let all = report.aggregates().pop().unwrap();
        let gain = all.ssim.mean - all.zf_ssim.mean;
        let rel = (all.zf_nmse.mean - all.nmse.mean) / all.zf_nmse.mean;
        let ok = gain >= 0.03 && rel >= 0.20;
        wins += ok as usize;
        rows.push(format!(
            "seed {seed}: SSIM {:.4} vs {:.4}, NMSE {:.4} vs {:.4} [{}]",
            all.ssim.mean,
            all.zf_ssim.mean,
            all.nmse.mean,
            all.zf_nmse.mean,
            if ok { "ok" } else { "miss" }
        ));
        demos.push(Demo {
            seed,
            trained: trainer.model,
            held_out,
            train,
        });
    }
    let detail = format!("{wins}/5 seeds beat zero-filled; {}", rows.join("; "));
    if wins >= 4 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn af8_set(subjects: &[Subject]) -> Vec<Example> {
    let gen = GeneratorConfig::tiny();
    let mask = make_mask(Trajectory::Uniform, 64, 64, 8.0, gen.acs_lines, 7).unwrap();
    subjects
        .iter()
        .enumerate()
        .flat_map(|(i, s)| {
            let mask = mask.clone();
            [0, 3, 6].map(move |f| Example::new(&s.record, i, f, vec![mask.clone()], gen.adjacent).unwrap())
        })
        .collect()
}

fn criterion6(demos: &[Demo]) -> Outcome {
    req!(demos.len() == SEEDS.len(), "stage-1 models missing (criterion 5 did not finish)");
    let stage = Stage::new("af08", &[Trajectory::Uniform], &[8.0], StageInit::Transfer);
    let mut wins = 0;
    let mut rows = Vec::new();
    for d in demos {
        let cfg = demo_config(d.seed, 50);
        let fixed = af8_set(&d.held_out);
        let final_loss = |transfer: bool| -> Result<f64, String> {
            let model = Model::new(&GeneratorConfig::tiny(), &DiscriminatorConfig::tiny(), d.seed + 1).unwrap();
            if transfer {
                model.load(&d.trained.tensors()).map_err(|e| e.to_string())?;
            }
            let mut t = Trainer::new(model, &cfg).unwrap();
            train_stage(&mut t, &stage, &d.train, d.seed + 17, None).map_err(|e| e.to_string())?;
            stepwise_loss(&t.model.generator, &fixed, 1.0, PhaseMode::Wrapped).map_err(|e| e.to_string())
        };
        let (tr, fr) = (final_loss(true)?, final_loss(false)?);
        wins += (tr < fr) as usize;
        rows.push(format!("seed {}: transfer {tr:.4} vs fresh {fr:.4}", d.seed));
    }
    let detail = format!("{wins}/5 seeds lower with transfer; {}", rows.join("; "));
    if wins >= 4 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn criterion7() -> Outcome {
    let train = common::subjects(0..2, 0, 32, 4, 2);
    let gen = GeneratorConfig {
        acs_lines: 8,
        ..GeneratorConfig::tiny()
    };
    let model = Model::new(&gen, &DiscriminatorConfig::tiny(), 0).unwrap();
    let mut t = Trainer::new(model, &TrainConfig::default()).unwrap();
    let pairs: Vec<(Array2<f64>, Array2<f64>)> = (0..4)
        .map(|i| {
            let ex = common::example(&train[i % 2], i % 2, i, 4.0, 8, 3, i as u64);
            let gt = ex.gt_image();
            let peak = gt.iter().copied().fold(0.0, f64::max);
            (gt.mapv(|v| v / peak), ex.zero_filled_image().mapv(|v| v / peak))
        })
        .collect();
    let gen_before = t.model.gen_store.values();
    let mut first = f64::NAN;
    for step in 0..200 {
        let (real, zf) = &pairs[step % pairs.len()];
        let l = t.discriminator_step(real, zf, zf).map_err(|e| e.to_string())?;
        if step == 0 {
            first = l;
        }
    }
    req!(t.model.gen_store.values() == gen_before, "discriminator steps changed generator parameters");

    let (mut loss, mut p_real, mut p_fake) = (0.0, 0.0, 0.0);
    no_grad(|| {
        for (real, zf) in &pairs {
            let d = &t.model.discriminator;
            let zf_v = image_var(zf);
            let pr = d.forward(&make_conditioned_input(&image_var(real), &zf_v).unwrap()).unwrap();
            let pf = d.forward(&make_conditioned_input(&zf_v, &zf_v).unwrap()).unwrap();
            loss += discriminator_loss(&pr, &pf).item() / pairs.len() as f64;
            p_real += pr.sigmoid().mean_all().item() / pairs.len() as f64;
            p_fake += pf.sigmoid().mean_all().item() / pairs.len() as f64;
        }
    });
    req!(loss < 0.1, "L_Disc {loss:.4} after 200 steps (started at {first:.4})");
    req!(
        p_real < 0.5 && p_fake > 0.5,
        "label convention violated: mean σ(real) {p_real:.3}, σ(fake) {p_fake:.3}"
    );

    let model = Model::new(&gen, &DiscriminatorConfig::tiny(), 1).unwrap();
    let mut t = Trainer::new(
        model,
        &TrainConfig {
            disc_updates: DiscUpdates::Never,
            ..TrainConfig::default()
        },
    )
    .unwrap();
    let (g0, d0) = (t.model.gen_store.values(), t.model.disc_store.values());
    t.train_step(&[common::example(&train[0], 0, 1, 4.0, 8, 3, 5)]).map_err(|e| e.to_string())?;
    req!(t.model.disc_store.values() == d0, "generator step changed discriminator parameters");
    req!(t.model.gen_store.values() != g0, "generator step did not update the generator");
    Ok(format!(
        "L_Disc {first:.4} -> {loss:.4}; mean σ(real) {p_real:.3} (label 0), σ(fake) {p_fake:.3} (label 1); isolation holds both ways"
    ))
}

fn criterion8() -> Outcome {
    let mut cfg = ExperimentConfig::tiny();
    cfg.train.steps_per_epoch = Some(4);
    let subjects = cfg.data.subjects().unwrap();
    let (train, _) = cfg.data.split(subjects).unwrap();
    let schedule = CurriculumSchedule::task1();
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    for d in &dirs {
        run_curriculum(&schedule, &train, &cfg.generator, &cfg.discriminator, &cfg.train, Some(d.path()))
            .map_err(|e| e.to_string())?;
    }
    let mut files = 0;
    for stage in &schedule.stages {
        for name in ["train_log.jsonl", "checkpoint.safetensors"] {
            let read = |d: &tempfile::TempDir| std::fs::read(d.path().join(&stage.name).join(name)).unwrap();
            let (a, b) = (read(&dirs[0]), read(&dirs[1]));
            req!(!a.is_empty() && a == b, "{}/{name} differs between runs", stage.name);
            files += 1;
        }
    }
    Ok(format!("{files} log and checkpoint files bit-identical across two {}-stage runs", schedule.stages.len()))
}

fn run(id: usize, name: &str, budget: Option<Duration>, f: impl FnOnce() -> Outcome) -> bool {
    let start = Instant::now();
    let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
        Err(p
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "panicked".into()))
    });
    let elapsed = start.elapsed();
    let over = budget.is_some_and(|b| elapsed > b);
    let pass = outcome.is_ok() && !over;
    let mut detail = match outcome {
        Ok(d) | Err(d) => d,
    };
    if over {
        detail = format!("over the {:?} budget; {detail}", budget.unwrap());
    }
    println!(
        "criterion {id} [{name}] {} ({:.1}s): {detail}",
        if pass { "PASS" } else { "FAIL" },
        elapsed.as_secs_f64()
    );
    pass
}

fn main() {
    if std::env::args().any(|a| a == "--list") {
        println!("acceptance: test");
        return;
    }
    let min = |m: u64| Some(Duration::from_secs(60 * m));
    let mut demos = Vec::new();
    let results = [
        run(1, "math core", min(2), criterion1),
        run(2, "data consistency", min(1), criterion2),
        run(3, "differentiability", min(10), criterion3),
        run(4, "loss and metric oracles", None, criterion4),
        run(5, "learning demonstration", min(90), || criterion5(&mut demos)),
        run(6, "curriculum transfer", min(30), || criterion6(&demos)),
        run(7, "adversarial wiring", None, criterion7),
        run(8, "determinism", None, criterion8),
    ];
    let passed = results.iter().filter(|&&p| p).count();
    println!("acceptance: {passed}/{} criteria passed", results.len());
    if passed != results.len() {
        std::process::exit(1);
    }
}
