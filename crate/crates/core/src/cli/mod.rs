//! The `cmr-recon` command line: simulate, mask, train, eval, reconstruct.

mod images;

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::cascade::reconstruct_image;
use crate::config::{subject_name, ExperimentConfig};
use crate::error::{ensure, Error, Result};
use crate::objectives::{Metrics, MetricsReport};
use crate::phantom::{read_subject, simulate_subject, write_subject};
use crate::sampling::{make_mask, Trajectory};
use crate::trainer::{evaluate, evaluate_with, run_curriculum, Checkpoint, CurriculumSchedule, Example, Model, Subject};

pub use images::{quantize16, read_pgm16, write_pgm16};

#[derive(Debug, Parser)]
#[command(name = "cmr-recon", version, about = "Accelerated multi-coil cardiac MRI reconstruction")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate phantom subjects and write them as HDF5 files plus a manifest.
    Simulate(SimulateArgs),
    /// Generate one sampling mask and write it as PGM, raw bytes and JSON.
    Mask(MaskArgs),
    /// Train through a curriculum, writing a checkpoint and log per stage.
    Train(TrainArgs),
    /// Score a checkpoint against ground truth and the zero-filled baseline.
    Eval(EvalArgs),
    /// Reconstruct one frame and write ground-truth, zero-filled and
    /// reconstructed magnitude images.
    Reconstruct(ReconstructArgs),
}

#[derive(Debug, Args)]
pub struct Common {
    /// Experiment config (TOML). Flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Start from the tiny preset instead of the defaults.
    #[arg(long, global = true)]
    pub tiny: bool,
    /// Root for default output locations.
    #[arg(long, global = true, env = "CMR_OUTPUT_ROOT")]
    pub output_root: Option<PathBuf>,
}

impl Common {
    fn load(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::load(p)?,
            None if self.tiny => ExperimentConfig::tiny(),
            None => ExperimentConfig::default(),
        };
        if let Some(root) = &self.output_root {
            cfg.output.root = root.clone();
        }
        Ok(cfg)
    }
}

fn parse_size(s: &str) -> std::result::Result<(usize, usize), String> {
    let (h, w) = s.split_once(['x', 'X']).ok_or_else(|| format!("expected HxW, got `{s}`"))?;
    let p = |v: &str| v.trim().parse::<usize>().map_err(|e| format!("`{v}`: {e}"));
    Ok((p(h)?, p(w)?))
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub common: Common,
    /// Output directory (default: <output root>/data).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub subjects: Option<usize>,
    #[arg(long)]
    pub frames: Option<usize>,
    #[arg(long)]
    pub coils: Option<usize>,
    /// Image size as HxW.
    #[arg(long, value_parser = parse_size)]
    pub size: Option<(usize, usize)>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub noise_std: Option<f64>,
    /// Allow writing into a non-empty directory.
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Args)]
pub struct MaskArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub trajectory: Option<Trajectory>,
    /// Acceleration factor.
    #[arg(long)]
    pub af: Option<f64>,
    #[arg(long, value_parser = parse_size)]
    pub size: Option<(usize, usize)>,
    /// Auto-calibration columns kept around the centre.
    #[arg(long)]
    pub acs: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output path prefix; `.pgm`, `.bin` and `.json` are appended
    /// (default: <output root>/mask/mask).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: Common,
    /// Subject files to train on (default: simulate from the config).
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// 1: AF 4, 8, 10 uniform with transfer; 2: every trajectory, AF 4 to 24.
    #[arg(long)]
    pub task: Option<u8>,
    /// Steps per epoch.
    #[arg(long)]
    pub steps: Option<usize>,
    /// Epochs per stage.
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory (default: <output root>/train).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, required_unless_present = "identity")]
    pub checkpoint: Option<PathBuf>,
    /// Subject files to evaluate (default: the config's held-out subjects).
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long = "trajectory")]
    pub trajectories: Vec<Trajectory>,
    #[arg(long = "af")]
    pub accelerations: Vec<f64>,
    /// Score the ground truth against itself instead of a checkpoint.
    #[arg(long)]
    pub identity: bool,
    /// Output directory (default: <output root>/eval).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReconstructArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Subject file (default: the first held-out subject of the config).
    #[arg(long)]
    pub subject: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub frame: usize,
    #[arg(long)]
    pub trajectory: Option<Trajectory>,
    #[arg(long)]
    pub af: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory (default: <output root>/reconstruct).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Parses `std::env::args`, runs the command and returns the exit code.
pub fn main() -> i32 {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate(a) => cmd_simulate(a),
        Command::Mask(a) => cmd_mask(a),
        Command::Train(a) => cmd_train(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Reconstruct(a) => cmd_reconstruct(a),
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_file(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn to_json<T: Serialize>(v: &T) -> Result<String> {
    serde_json::to_string_pretty(v).map_err(|e| Error::Data(e.to_string()))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Serialize, serde::Deserialize)]
pub struct ManifestEntry {
    pub file: String,
    pub sha256: String,
    pub contrast: String,
    pub seed: u64,
    /// `[frames, coils, H, W]`.
    pub shape: [usize; 4],
}

#[derive(Debug, Serialize, serde::Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub subjects: Vec<ManifestEntry>,
}

pub fn cmd_simulate(a: SimulateArgs) -> Result<()> {
    let mut cfg = a.common.load()?;
    let d = &mut cfg.data;
    d.subjects = a.subjects.unwrap_or(d.subjects);
    d.frames = a.frames.unwrap_or(d.frames);
    d.coils = a.coils.unwrap_or(d.coils);
    if let Some((h, w)) = a.size {
        (d.height, d.width) = (h, w);
    }
    d.seed = a.seed.unwrap_or(d.seed);
    d.noise_std = a.noise_std.unwrap_or(d.noise_std);
    d.held_out = d.held_out.min(d.subjects.saturating_sub(1));
    cfg.data.validate()?;
    for i in 0..cfg.data.subjects {
        cfg.data.phantom(i).validate()?;
    }
    let out = a.out.unwrap_or_else(|| cfg.output.root.join("data"));
    if let Ok(mut entries) = std::fs::read_dir(&out) {
        ensure!(
            a.force || entries.next().is_none(),
            Validation,
            "{} is not empty (use --force to write into it)",
            out.display()
        );
    }
    create_dir(&out)?;
    let mut manifest = Manifest {
        format_version: crate::phantom::FORMAT_VERSION,
        subjects: Vec::new(),
    };
    for i in 0..cfg.data.subjects {
        let spec = cfg.data.phantom(i);
        let rec = simulate_subject(&spec)?;
        let file = format!("{}.h5", subject_name(i));
        let path = out.join(&file);
        write_subject(&rec, &path)?;
        let bytes = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
        let (f, c, h, w) = rec.dims();
        manifest.subjects.push(ManifestEntry {
            file,
            sha256: sha256_hex(&bytes),
            contrast: rec.contrast.to_string(),
            seed: spec.seed,
            shape: [f, c, h, w],
        });
    }
    let text = to_json(&manifest)?;
    write_file(&out.join("manifest.json"), &text)?;
    println!("{text}");
    Ok(())
}

pub fn cmd_mask(a: MaskArgs) -> Result<()> {
    let cfg = a.common.load()?;
    let traj = a.trajectory.unwrap_or(cfg.sampling.trajectory);
    let af = a.af.unwrap_or(cfg.sampling.acceleration);
    let (h, w) = a.size.unwrap_or((cfg.data.height, cfg.data.width));
    let acs = a.acs.unwrap_or(cfg.generator.acs_lines);
    let seed = a.seed.unwrap_or(cfg.sampling.seed);
    let mask = make_mask(traj, h, w, af, acs, seed)?;
    let prefix = a.out.unwrap_or_else(|| cfg.output.root.join("mask").join("mask"));
    if let Some(dir) = prefix.parent().filter(|d| !d.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    let with_ext = |ext: &str| {
        let mut s = prefix.clone().into_os_string();
        s.push(ext);
        PathBuf::from(s)
    };
    write_pgm16(&with_ext(".pgm"), &mask.to_f64())?;
    write_file(&with_ext(".bin"), mask.data().iter().copied().collect::<Vec<u8>>())?;
    let meta = to_json(&mask.meta())?;
    write_file(&with_ext(".json"), &meta)?;
    println!("{meta}");
    Ok(())
}

pub fn cmd_train(a: TrainArgs) -> Result<()> {
    let mut cfg = a.common.load()?;
    if let Some(t) = a.task {
        cfg.curriculum = CurriculumSchedule::for_task(t)?;
    }
    if let Some(s) = a.steps {
        cfg.train.steps_per_epoch = Some(s);
    }
    if let Some(e) = a.epochs {
        cfg.train.epochs = e;
        for s in &mut cfg.curriculum.stages {
            s.epochs = None;
        }
    }
    cfg.train.seed = a.seed.unwrap_or(cfg.train.seed);
    if let Some(d) = a.data {
        cfg.data.dir = Some(d);
    }
    cfg.validate()?;
    let out = a.out.unwrap_or_else(|| cfg.output.root.join("train"));

    let subjects = cfg.data.subjects()?;
    let (train, _) = cfg.data.split(subjects)?;
    create_dir(&out)?;
    write_file(&out.join("config.toml"), cfg.to_toml()?)?;
    let results = run_curriculum(
        &cfg.curriculum,
        &train,
        &cfg.generator,
        &cfg.discriminator,
        &cfg.train,
        Some(&out),
    )?;
    for r in &results {
        let last = r.log.last().map(|l| l.losses.total).unwrap_or(f64::NAN);
        let path = r.checkpoint_path.as_deref().map(Path::display);
        println!(
            "stage {}: {} steps, final loss {last:.6}, checkpoint {}",
            r.name,
            r.steps,
            path.map(|p| p.to_string()).unwrap_or_default()
        );
    }
    Ok(())
}

fn load_data_arg(data: Option<&Path>, cfg: &ExperimentConfig) -> Result<Vec<Subject>> {
    match data {
        Some(p) if p.is_file() => Ok(vec![Subject {
            name: p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default(),
            record: read_subject(p)?,
        }]),
        Some(p) => crate::config::load_subjects(p),
        None => Ok(cfg.data.split(cfg.data.subjects()?)?.1),
    }
}

pub fn cmd_eval(a: EvalArgs) -> Result<()> {
    let mut cfg = a.common.load()?;
    if !a.trajectories.is_empty() {
        cfg.eval.trajectories = a.trajectories.clone();
    }
    if !a.accelerations.is_empty() {
        cfg.eval.accelerations = a.accelerations.clone();
    }
    cfg.validate()?;
    let ckpt = a.checkpoint.as_deref().map(Checkpoint::load).transpose()?;
    let out = a.out.unwrap_or_else(|| cfg.output.root.join("eval"));
    let subjects = load_data_arg(a.data.as_deref(), &cfg)?;
    ensure!(!subjects.is_empty(), Data, "no subjects to evaluate");

    let report: MetricsReport = match (&ckpt, a.identity) {
        (_, true) => evaluate_with(
            &subjects,
            &cfg.eval,
            cfg.generator.adjacent,
            cfg.generator.acs_lines,
            |ex| Ok(ex.gt_image()),
        )?,
        (Some(ck), false) => {
            let model = Model::from_checkpoint(ck, cfg.train.seed)?;
            evaluate(&model.generator, &subjects, &cfg.eval)?
        }
        (None, false) => unreachable!("clap requires --checkpoint without --identity"),
    };
    create_dir(&out)?;
    write_file(&out.join("metrics.jsonl"), report.to_jsonl())?;
    write_file(&out.join("aggregates.json"), to_json(&report.aggregates())?)?;
    let table = report.table();
    write_file(&out.join("table.txt"), &table)?;
    print!("{table}");
    Ok(())
}

/// Sidecar written next to the reconstructed images.
#[derive(Debug, Serialize, serde::Deserialize)]
pub struct ReconstructionSidecar {
    pub subject: String,
    pub frame: usize,
    pub mask: crate::sampling::MaskMeta,
    pub images: [String; 3],
    /// How stored pixel values map back to magnitudes. Metrics are computed
    /// on the stored values.
    pub encoding: String,
    /// Ground-truth maximum in simulated k-space units; pixel 65535 equals this.
    pub normalization: f64,
    pub recon: Metrics,
    pub zero_filled: Metrics,
}

pub fn cmd_reconstruct(a: ReconstructArgs) -> Result<()> {
    let cfg = a.common.load()?;
    cfg.validate()?;
    let traj = a.trajectory.unwrap_or(cfg.sampling.trajectory);
    let af = a.af.unwrap_or(cfg.sampling.acceleration);
    let seed = a.seed.unwrap_or(cfg.sampling.seed);
    let ckpt = Checkpoint::load(&a.checkpoint)?;
    let model = Model::from_checkpoint(&ckpt, cfg.train.seed)?;
    let gen_cfg = model.generator.config().clone();
    let subject = match &a.subject {
        Some(p) => Subject {
            name: p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default(),
            record: read_subject(p)?,
        },
        None => {
            let i = cfg.data.subjects - cfg.data.held_out.max(1);
            Subject {
                name: subject_name(i),
                record: simulate_subject(&cfg.data.phantom(i))?,
            }
        }
    };
    let (_, _, h, w) = subject.record.dims();
    let mask = make_mask(traj, h, w, af, gen_cfg.acs_lines, seed)?;
    let ex = Example::new(&subject.record, 0, a.frame, vec![mask.clone()], gen_cfg.adjacent)?;
    let recon = reconstruct_image(&model.generator.reconstruct(&ex.k0, &mask)?);
    let gt = ex.gt_image();
    let zf = ex.zero_filled_image();
    let peak = gt.iter().copied().fold(0.0, f64::max);
    ensure!(peak > 0.0, Data, "frame {} of `{}` has no signal", a.frame, subject.name);
    let norm = |img: &ndarray::Array2<f64>| quantize16(&img.mapv(|v| v / peak));
    let (gt, zf, recon) = (norm(&gt), norm(&zf), norm(&recon));

    let out = a.out.unwrap_or_else(|| cfg.output.root.join("reconstruct"));
    create_dir(&out)?;
    let stem = format!("{}_f{:03}", subject.name, a.frame);
    let names = ["gt", "zero_filled", "recon"].map(|k| format!("{stem}_{k}.pgm"));
    for (name, img) in names.iter().zip([&gt, &zf, &recon]) {
        write_pgm16(&out.join(name), img)?;
    }
    let sidecar = ReconstructionSidecar {
        subject: subject.name.clone(),
        frame: a.frame,
        mask: mask.meta(),
        images: names,
        encoding: "16-bit binary PGM; pixel = round(65535 * clamp(magnitude / normalization, 0, 1))".into(),
        normalization: peak * ex.scale,
        recon: Metrics::compute(&recon, &gt)?,
        zero_filled: Metrics::compute(&zf, &gt)?,
    };
    write_file(&out.join(format!("{stem}.json")), to_json(&sidecar)?)?;
    println!(
        "{} frame {}: recon {}  zero-filled {}",
        subject.name,
        a.frame,
        sidecar.recon.triple(),
        sidecar.zero_filled.triple()
    );
    println!("ssim={}", sidecar.recon.ssim);
    Ok(())
}
