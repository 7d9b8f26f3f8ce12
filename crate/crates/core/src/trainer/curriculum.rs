use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Checkpoint, CheckpointMeta, Example, Model, Subject, TrainConfig, Trainer};
use crate::adversarial::DiscriminatorConfig;
use crate::cascade::GeneratorConfig;
use crate::error::{ensure, Error, Result};
use crate::objectives::LossReport;
use crate::sampling::{make_mask, Trajectory};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageInit {
    #[default]
    Fresh,
    /// Start from the previous stage's generator and discriminator.
    Transfer,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Stage {
    pub name: String,
    pub trajectories: Vec<Trajectory>,
    pub accelerations: Vec<f64>,
    /// Overrides `TrainConfig::epochs`.
    #[serde(default)]
    pub epochs: Option<usize>,
    #[serde(default)]
    pub init: StageInit,
}

impl Stage {
    pub fn new(name: &str, trajectories: &[Trajectory], accelerations: &[f64], init: StageInit) -> Self {
        Self {
            name: name.to_string(),
            trajectories: trajectories.to_vec(),
            accelerations: accelerations.to_vec(),
            epochs: None,
            init,
        }
    }

    fn max_af(&self) -> f64 {
        self.accelerations.iter().copied().fold(f64::MIN, f64::max)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CurriculumSchedule {
    pub stages: Vec<Stage>,
}

impl Default for CurriculumSchedule {
    fn default() -> Self {
        Self::task1()
    }
}

impl CurriculumSchedule {
    /// Three uniform-mask models at AF 4, 8 and 10, each fine-tuned from
    /// the one before.
    pub fn task1() -> Self {
        let u = [Trajectory::Uniform];
        Self {
            stages: vec![
                Stage::new("af04", &u, &[4.0], StageInit::Fresh),
                Stage::new("af08", &u, &[8.0], StageInit::Transfer),
                Stage::new("af10", &u, &[10.0], StageInit::Transfer),
            ],
        }
    }

    /// One model over every trajectory and AF 4 to 24.
    pub fn task2() -> Self {
        Self {
            stages: vec![Stage::new(
                "mixed",
                &Trajectory::ALL,
                &[4.0, 8.0, 10.0, 12.0, 16.0, 20.0, 24.0],
                StageInit::Fresh,
            )],
        }
    }

    pub fn for_task(task: u8) -> Result<Self> {
        match task {
            1 => Ok(Self::task1()),
            2 => Ok(Self::task2()),
            _ => Err(Error::Config(format!("unknown task {task}, expected 1 or 2"))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(!self.stages.is_empty(), Config, "curriculum has no stages");
        ensure!(
            self.stages[0].init == StageInit::Fresh,
            Config,
            "first stage `{}` has nothing to transfer from",
            self.stages[0].name
        );
        let mut prev_max = f64::MIN;
        for (i, s) in self.stages.iter().enumerate() {
            ensure!(
                !s.name.is_empty() && s.name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-'),
                Config,
                "stage name `{}` must be non-empty ASCII alphanumerics, `_` or `-`",
                s.name
            );
            ensure!(
                self.stages[..i].iter().all(|o| o.name != s.name),
                Config,
                "duplicate stage name `{}`",
                s.name
            );
            ensure!(!s.trajectories.is_empty(), Config, "stage `{}` has no trajectories", s.name);
            ensure!(!s.accelerations.is_empty(), Config, "stage `{}` has no accelerations", s.name);
            for &af in &s.accelerations {
                ensure!(af.is_finite() && af >= 1.0, Config, "stage `{}`: acceleration {af} must be >= 1", s.name);
            }
            ensure!(s.epochs != Some(0), Config, "stage `{}`: epochs must be >= 1", s.name);
            ensure!(
                s.max_af() >= prev_max,
                Config,
                "stage `{}` is easier than the one before (max AF {} < {prev_max})",
                s.name,
                s.max_af()
            );
            prev_max = s.max_af();
        }
        Ok(())
    }
}

/// One line of the training log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    pub stage: String,
    pub epoch: usize,
    pub step: u64,
    pub lr: f64,
    pub eta: Vec<f64>,
    pub examples: Vec<String>,
    #[serde(flatten)]
    pub losses: LossReport,
}

pub struct StageResult {
    pub name: String,
    pub steps: u64,
    pub log: Vec<LogRecord>,
    pub checkpoint: Checkpoint,
    pub checkpoint_path: Option<PathBuf>,
}

/// Draws `steps` training examples from `subjects` for `stage`: frames in a
/// shuffled order, trajectory and AF uniform over the stage grid.
pub fn stage_examples(
    subjects: &[Subject],
    stage: &Stage,
    gen: &GeneratorConfig,
    rng: &mut ChaCha8Rng,
    count: usize,
) -> Result<Vec<Example>> {
    let mut pool: Vec<(usize, usize)> = subjects
        .iter()
        .enumerate()
        .flat_map(|(s, sub)| (0..sub.record.dims().0).map(move |f| (s, f)))
        .collect();
    ensure!(!pool.is_empty(), Data, "training set has no frames");
    let mut out = Vec::with_capacity(count);
    let mut order: Vec<(usize, usize)> = Vec::new();
    while out.len() < count {
        if order.is_empty() {
            pool.shuffle(rng);
            order = pool.iter().rev().copied().collect();
        }
        let (s, f) = order.pop().expect("refilled above");
        let traj = stage.trajectories[rng.random_range(0..stage.trajectories.len())];
        let af = stage.accelerations[rng.random_range(0..stage.accelerations.len())];
        let mask_seed: u64 = rng.random();
        let (_, _, h, w) = subjects[s].record.dims();
        let mask = make_mask(traj, h, w, af, gen.acs_lines, mask_seed)?;
        out.push(Example::new(&subjects[s].record, s, f, vec![mask], gen.adjacent)?);
    }
    Ok(out)
}

fn steps_per_epoch(cfg: &TrainConfig, subjects: &[Subject]) -> usize {
    cfg.steps_per_epoch.unwrap_or_else(|| {
        let frames: usize = subjects.iter().map(|s| s.record.dims().0).sum();
        frames.div_ceil(cfg.batch_size).max(1)
    })
}

/// Trains `trainer` on one stage, appending one [`LogRecord`] per step to
/// `log` when given.
pub fn train_stage(
    trainer: &mut Trainer,
    stage: &Stage,
    subjects: &[Subject],
    seed: u64,
    mut log: Option<&mut dyn Write>,
) -> Result<Vec<LogRecord>> {
    let cfg = trainer.config().clone();
    let epochs = stage.epochs.unwrap_or(cfg.epochs);
    let per_epoch = steps_per_epoch(&cfg, subjects);
    let gen_cfg = trainer.model.generator.config().clone();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut records = Vec::with_capacity(epochs * per_epoch);
    let mut step = 0u64;
    for epoch in 0..epochs {
        trainer.set_epoch(epoch);
        for _ in 0..per_epoch {
            let batch = stage_examples(subjects, stage, &gen_cfg, &mut rng, cfg.batch_size)?;
            let losses = trainer.train_step(&batch)?;
            step += 1;
            let rec = LogRecord {
                stage: stage.name.clone(),
                epoch,
                step,
                lr: trainer.lr(),
                eta: trainer.model.generator.eta_values(),
                examples: batch
                    .iter()
                    .map(|e| {
                        format!(
                            "{}:{}:{}:{}",
                            subjects[e.subject].name,
                            e.frame,
                            e.trajectory(),
                            e.acceleration()
                        )
                    })
                    .collect(),
                losses,
            };
            if let Some(w) = log.as_deref_mut() {
                let line = serde_json::to_string(&rec).map_err(|e| Error::Data(e.to_string()))?;
                writeln!(w, "{line}").map_err(|e| Error::io("<train log>", e))?;
            }
            records.push(rec);
        }
    }
    Ok(records)
}

/// Runs every stage in order. With `out_dir`, stage `s` writes
/// `out_dir/s/checkpoint.safetensors` and `out_dir/s/train_log.jsonl`.
pub fn run_curriculum(
    schedule: &CurriculumSchedule,
    subjects: &[Subject],
    gen: &GeneratorConfig,
    disc: &DiscriminatorConfig,
    cfg: &TrainConfig,
    out_dir: Option<&Path>,
) -> Result<Vec<StageResult>> {
    schedule.validate()?;
    gen.validate()?;
    disc.validate()?;
    cfg.validate()?;
    ensure!(!subjects.is_empty(), Data, "no training subjects");
    let mut results: Vec<StageResult> = Vec::with_capacity(schedule.stages.len());
    for (i, stage) in schedule.stages.iter().enumerate() {
        let stage_seed = cfg.seed.wrapping_add(1_000_003 * i as u64);
        let model = Model::new(gen, disc, stage_seed)?;
        if stage.init == StageInit::Transfer {
            let prev = &results.last().expect("validated: first stage is fresh").checkpoint;
            model.load(&prev.tensors).map_err(|e| {
                Error::Data(format!("stage `{}` cannot transfer from `{}`: {e}", stage.name, prev.meta.stage))
            })?;
        }
        let mut trainer = Trainer::new(model, cfg)?;
        let dir = out_dir.map(|d| d.join(&stage.name));
        let mut log_file = match &dir {
            Some(d) => {
                std::fs::create_dir_all(d).map_err(|e| Error::io(d, e))?;
                let p = d.join("train_log.jsonl");
                Some(BufWriter::new(File::create(&p).map_err(|e| Error::io(&p, e))?))
            }
            None => None,
        };
        let log = train_stage(
            &mut trainer,
            stage,
            subjects,
            stage_seed,
            log_file.as_mut().map(|w| w as &mut dyn Write),
        )?;
        if let Some(mut w) = log_file {
            w.flush().map_err(|e| Error::io("train_log.jsonl", e))?;
        }
        let steps = log.len() as u64;
        let checkpoint = Checkpoint::from_model(
            &trainer.model,
            CheckpointMeta {
                generator: gen.clone(),
                discriminator: disc.clone(),
                stage: stage.name.clone(),
                steps,
            },
        );
        let checkpoint_path = match &dir {
            Some(d) => {
                let p = d.join("checkpoint.safetensors");
                checkpoint.save(&p)?;
                Some(p)
            }
            None => None,
        };
        results.push(StageResult {
            name: stage.name.clone(),
            steps,
            log,
            checkpoint,
            checkpoint_path,
        });
    }
    Ok(results)
}
