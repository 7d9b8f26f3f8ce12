//! Experiment configuration: one TOML file covering data, networks,
//! training, curriculum, evaluation and output locations.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::adversarial::DiscriminatorConfig;
use crate::cascade::GeneratorConfig;
use crate::error::{ensure, Error, Result};
use crate::phantom::{read_subject, simulate_subject, ContrastTag, PhantomSpec};
use crate::sampling::Trajectory;
use crate::trainer::{CurriculumSchedule, EvalSpec, Subject, TrainConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    /// Simulated subjects, held-out ones included.
    pub subjects: usize,
    /// The last `held_out` subjects are kept for evaluation.
    pub held_out: usize,
    pub frames: usize,
    pub coils: usize,
    pub height: usize,
    pub width: usize,
    pub noise_std: f64,
    pub seed: u64,
    /// Cycled over the subjects.
    pub contrasts: Vec<ContrastTag>,
    /// Read subject files from here instead of simulating.
    pub dir: Option<PathBuf>,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            subjects: 6,
            held_out: 2,
            frames: 8,
            coils: 4,
            height: 64,
            width: 64,
            noise_std: 0.0,
            seed: 0,
            contrasts: ContrastTag::ALL.to_vec(),
            dir: None,
        }
    }
}

impl DataConfig {
    pub fn validate(&self) -> Result<()> {
        ensure!(self.subjects >= 1, Config, "data.subjects must be >= 1");
        ensure!(
            self.held_out < self.subjects,
            Config,
            "data.held_out ({}) must leave at least one training subject out of {}",
            self.held_out,
            self.subjects
        );
        ensure!(self.frames >= 1 && self.coils >= 1, Config, "data.frames and data.coils must be >= 1");
        ensure!(
            self.height >= 8 && self.width >= 8,
            Config,
            "data size {}x{} is below 8x8",
            self.height,
            self.width
        );
        ensure!(
            self.noise_std >= 0.0 && self.noise_std.is_finite(),
            Config,
            "data.noise_std must be non-negative"
        );
        ensure!(!self.contrasts.is_empty(), Config, "data.contrasts is empty");
        Ok(())
    }

    /// Phantom spec of subject `i`.
    pub fn phantom(&self, i: usize) -> PhantomSpec {
        let contrast = self.contrasts[i % self.contrasts.len()];
        let seed = self.seed.wrapping_mul(1_000_003).wrapping_add(i as u64);
        let mut spec = PhantomSpec::cardiac(self.height, self.width, self.frames, self.coils, contrast, seed);
        spec.noise_std = self.noise_std;
        spec
    }

    pub fn simulate(&self) -> Result<Vec<Subject>> {
        (0..self.subjects)
            .map(|i| {
                Ok(Subject {
                    name: subject_name(i),
                    record: simulate_subject(&self.phantom(i))?,
                })
            })
            .collect()
    }

    /// Simulated subjects, or the files in `dir` when set.
    pub fn subjects(&self) -> Result<Vec<Subject>> {
        match &self.dir {
            Some(d) => load_subjects(d),
            None => self.simulate(),
        }
    }

    /// `(train, held_out)`.
    pub fn split(&self, mut subjects: Vec<Subject>) -> Result<(Vec<Subject>, Vec<Subject>)> {
        ensure!(
            self.held_out < subjects.len(),
            Data,
            "{} subjects cannot hold out {}",
            subjects.len(),
            self.held_out
        );
        let test = subjects.split_off(subjects.len() - self.held_out);
        Ok((subjects, test))
    }
}

pub fn subject_name(i: usize) -> String {
    format!("subject{i:03}")
}

/// Every `*.h5` file in `dir`, in name order.
pub fn load_subjects(dir: &Path) -> Result<Vec<Subject>> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut paths = Vec::new();
    for e in entries {
        let p = e.map_err(|e| Error::io(dir, e))?.path();
        if p.extension().is_some_and(|x| x == "h5") {
            paths.push(p);
        }
    }
    paths.sort();
    ensure!(!paths.is_empty(), Data, "{}: no .h5 subject files", dir.display());
    paths
        .iter()
        .map(|p| {
            Ok(Subject {
                name: p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default(),
                record: read_subject(p)?,
            })
        })
        .collect()
}

/// Defaults for the `mask` and `reconstruct` commands.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplingConfig {
    pub trajectory: Trajectory,
    pub acceleration: f64,
    pub seed: u64,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        Self {
            trajectory: Trajectory::Uniform,
            acceleration: 4.0,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub root: PathBuf,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { root: PathBuf::from("runs") }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub data: DataConfig,
    pub sampling: SamplingConfig,
    pub generator: GeneratorConfig,
    pub discriminator: DiscriminatorConfig,
    pub train: TrainConfig,
    pub curriculum: CurriculumSchedule,
    pub eval: EvalSpec,
    pub output: OutputConfig,
}

impl ExperimentConfig {
    /// Small enough to train in minutes on a CPU.
    pub fn tiny() -> Self {
        Self {
            data: DataConfig {
                subjects: 4,
                held_out: 1,
                frames: 4,
                coils: 2,
                height: 32,
                width: 32,
                ..DataConfig::default()
            },
            generator: GeneratorConfig {
                acs_lines: 8,
                ..GeneratorConfig::tiny()
            },
            discriminator: DiscriminatorConfig::tiny(),
            train: TrainConfig {
                epochs: 1,
                steps_per_epoch: Some(20),
                ..TrainConfig::default()
            },
            ..Self::default()
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        Ok(cfg)
    }

    /// Parses and validates `path`.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg = Self::from_toml(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.data.validate()?;
        self.generator.validate()?;
        self.discriminator.validate()?;
        self.train.validate()?;
        self.curriculum.validate()?;
        self.eval.validate()?;
        ensure!(
            self.sampling.acceleration.is_finite() && self.sampling.acceleration >= 1.0,
            Config,
            "sampling.acceleration must be >= 1"
        );
        ensure!(
            self.generator.acs_lines < self.data.width,
            Config,
            "generator.acs_lines ({}) must be below the image width ({})",
            self.generator.acs_lines,
            self.data.width
        );
        let d = &self.discriminator;
        ensure!(
            d.output_size(self.data.height.min(self.data.width)).is_some(),
            Config,
            "discriminator with {} layers needs larger images than {}x{}",
            d.layers,
            self.data.height,
            self.data.width
        );
        Ok(())
    }
}
