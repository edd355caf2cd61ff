//! Run manifest: one JSON file naming the inputs and settings of a run.
//!
//! Relative paths resolve against the manifest's directory. A path that names
//! a directory stands for every `*.jsonl` file directly inside it.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

use tracelens::classifier::{Mode, Thresholds};
use tracelens::evaluation::{BenchConfig, CorpusSpec, ExperimentMix};
use tracelens::synthgen::{Preset, WorkloadTemplate, DEFAULT_NOISE};
use tracelens::vmm::EscapePolicy;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunManifest {
    pub training: Vec<PathBuf>,
    pub idle: Vec<PathBuf>,
    pub experiments: Vec<PathBuf>,
    pub thresholds: Thresholds,
    /// Model order; estimated from client requests when absent.
    pub order: Option<usize>,
    pub mode: Mode,
    pub escape: EscapePolicy,
    pub output: PathBuf,
    pub seed: u64,
    pub generator: GeneratorSection,
    pub evaluation: EvaluationSection,
    pub bench: BenchConfig,
    #[serde(skip)]
    pub base: PathBuf,
}

impl Default for RunManifest {
    fn default() -> Self {
        RunManifest {
            training: Vec::new(),
            idle: Vec::new(),
            experiments: Vec::new(),
            thresholds: Thresholds::default(),
            order: None,
            mode: Mode::default(),
            escape: EscapePolicy::default(),
            output: PathBuf::from("out"),
            seed: 0,
            generator: GeneratorSection::default(),
            evaluation: EvaluationSection::default(),
            bench: BenchConfig::default(),
            base: PathBuf::from("."),
        }
    }
}

/// Synthetic corpus settings for `gen` and `bench`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorSection {
    pub preset: Preset,
    /// Template file; takes precedence over `preset`.
    pub template: Option<PathBuf>,
    pub noise: f64,
    pub fault_free: usize,
    pub idle: usize,
    pub idle_length: f64,
    pub experiments: usize,
    pub mix: ExperimentMix,
}

impl Default for GeneratorSection {
    fn default() -> Self {
        GeneratorSection {
            preset: Preset::Depl,
            template: None,
            noise: DEFAULT_NOISE,
            fault_free: 40,
            idle: 5,
            idle_length: 10.0,
            experiments: 100,
            mix: ExperimentMix::mixed(),
        }
    }
}

impl GeneratorSection {
    pub fn corpus_spec(&self, seed: u64) -> CorpusSpec {
        CorpusSpec {
            noise: self.noise,
            fault_free: self.fault_free,
            idle: self.idle,
            idle_length: self.idle_length,
            experiments: self.experiments,
            mix: self.mix.clone(),
            seed,
        }
    }
}

/// Settings shared by `eval-fp` and `eval-fn`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluationSection {
    pub n_values: Vec<usize>,
    /// Held-out test traces per repetition.
    pub m: usize,
    pub repetitions: usize,
    /// `eval-fn` ignores symbols that a false-positive run over the training
    /// traces reported as anomalous.
    pub uncertain_from_fp: bool,
}

impl Default for EvaluationSection {
    fn default() -> Self {
        EvaluationSection {
            n_values: (5..=20).collect(),
            m: 10,
            repetitions: 30,
            uncertain_from_fp: true,
        }
    }
}

impl RunManifest {
    /// Reads a manifest; its directory becomes the base for relative paths.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("cannot read manifest {}", path.display()))?;
        let mut manifest: RunManifest =
            serde_json::from_str(&text).with_context(|| format!("invalid manifest {}", path.display()))?;
        manifest.base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        if manifest.base.as_os_str().is_empty() {
            manifest.base = PathBuf::from(".");
        }
        Ok(manifest)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base.join(p)
        }
    }

    pub fn output_dir(&self) -> PathBuf {
        self.resolve(&self.output)
    }

    pub fn training_files(&self) -> Result<Vec<PathBuf>> {
        expand(self, &self.training)
    }

    pub fn idle_files(&self) -> Result<Vec<PathBuf>> {
        expand(self, &self.idle)
    }

    pub fn experiment_files(&self) -> Result<Vec<PathBuf>> {
        expand(self, &self.experiments)
    }

    pub fn template(&self) -> Result<WorkloadTemplate> {
        match &self.generator.template {
            Some(p) => Ok(WorkloadTemplate::load(&self.resolve(p))?),
            None => Ok(self.generator.preset.template()),
        }
    }
}

/// Resolves entries and replaces directories by their sorted span files.
fn expand(manifest: &RunManifest, entries: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for entry in entries {
        let path = manifest.resolve(entry);
        if path.is_dir() {
            let mut found: Vec<PathBuf> = fs::read_dir(&path)
                .with_context(|| format!("cannot list {}", path.display()))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.is_file() && p.extension().is_some_and(|x| x == "jsonl"))
                .collect();
            found.sort();
            if found.is_empty() {
                log::warn!("{} holds no .jsonl files", path.display());
            }
            files.extend(found);
        } else if path.exists() {
            files.push(path);
        } else {
            return Err(std::io::Error::new(std::io::ErrorKind::NotFound, "no such file or directory"))
                .with_context(|| format!("{}", path.display()));
        }
    }
    Ok(files)
}

