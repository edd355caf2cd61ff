//! What `train` persists and `analyze` reloads.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

use tracelens::preprocess::BackgroundDictionary;
use tracelens::trace::{load_trace_files, CallPair, EventSequence, SymbolId, SymbolTable, TraceLabel};
use tracelens::vmm::{estimate_order, EscapePolicy, PpmModel, DEFAULT_ORDER_CAP};

use crate::manifest::RunManifest;

pub const STATE_FILE: &str = "state.json";
pub const MODEL_FILE: &str = "model.json";
const STATE_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainingTrace {
    pub path: PathBuf,
    /// Background-filtered symbols.
    pub symbols: Vec<SymbolId>,
}

/// Symbol table, background dictionary, model order and filtered training
/// traces. Models are retrained from the traces on demand, one per choice of
/// reference.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainedState {
    pub version: u32,
    pub order: usize,
    /// `None` when the order was given explicitly.
    pub estimated_order: Option<usize>,
    pub escape: EscapePolicy,
    pub symbols: Vec<CallPair>,
    pub background: Vec<CallPair>,
    pub training: Vec<TrainingTrace>,
}

/// Traces loaded and filtered per a manifest, with the state they produce.
pub struct Trained {
    pub state: TrainedState,
    pub table: SymbolTable,
    pub dictionary: BackgroundDictionary,
    pub training: Vec<EventSequence>,
}

impl Trained {
    pub fn alphabet_size(&self) -> usize {
        self.table.len()
    }

    pub fn training_symbols(&self) -> Vec<&[SymbolId]> {
        self.training.iter().map(|t| t.symbols()).collect()
    }

    /// Model over every training trace.
    pub fn full_model(&self) -> Result<PpmModel> {
        Ok(PpmModel::train(
            &self.training_symbols(),
            self.state.order,
            self.alphabet_size(),
            self.state.escape,
        )?)
    }
}

/// Loads training and idle traces, filters background calls and fixes the
/// model order.
pub fn train(manifest: &RunManifest) -> Result<Trained> {
    let training_files = manifest.training_files()?;
    if training_files.is_empty() {
        return Err(tracelens::Error::EmptyTrainingSet.into());
    }
    let idle_files = manifest.idle_files()?;
    if idle_files.is_empty() {
        log::warn!("no idle traces given: the background dictionary is empty and no events are filtered");
    }

    let mut table = SymbolTable::new();
    let training = load_trace_files(&training_files, TraceLabel::FaultFree, &mut table)?;
    let idle: Vec<EventSequence> = load_trace_files(&idle_files, TraceLabel::Idle, &mut table)?
        .into_iter()
        .map(|(_, s)| s)
        .collect();
    let dictionary = BackgroundDictionary::build(&idle);
    let (paths, training): (Vec<PathBuf>, Vec<EventSequence>) =
        training.into_iter().map(|(p, s)| (p, dictionary.filter(&s))).unzip();
    if let Some(i) = training.iter().position(|t| t.is_empty()) {
        return Err(tracelens::Error::EmptyTrace {
            origin: format!("{} (after background filtering)", paths[i].display()),
        }
        .into());
    }

    let (order, estimated_order) = match manifest.order {
        Some(d) => (d, None),
        None => {
            let estimate = estimate_order(&training)?;
            let d = estimate.capped(DEFAULT_ORDER_CAP);
            if d < estimate.d {
                log::warn!("estimated order {} capped at {d}", estimate.d);
            }
            (d, Some(estimate.d))
        }
    };
    let state = TrainedState {
        version: STATE_VERSION,
        order,
        estimated_order,
        escape: manifest.escape,
        symbols: table.clone().into(),
        background: dictionary.symbols().filter_map(|s| table.pair(s).cloned()).collect(),
        training: paths
            .iter()
            .zip(&training)
            .map(|(p, t)| TrainingTrace {
                path: p.clone(),
                symbols: t.symbols().to_vec(),
            })
            .collect(),
    };
    Ok(Trained {
        state,
        table,
        dictionary,
        training,
    })
}

pub fn save(state: &TrainedState, model: &PpmModel, dir: &Path) -> Result<(PathBuf, PathBuf)> {
    fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    let state_path = dir.join(STATE_FILE);
    let mut text = serde_json::to_string_pretty(state)?;
    text.push('\n');
    fs::write(&state_path, text).with_context(|| format!("cannot write {}", state_path.display()))?;
    let model_path = dir.join(MODEL_FILE);
    let mut text = model.to_json()?;
    text.push('\n');
    fs::write(&model_path, text).with_context(|| format!("cannot write {}", model_path.display()))?;
    Ok((state_path, model_path))
}

/// The symbol table and filtered training symbols of a saved state.
pub struct Loaded {
    pub state: TrainedState,
    pub table: SymbolTable,
    pub dictionary: BackgroundDictionary,
}

pub fn load(dir: &Path) -> Result<Loaded> {
    let path = dir.join(STATE_FILE);
    let text = fs::read_to_string(&path).with_context(|| format!("cannot read {}", path.display()))?;
    let state: TrainedState =
        serde_json::from_str(&text).with_context(|| format!("invalid state file {}", path.display()))?;
    if state.version != STATE_VERSION {
        return Err(tracelens::Error::UnsupportedModelVersion(state.version))
            .with_context(|| path.display().to_string());
    }
    let mut table = SymbolTable::try_from(state.symbols.clone())
        .map_err(|e| tracelens::Error::CorruptModel(e.to_string()))
        .with_context(|| path.display().to_string())?;
    let pairs: Vec<(String, String)> =
        state.background.iter().map(|p| (p.sender.clone(), p.service.clone())).collect();
    let dictionary = BackgroundDictionary::from_pairs(&pairs, &mut table);
    if let Some(bad) = state
        .training
        .iter()
        .flat_map(|t| &t.symbols)
        .find(|s| s.index() >= table.len())
    {
        return Err(tracelens::Error::CorruptModel(format!("training symbol {bad} is not in the table")))
            .with_context(|| path.display().to_string());
    }
    Ok(Loaded {
        state,
        table,
        dictionary,
    })
}

impl From<Trained> for Loaded {
    fn from(t: Trained) -> Self {
        Loaded {
            state: t.state,
            table: t.table,
            dictionary: t.dictionary,
        }
    }
}
