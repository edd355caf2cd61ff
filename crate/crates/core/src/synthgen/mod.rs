//! Synthetic workloads with controllable non-determinism and ground truth.
//!
//! A [`WorkloadTemplate`] is a list of request blocks. Each block starts with
//! one client call followed by the internal calls it triggers. Benign
//! variation comes from two sources:
//!
//! - adjacent internal calls marked commutable swap with probability `noise`;
//! - background calls arrive as independent Poisson streams at uniformly
//!   random positions.
//!
//! Every generated trace carries a [`GroundTruth`] so evaluation needs no
//! manual labeling. Timestamps grow by a fixed step per position, so the
//! order of a written trace survives a round trip through the span format.

mod fault;
mod presets;

use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trace::{CallPair, Event, EventSequence, Layer, SymbolTable, TraceLabel};

pub use fault::{inject_fault, sample_fault, FaultKind, FaultSpec};
pub use presets::{preset, Preset, PresetShape};

/// Swap probability used when none is given.
pub const DEFAULT_NOISE: f64 = 0.05;

pub(crate) const START_US: u64 = 1_000_000;
pub(crate) const STEP_US: u64 = 1_000;
pub(crate) const DURATION_US: u64 = 400;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Block {
    pub client: CallPair,
    pub internal: Vec<CallPair>,
    /// Index pairs `(i, i + 1)` into `internal` whose order may flip.
    #[serde(default)]
    pub commutable: Vec<(usize, usize)>,
}

impl Block {
    /// Client call plus internal calls.
    pub fn event_count(&self) -> usize {
        1 + self.internal.len()
    }

    /// Event `0` is the client call, event `k > 0` is `internal[k - 1]`.
    pub fn event(&self, k: usize) -> Option<&CallPair> {
        match k {
            0 => Some(&self.client),
            k => self.internal.get(k - 1),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackgroundSpec {
    #[serde(flatten)]
    pub pair: CallPair,
    /// Expected occurrences per trace.
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkloadTemplate {
    pub name: String,
    pub blocks: Vec<Block>,
    #[serde(default)]
    pub background: Vec<BackgroundSpec>,
}

impl WorkloadTemplate {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidTemplate(format!("{}: {msg}", self.name)));
        if self.blocks.is_empty() {
            return bad("no blocks".into());
        }
        for (b, block) in self.blocks.iter().enumerate() {
            for &(i, j) in &block.commutable {
                if j != i + 1 || j >= block.internal.len() {
                    return bad(format!("block {b}: ({i}, {j}) is not an adjacent internal pair"));
                }
            }
        }
        for bg in &self.background {
            if !bg.rate.is_finite() || bg.rate < 0.0 {
                return bad(format!("background {} has rate {}", bg.pair, bg.rate));
            }
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let t: WorkloadTemplate = serde_json::from_str(text)?;
        t.validate()?;
        Ok(t)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// The fixed sequence produced with no noise and no background.
    pub fn canonical(&self) -> Vec<CallPair> {
        self.blocks
            .iter()
            .flat_map(|b| std::iter::once(&b.client).chain(&b.internal))
            .cloned()
            .collect()
    }

    /// Number of workload events in one trace.
    pub fn workload_len(&self) -> usize {
        self.blocks.iter().map(Block::event_count).sum()
    }

    pub fn expected_background(&self) -> f64 {
        self.background.iter().map(|b| b.rate).sum()
    }

    /// Every pair a fault-free or idle trace can contain.
    pub fn vocabulary(&self) -> std::collections::BTreeSet<CallPair> {
        self.canonical()
            .into_iter()
            .chain(self.background.iter().map(|b| b.pair.clone()))
            .collect()
    }
}

/// Where an event of a generated trace came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Origin {
    Workload { block: usize, event: usize },
    Background,
    Injected,
}

#[derive(Debug, Clone)]
pub(crate) struct Slot {
    pub pair: CallPair,
    pub layer: Layer,
    pub duration: u64,
    pub origin: Origin,
}

/// An event that the fault removed, located in the fault-free trace generated
/// from the same seed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MissingEvent {
    pub baseline_position: usize,
    pub pair: CallPair,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundTruth {
    /// Whether the fault had any effect. A manifesting fault may still leave
    /// the symbol sequence untouched (pure delays).
    pub manifests: bool,
    /// Positions of injected events in the generated trace.
    pub spurious: Vec<usize>,
    /// Removed events, ascending by baseline position.
    pub missing: Vec<MissingEvent>,
    /// Positions of background events in the generated trace.
    pub background: Vec<usize>,
}

impl GroundTruth {
    pub fn anomaly_count(&self) -> usize {
        self.spurious.len() + self.missing.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratedTrace {
    pub events: Vec<Event>,
    pub truth: GroundTruth,
}

impl GeneratedTrace {
    pub fn pairs(&self) -> Vec<CallPair> {
        self.events.iter().map(Event::pair).collect()
    }

    pub fn spurious_pairs(&self) -> Vec<CallPair> {
        self.truth.spurious.iter().map(|&i| self.events[i].pair()).collect()
    }

    pub fn missing_pairs(&self) -> Vec<CallPair> {
        self.truth.missing.iter().map(|m| m.pair.clone()).collect()
    }

    pub fn to_sequence(&self, label: TraceLabel, table: &mut SymbolTable) -> EventSequence {
        EventSequence::from_events(self.events.clone(), label, table)
    }
}

pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Workload slots with commutable pairs swapped independently.
fn expand(template: &WorkloadTemplate, noise: f64, rng: &mut impl Rng) -> Vec<Slot> {
    let mut slots = Vec::with_capacity(template.workload_len());
    for (b, block) in template.blocks.iter().enumerate() {
        let mut order: Vec<usize> = (0..block.internal.len()).collect();
        for &(i, j) in &block.commutable {
            // The draw happens even at zero noise so that the random stream
            // does not depend on the noise level.
            let u: f64 = rng.random();
            if u < noise {
                order.swap(i, j);
            }
        }
        slots.push(Slot {
            pair: block.client.clone(),
            layer: Layer::Client,
            duration: DURATION_US,
            origin: Origin::Workload { block: b, event: 0 },
        });
        for k in order {
            slots.push(Slot {
                pair: block.internal[k].clone(),
                layer: Layer::Internal,
                duration: DURATION_US,
                origin: Origin::Workload { block: b, event: k + 1 },
            });
        }
    }
    slots
}

fn poisson(rate: f64, rng: &mut impl Rng) -> usize {
    if rate <= 0.0 {
        return 0;
    }
    let d = Poisson::new(rate).expect("rate is positive and finite");
    let k: f64 = d.sample(rng);
    k as usize
}

fn background_slot(spec: &BackgroundSpec) -> Slot {
    Slot {
        pair: spec.pair.clone(),
        layer: Layer::Internal,
        duration: DURATION_US,
        origin: Origin::Background,
    }
}

fn insert_background(template: &WorkloadTemplate, slots: &mut Vec<Slot>, rng: &mut impl Rng) {
    for spec in &template.background {
        for _ in 0..poisson(spec.rate, rng) {
            let at = rng.random_range(0..=slots.len());
            slots.insert(at, background_slot(spec));
        }
    }
}

/// Fault-free slots for `seed`; shared by fault injection so that a faulty
/// trace and its baseline agree everywhere the fault did not reach.
pub(crate) fn baseline_slots(template: &WorkloadTemplate, seed: u64, noise: f64) -> Vec<Slot> {
    let mut rng = seeded_rng(seed);
    let mut slots = expand(template, noise, &mut rng);
    insert_background(template, &mut slots, &mut rng);
    slots
}

pub(crate) fn to_events(slots: &[Slot], trace_id: &str) -> Vec<Event> {
    slots
        .iter()
        .enumerate()
        .map(|(i, s)| Event {
            trace_id: trace_id.to_string(),
            sender: s.pair.sender.clone(),
            service: s.pair.service.clone(),
            start: START_US + i as u64 * STEP_US,
            duration: s.duration,
            layer: s.layer,
        })
        .collect()
}

pub(crate) fn background_positions(slots: &[Slot]) -> Vec<usize> {
    slots
        .iter()
        .enumerate()
        .filter(|(_, s)| s.origin == Origin::Background)
        .map(|(i, _)| i)
        .collect()
}

/// A golden run: the canonical workload with swap noise and background.
pub fn generate_fault_free(template: &WorkloadTemplate, seed: u64, noise: f64) -> GeneratedTrace {
    let slots = baseline_slots(template, seed, noise);
    GeneratedTrace {
        events: to_events(&slots, &format!("{}-{seed}", template.name)),
        truth: GroundTruth {
            manifests: false,
            spurious: Vec::new(),
            missing: Vec::new(),
            background: background_positions(&slots),
        },
    }
}

/// An idle trace spanning `length` trace-equivalents of time: only
/// background calls, each pair Poisson with mean `rate * length`.
pub fn generate_idle(template: &WorkloadTemplate, seed: u64, length: f64) -> GeneratedTrace {
    let mut rng = seeded_rng(seed);
    let mut slots = Vec::new();
    for spec in &template.background {
        for _ in 0..poisson(spec.rate * length.max(0.0), &mut rng) {
            slots.push(background_slot(spec));
        }
    }
    slots.shuffle(&mut rng);
    GeneratedTrace {
        events: to_events(&slots, &format!("{}-idle-{seed}", template.name)),
        truth: GroundTruth {
            background: (0..slots.len()).collect(),
            ..GroundTruth::default()
        },
    }
}
