//! Accuracy and performance harness over synthetic corpora.
//!
//! - [`eval_false_positives`]: anomalies reported on held-out fault-free
//!   traces, as a function of the training-set size.
//! - [`eval_false_negatives`]: failed experiments with no reported anomaly
//!   matching their ground truth.
//! - [`benchmark_scaling`]: wall-clock growth along three axes.
//!
//! Every random draw derives from one master seed through [`derive_seed`].

mod bench;
mod fp;
mod negatives;

use std::collections::BTreeSet;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::preprocess::BackgroundDictionary;
use crate::synthgen::{
    generate_fault_free, generate_idle, inject_fault, sample_fault, FaultKind, FaultSpec, GeneratedTrace, WorkloadTemplate,
};
use crate::trace::{EventSequence, SymbolId, SymbolTable, TraceLabel};
use crate::Result;

pub use bench::{benchmark_scaling, Axis, AxisFit, BenchConfig, BenchReport, TimingPoint};
pub use fp::{eval_false_positives, write_fp_csv, FpPoint, FpRunConfig, FpSummary};
pub use negatives::{eval_false_negatives, ExperimentOutcome, FnResult, FnRunConfig, FnSummary};

/// SplitMix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Independent seed for item `index` of stream `stream`.
pub fn derive_seed(master: u64, stream: u64, index: u64) -> u64 {
    mix(master ^ mix(stream ^ mix(index)))
}

pub(crate) mod stream {
    pub const FAULT_FREE: u64 = 1;
    pub const IDLE: u64 = 2;
    pub const EXPERIMENT: u64 = 3;
    pub const FAULT_CHOICE: u64 = 4;
    pub const FP_DRAW: u64 = 5;
    pub const BENCH: u64 = 6;
}

/// Mean and sample standard deviation; the deviation of one value is 0.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Least-squares line through `points`: `(slope, intercept, r2)`.
///
/// `r2` is 1 when the values are all equal.
pub fn linear_fit(points: &[(f64, f64)]) -> (f64, f64, f64) {
    let n = points.len() as f64;
    if points.len() < 2 {
        return (0.0, points.first().map_or(0.0, |p| p.1), 1.0);
    }
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = points.iter().map(|p| (p.1 - my).powi(2)).sum();
    if sxx == 0.0 {
        return (0.0, my, 0.0);
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r2 = if syy == 0.0 { 1.0 } else { (sxy * sxy) / (sxx * syy) };
    (slope, intercept, r2)
}

/// Ground truth reduced to symbols.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TruthSymbols {
    pub manifests: bool,
    pub spurious: Vec<SymbolId>,
    pub missing: Vec<SymbolId>,
}

/// A fault-injected trace, background-filtered, with its ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct Experiment {
    pub id: String,
    pub kind: FaultKind,
    pub trace: EventSequence,
    pub truth: TruthSymbols,
}

/// How experiments are drawn for a synthetic corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentMix {
    /// Kinds are assigned round-robin.
    pub kinds: Vec<FaultKind>,
    /// Probability that an injection has no effect.
    pub non_manifesting: f64,
    /// Probability that a wrong value also omits the next block.
    pub propagate: f64,
    /// Positions a delayed call moves; 0 keeps delays symbol-invariant.
    pub reorder_window: usize,
}

impl Default for ExperimentMix {
    fn default() -> Self {
        ExperimentMix::mixed()
    }
}

impl ExperimentMix {
    pub fn only(kind: FaultKind) -> Self {
        ExperimentMix {
            kinds: vec![kind],
            non_manifesting: 0.0,
            propagate: 0.0,
            reorder_window: 0,
        }
    }

    pub fn mixed() -> Self {
        ExperimentMix {
            kinds: FaultKind::ALL.to_vec(),
            non_manifesting: 1.0 / 3.0,
            propagate: 0.5,
            reorder_window: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusSpec {
    pub noise: f64,
    pub fault_free: usize,
    pub idle: usize,
    /// Length of each idle trace in trace-equivalents.
    pub idle_length: f64,
    pub experiments: usize,
    pub mix: ExperimentMix,
    pub seed: u64,
}

/// A generated experiment before symbolization.
#[derive(Debug, Clone, PartialEq)]
pub struct RawExperiment {
    pub fault: FaultSpec,
    pub trace: GeneratedTrace,
}

/// Generated traces with background events still present.
#[derive(Debug, Clone, PartialEq)]
pub struct RawCorpus {
    pub idle: Vec<GeneratedTrace>,
    pub fault_free: Vec<GeneratedTrace>,
    pub experiments: Vec<RawExperiment>,
}

impl RawCorpus {
    /// Generates every trace in parallel; each one draws from its own seed.
    pub fn generate(template: &WorkloadTemplate, spec: &CorpusSpec) -> Result<RawCorpus> {
        template.validate()?;
        if spec.mix.kinds.is_empty() && spec.experiments > 0 {
            return Err(crate::Error::InvalidFault("experiment mix lists no fault kinds".into()));
        }
        let seed = spec.seed;
        let idle = (0..spec.idle)
            .into_par_iter()
            .map(|i| generate_idle(template, derive_seed(seed, stream::IDLE, i as u64), spec.idle_length))
            .collect();
        let fault_free = (0..spec.fault_free)
            .into_par_iter()
            .map(|i| generate_fault_free(template, derive_seed(seed, stream::FAULT_FREE, i as u64), spec.noise))
            .collect();
        let experiments = (0..spec.experiments)
            .into_par_iter()
            .map(|i| {
                let mut rng = crate::synthgen::seeded_rng(derive_seed(seed, stream::FAULT_CHOICE, i as u64));
                let kind = spec.mix.kinds[i % spec.mix.kinds.len()];
                let mut fault = sample_fault(template, kind, &mut rng);
                fault.manifests = rng.random::<f64>() >= spec.mix.non_manifesting;
                fault.propagate = rng.random::<f64>() < spec.mix.propagate;
                fault.reorder_window = spec.mix.reorder_window;
                let trace = inject_fault(template, &fault, derive_seed(seed, stream::EXPERIMENT, i as u64), spec.noise)?;
                Ok(RawExperiment { fault, trace })
            })
            .collect::<Result<_>>()?;
        Ok(RawCorpus {
            idle,
            fault_free,
            experiments,
        })
    }
}

/// Background-filtered traces over one shared symbol table.
#[derive(Debug, Clone)]
pub struct Corpus {
    pub table: SymbolTable,
    pub dictionary: BackgroundDictionary,
    pub fault_free: Vec<EventSequence>,
    pub experiments: Vec<Experiment>,
}

impl Corpus {
    pub fn alphabet_size(&self) -> usize {
        self.table.len()
    }

    pub fn generate(template: &WorkloadTemplate, spec: &CorpusSpec) -> Result<Corpus> {
        Ok(Corpus::from_raw(&RawCorpus::generate(template, spec)?))
    }

    /// Registers symbols in index order (idle, fault-free, experiments), so
    /// the table does not depend on scheduling.
    pub fn from_raw(raw: &RawCorpus) -> Corpus {
        let mut table = SymbolTable::new();
        let idle: Vec<EventSequence> = raw.idle.iter().map(|g| g.to_sequence(TraceLabel::Idle, &mut table)).collect();
        let dictionary = BackgroundDictionary::build(&idle);
        let fault_free = raw
            .fault_free
            .iter()
            .map(|g| dictionary.filter(&g.to_sequence(TraceLabel::FaultFree, &mut table)))
            .collect();
        let experiments = raw
            .experiments
            .iter()
            .enumerate()
            .map(|(i, e)| {
                let g = &e.trace;
                let trace = dictionary.filter(&g.to_sequence(TraceLabel::FaultInjected, &mut table));
                let lookup = |p: &crate::trace::CallPair| table.lookup(p).expect("registered above");
                let truth = TruthSymbols {
                    manifests: g.truth.manifests,
                    spurious: g.spurious_pairs().iter().map(lookup).collect(),
                    missing: g.missing_pairs().iter().map(lookup).collect(),
                };
                Experiment {
                    id: format!("exp-{i:04}"),
                    kind: e.fault.kind,
                    trace,
                    truth,
                }
            })
            .collect();
        Corpus {
            table,
            dictionary,
            fault_free,
            experiments,
        }
    }
}

/// Symbols of every reported anomaly in `reports`.
pub fn anomaly_symbols<'a>(
    reports: impl IntoIterator<Item = &'a crate::classifier::ClassificationReport>,
) -> BTreeSet<SymbolId> {
    reports
        .into_iter()
        .flat_map(|r| r.anomalies().map(|a| a.symbol))
        .collect()
}
