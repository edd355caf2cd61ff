use std::collections::{BTreeMap, BTreeSet, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::Experiment;
use crate::alignment::select_reference;
use crate::classifier::{
    ClassificationReport, Classifier, ClassifierConfig, ContextPolicy, Label, Mode, ReferenceModels, Thresholds,
};
use crate::error::{Error, Result};
use crate::synthgen::FaultKind;
use crate::trace::{EventSequence, SymbolId};
use crate::vmm::{estimate_order, EscapePolicy, DEFAULT_ORDER_CAP};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FnRunConfig {
    pub thresholds: Thresholds,
    pub modes: Vec<Mode>,
    pub order: Option<usize>,
    pub escape: EscapePolicy,
}

impl Default for FnRunConfig {
    fn default() -> Self {
        FnRunConfig {
            thresholds: Thresholds::default(),
            modes: vec![Mode::LcsOnly, Mode::LcsWithVmm],
            order: None,
            escape: EscapePolicy::Exclusion,
        }
    }
}

/// Per-experiment result for one mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentOutcome {
    pub id: String,
    pub kind: FaultKind,
    pub mode: Mode,
    pub manifests: bool,
    pub detected: bool,
    /// Ground-truth events after uncertain symbols are dropped.
    pub truth_spurious: usize,
    pub truth_missing: usize,
    /// Multiset overlap between reported and ground-truth symbols.
    pub matched_spurious: usize,
    pub matched_missing: usize,
    pub report: ClassificationReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FnResult {
    pub mode: Mode,
    /// Experiments whose fault manifested.
    pub failed: usize,
    pub undetected: usize,
    pub fn_pct: f64,
    pub failed_by_kind: BTreeMap<FaultKind, usize>,
    pub undetected_by_kind: BTreeMap<FaultKind, usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FnSummary {
    pub order: usize,
    pub results: Vec<FnResult>,
    /// Ordered by experiment, then by mode.
    pub outcomes: Vec<ExperimentOutcome>,
}

impl FnSummary {
    pub fn result(&self, mode: Mode) -> Option<&FnResult> {
        self.results.iter().find(|r| r.mode == mode)
    }

    /// Matched ground-truth events over all ground-truth events, for `mode`.
    pub fn recall(&self, mode: Mode) -> f64 {
        let (hit, total) = self
            .outcomes
            .iter()
            .filter(|o| o.mode == mode)
            .fold((0, 0), |(h, t), o| {
                (h + o.matched_spurious + o.matched_missing, t + o.truth_spurious + o.truth_missing)
            });
        if total == 0 {
            1.0
        } else {
            hit as f64 / total as f64
        }
    }
}

fn multiset(symbols: impl IntoIterator<Item = SymbolId>, drop: &BTreeSet<SymbolId>) -> HashMap<SymbolId, usize> {
    let mut m = HashMap::new();
    for s in symbols.into_iter().filter(|s| !drop.contains(s)) {
        *m.entry(s).or_insert(0) += 1;
    }
    m
}

fn overlap(a: &HashMap<SymbolId, usize>, b: &HashMap<SymbolId, usize>) -> usize {
    a.iter().map(|(s, &c)| c.min(b.get(s).copied().unwrap_or(0))).sum()
}

/// Classifies every experiment against `training` and counts failed
/// experiments without a single anomaly that matches their ground truth.
///
/// Symbols in `uncertain` are ignored on both sides of the match.
pub fn eval_false_negatives(
    config: &FnRunConfig,
    training: &[EventSequence],
    experiments: &[Experiment],
    uncertain: &BTreeSet<SymbolId>,
    alphabet_size: usize,
) -> Result<FnSummary> {
    config.thresholds.validate()?;
    if experiments.is_empty() {
        return Err(Error::NoExperiments);
    }
    let order = match config.order {
        Some(d) => d,
        None => estimate_order(training)?.capped(DEFAULT_ORDER_CAP),
    };
    let models = ReferenceModels::new(training, order, alphabet_size, config.escape)?;

    let outcomes: Vec<Vec<ExperimentOutcome>> = experiments
        .par_iter()
        .map(|exp| {
            let trace = exp.trace.symbols();
            if let Some(&bad) = trace.iter().find(|s| s.index() >= alphabet_size) {
                return Err(Error::SymbolOutOfRange {
                    symbol: bad,
                    alphabet_size,
                });
            }
            let (reference, alignment) = select_reference(trace, models.training())?;
            let truth_s = multiset(exp.truth.spurious.iter().copied(), uncertain);
            let truth_m = multiset(exp.truth.missing.iter().copied(), uncertain);
            config
                .modes
                .iter()
                .map(|&mode| {
                    let classifier = Classifier::new(ClassifierConfig {
                        thresholds: config.thresholds,
                        mode,
                        order,
                        escape: config.escape,
                        context: ContextPolicy::AllPreceding,
                    })?;
                    let model = (mode == Mode::LcsWithVmm).then(|| models.get(reference));
                    let report = classifier.label(
                        &exp.id,
                        trace,
                        models.training()[reference],
                        reference,
                        &alignment,
                        model,
                    );
                    let got_s = multiset(report.symbols_labeled(Label::Spurious), uncertain);
                    let got_m = multiset(report.symbols_labeled(Label::Missing), uncertain);
                    let matched_spurious = overlap(&got_s, &truth_s);
                    let matched_missing = overlap(&got_m, &truth_m);
                    Ok(ExperimentOutcome {
                        id: exp.id.clone(),
                        kind: exp.kind,
                        mode,
                        manifests: exp.truth.manifests,
                        detected: matched_spurious + matched_missing > 0,
                        truth_spurious: truth_s.values().sum(),
                        truth_missing: truth_m.values().sum(),
                        matched_spurious,
                        matched_missing,
                        report,
                    })
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    let outcomes: Vec<ExperimentOutcome> = outcomes.into_iter().flatten().collect();

    let results = config
        .modes
        .iter()
        .map(|&mode| {
            let mut failed_by_kind = BTreeMap::new();
            let mut undetected_by_kind = BTreeMap::new();
            for o in outcomes.iter().filter(|o| o.mode == mode && o.manifests) {
                *failed_by_kind.entry(o.kind).or_insert(0) += 1;
                if !o.detected {
                    *undetected_by_kind.entry(o.kind).or_insert(0) += 1;
                }
            }
            let failed: usize = failed_by_kind.values().sum();
            let undetected: usize = undetected_by_kind.values().sum();
            FnResult {
                mode,
                failed,
                undetected,
                fn_pct: if failed == 0 {
                    0.0
                } else {
                    100.0 * undetected as f64 / failed as f64
                },
                failed_by_kind,
                undetected_by_kind,
            }
        })
        .collect();
    Ok(FnSummary {
        order,
        results,
        outcomes,
    })
}
