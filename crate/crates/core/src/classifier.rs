//! Two-step classification of a fault-injected trace.
//!
//! 1. Align the trace against the most similar fault-free trace (the
//!    reference). Matched events are common.
//! 2. Train PPM-C on the remaining fault-free traces.
//! 3. An event only in the injected trace is spurious when the model gives it
//!    probability below `eps_spurious` in its position.
//! 4. An event only in the reference is missing when the model gives it
//!    probability above `eps_missing` in its position of the reference.
//!
//! Both comparisons are strict. The [`Mode::LcsOnly`] baseline skips the
//! model and reports every alignment difference.

use std::sync::OnceLock;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::alignment::{select_reference, AlignmentResult, DiffRow};
use crate::error::{Error, Result};
use crate::trace::SymbolId;
use crate::vmm::{EscapePolicy, PpmModel};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Thresholds {
    pub eps_spurious: f64,
    pub eps_missing: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds {
            eps_spurious: 0.20,
            eps_missing: 0.80,
        }
    }
}

impl Thresholds {
    pub fn new(eps_spurious: f64, eps_missing: f64) -> Result<Self> {
        let t = Thresholds {
            eps_spurious,
            eps_missing,
        };
        t.validate()?;
        Ok(t)
    }

    /// Both values must be probabilities. An inverted pair is allowed but
    /// logged.
    pub fn validate(&self) -> Result<()> {
        for (name, value) in [("eps_spurious", self.eps_spurious), ("eps_missing", self.eps_missing)] {
            if !(0.0..=1.0).contains(&value) {
                return Err(Error::InvalidThreshold { name, value });
            }
        }
        if self.eps_spurious > self.eps_missing {
            warn!(
                "eps_spurious ({}) exceeds eps_missing ({})",
                self.eps_spurious, self.eps_missing
            );
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Mode {
    #[serde(rename = "lcs")]
    LcsOnly,
    #[default]
    #[serde(rename = "vmm")]
    LcsWithVmm,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::LcsOnly => "lcs",
            Mode::LcsWithVmm => "vmm",
        }
    }
}

/// Which preceding injected events form the context of a probability query.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContextPolicy {
    /// Every preceding event, anomalous or not.
    #[default]
    AllPreceding,
    /// Preceding events minus those already labeled spurious.
    SkipAnomalous,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassifierConfig {
    pub thresholds: Thresholds,
    pub mode: Mode,
    /// Maximal model order `D`.
    pub order: usize,
    pub escape: EscapePolicy,
    pub context: ContextPolicy,
}

impl ClassifierConfig {
    pub fn new(order: usize) -> Self {
        ClassifierConfig {
            thresholds: Thresholds::default(),
            mode: Mode::LcsWithVmm,
            order,
            escape: EscapePolicy::Exclusion,
            context: ContextPolicy::AllPreceding,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Common,
    Spurious,
    Missing,
    NonAnomalous,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    Injected,
    Reference,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub origin: Origin,
    /// Index into the trace named by `origin`.
    pub position: usize,
    /// For common events, the matching index in the reference.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub counterpart: Option<usize>,
    pub symbol: SymbolId,
    pub label: Label,
    /// Model probability, present exactly when the model decided the label.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub probability: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub context: Option<Vec<SymbolId>>,
}

impl EventRecord {
    pub fn is_anomaly(&self) -> bool {
        matches!(self.label, Label::Spurious | Label::Missing)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Summary {
    pub common: usize,
    pub spurious: usize,
    pub missing: usize,
    /// Injected-only events the model considered plausible.
    pub non_anomalous_injected: usize,
    /// Reference-only events whose absence the model considered plausible.
    pub non_anomalous_reference: usize,
}

impl Summary {
    pub fn anomalies(&self) -> usize {
        self.spurious + self.missing
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationReport {
    pub experiment: String,
    pub reference_index: usize,
    pub mode: Mode,
    pub thresholds: Thresholds,
    pub order: usize,
    /// Records in two-column diff order.
    pub records: Vec<EventRecord>,
    pub summary: Summary,
}

impl ClassificationReport {
    pub fn anomalies(&self) -> impl Iterator<Item = &EventRecord> {
        self.records.iter().filter(|r| r.is_anomaly())
    }

    pub fn symbols_labeled(&self, label: Label) -> Vec<SymbolId> {
        self.records
            .iter()
            .filter(|r| r.label == label)
            .map(|r| r.symbol)
            .collect()
    }
}

/// Lazily trained models, one per choice of reference: the model for
/// reference `i` is trained on every fault-free trace except `i`.
///
/// Safe to share between threads; each model is trained at most once.
pub struct ReferenceModels<'a> {
    training: Vec<&'a [SymbolId]>,
    order: usize,
    alphabet_size: usize,
    escape: EscapePolicy,
    models: Vec<OnceLock<PpmModel>>,
}

impl<'a> ReferenceModels<'a> {
    pub fn new<S: AsRef<[SymbolId]>>(
        training: &'a [S],
        order: usize,
        alphabet_size: usize,
        escape: EscapePolicy,
    ) -> Result<Self> {
        if training.len() < 2 {
            return Err(Error::InsufficientTraining {
                needed: 2,
                have: training.len(),
            });
        }
        if alphabet_size == 0 {
            return Err(Error::EmptyAlphabet);
        }
        let training: Vec<&[SymbolId]> = training.iter().map(|t| t.as_ref()).collect();
        for t in &training {
            if let Some(&bad) = t.iter().find(|s| s.index() >= alphabet_size) {
                return Err(Error::SymbolOutOfRange {
                    symbol: bad,
                    alphabet_size,
                });
            }
        }
        if training.len() == 2 {
            warn!("only two fault-free traces: the model is trained on a single trace");
        }
        let models = (0..training.len()).map(|_| OnceLock::new()).collect();
        Ok(ReferenceModels {
            training,
            order,
            alphabet_size,
            escape,
            models,
        })
    }

    pub fn training(&self) -> &[&'a [SymbolId]] {
        &self.training
    }

    pub fn alphabet_size(&self) -> usize {
        self.alphabet_size
    }

    /// The model that leaves out training trace `reference`.
    pub fn get(&self, reference: usize) -> &PpmModel {
        self.models[reference].get_or_init(|| {
            let rest: Vec<&[SymbolId]> = self
                .training
                .iter()
                .enumerate()
                .filter(|&(i, _)| i != reference)
                .map(|(_, t)| *t)
                .collect();
            PpmModel::train(&rest, self.order, self.alphabet_size, self.escape)
                .expect("inputs validated on construction")
        })
    }

    /// Trains every model up front.
    pub fn train_all(&self) {
        use rayon::prelude::*;
        (0..self.models.len()).into_par_iter().for_each(|i| {
            self.get(i);
        });
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Classifier {
    pub config: ClassifierConfig,
}

impl Classifier {
    pub fn new(config: ClassifierConfig) -> Result<Self> {
        config.thresholds.validate()?;
        Ok(Classifier { config })
    }

    /// Runs the full procedure for one fault-injected trace.
    ///
    /// `alphabet_size` must cover every symbol of `injected` and `training`.
    pub fn classify<S: AsRef<[SymbolId]> + Sync>(
        &self,
        experiment: &str,
        injected: &[SymbolId],
        training: &[S],
        alphabet_size: usize,
    ) -> Result<ClassificationReport> {
        let models = ReferenceModels::new(training, self.config.order, alphabet_size, self.config.escape)?;
        self.classify_with(experiment, injected, &models)
    }

    /// Like [`Classifier::classify`], reusing already-built models.
    pub fn classify_with(
        &self,
        experiment: &str,
        injected: &[SymbolId],
        models: &ReferenceModels<'_>,
    ) -> Result<ClassificationReport> {
        if let Some(&bad) = injected.iter().find(|s| s.index() >= models.alphabet_size()) {
            return Err(Error::SymbolOutOfRange {
                symbol: bad,
                alphabet_size: models.alphabet_size(),
            });
        }
        let (reference_index, alignment) = select_reference(injected, models.training())?;
        let model = match self.config.mode {
            Mode::LcsOnly => None,
            Mode::LcsWithVmm => Some(models.get(reference_index)),
        };
        Ok(self.label(
            experiment,
            injected,
            models.training()[reference_index],
            reference_index,
            &alignment,
            model,
        ))
    }

    /// Labels an existing alignment of `injected` (side A) against
    /// `reference` (side B). `model` must be given for [`Mode::LcsWithVmm`].
    pub fn label(
        &self,
        experiment: &str,
        injected: &[SymbolId],
        reference: &[SymbolId],
        reference_index: usize,
        alignment: &AlignmentResult,
        model: Option<&PpmModel>,
    ) -> ClassificationReport {
        let cfg = &self.config;
        let model = match cfg.mode {
            Mode::LcsOnly => None,
            Mode::LcsWithVmm => Some(model.expect("the VMM mode needs a model")),
        };
        let order = cfg.order;
        let window = |seq: &[SymbolId]| seq[seq.len().saturating_sub(order)..].to_vec();

        // Decisions for the injected side, walking the trace in order so the
        // context can skip earlier spurious events if asked to.
        let mut injected_label = vec![Label::Common; injected.len()];
        let mut injected_prob: Vec<Option<(f64, Vec<SymbolId>)>> = vec![None; injected.len()];
        let mut is_diff = vec![false; injected.len()];
        for &i in &alignment.only_in_a {
            is_diff[i] = true;
        }
        let mut history: Vec<SymbolId> = Vec::with_capacity(injected.len());
        for (i, &sym) in injected.iter().enumerate() {
            let mut keep_in_history = true;
            if is_diff[i] {
                match model {
                    None => injected_label[i] = Label::Spurious,
                    Some(model) => {
                        let ctx = match cfg.context {
                            ContextPolicy::AllPreceding => window(&injected[..i]),
                            ContextPolicy::SkipAnomalous => window(&history),
                        };
                        let p = model.predict(&ctx, sym);
                        injected_label[i] = if p < cfg.thresholds.eps_spurious {
                            Label::Spurious
                        } else {
                            Label::NonAnomalous
                        };
                        keep_in_history = injected_label[i] != Label::Spurious;
                        injected_prob[i] = Some((p, ctx));
                    }
                }
            }
            if keep_in_history || cfg.context == ContextPolicy::AllPreceding {
                history.push(sym);
            }
        }

        let reference_decision = |j: usize| -> (Label, Option<(f64, Vec<SymbolId>)>) {
            match model {
                None => (Label::Missing, None),
                Some(model) => {
                    let ctx = window(&reference[..j]);
                    let p = model.predict(&ctx, reference[j]);
                    let label = if p > cfg.thresholds.eps_missing {
                        Label::Missing
                    } else {
                        Label::NonAnomalous
                    };
                    (label, Some((p, ctx)))
                }
            }
        };

        let mut summary = Summary::default();
        let mut records = Vec::with_capacity(alignment.diff_len());
        for row in alignment.rows() {
            let record = match row {
                DiffRow::Both(i, j) => EventRecord {
                    origin: Origin::Injected,
                    position: i,
                    counterpart: Some(j),
                    symbol: injected[i],
                    label: Label::Common,
                    probability: None,
                    context: None,
                },
                DiffRow::OnlyA(i) => {
                    let (probability, context) = match injected_prob[i].take() {
                        Some((p, c)) => (Some(p), Some(c)),
                        None => (None, None),
                    };
                    EventRecord {
                        origin: Origin::Injected,
                        position: i,
                        counterpart: None,
                        symbol: injected[i],
                        label: injected_label[i],
                        probability,
                        context,
                    }
                }
                DiffRow::OnlyB(j) => {
                    let (label, decided) = reference_decision(j);
                    let (probability, context) = match decided {
                        Some((p, c)) => (Some(p), Some(c)),
                        None => (None, None),
                    };
                    EventRecord {
                        origin: Origin::Reference,
                        position: j,
                        counterpart: None,
                        symbol: reference[j],
                        label,
                        probability,
                        context,
                    }
                }
            };
            match (record.label, record.origin) {
                (Label::Common, _) => summary.common += 1,
                (Label::Spurious, _) => summary.spurious += 1,
                (Label::Missing, _) => summary.missing += 1,
                (Label::NonAnomalous, Origin::Injected) => summary.non_anomalous_injected += 1,
                (Label::NonAnomalous, Origin::Reference) => summary.non_anomalous_reference += 1,
            }
            records.push(record);
        }

        ClassificationReport {
            experiment: experiment.to_string(),
            reference_index,
            mode: cfg.mode,
            thresholds: cfg.thresholds,
            order,
            records,
            summary,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::alignment::lcs;

    fn ids(text: &str) -> Vec<SymbolId> {
        text.bytes().map(|b| SymbolId((b - b'a') as u32)).collect()
    }

    #[test]
    fn threshold_validation() {
        assert!(Thresholds::new(0.2, 0.8).is_ok());
        assert!(matches!(
            Thresholds::new(-0.1, 0.8),
            Err(Error::InvalidThreshold { name: "eps_spurious", .. })
        ));
        assert!(Thresholds::new(0.2, 1.5).is_err());
        // Inverted is allowed (with a warning).
        assert!(Thresholds::new(0.9, 0.1).is_ok());
    }

    #[test]
    fn exact_copy_has_no_anomalies() {
        let training = vec![ids("abcdabce"), ids("abdcabce"), ids("abcdabec")];
        let c = Classifier::new(ClassifierConfig::new(3)).unwrap();
        for t in &training {
            let r = c.classify("copy", t, &training, 5).unwrap();
            assert_eq!(r.summary.anomalies(), 0);
            assert_eq!(r.summary.common, t.len());
            assert!(r.records.iter().all(|rec| rec.label == Label::Common));
        }
    }

    #[test]
    fn needs_two_training_traces() {
        let c = Classifier::new(ClassifierConfig::new(2)).unwrap();
        let one = vec![ids("abc")];
        assert!(matches!(
            c.classify("x", &ids("abc"), &one, 3),
            Err(Error::InsufficientTraining { needed: 2, have: 1 })
        ));
    }

    /// A model whose prediction for `sym` after `ctx` is a chosen value is
    /// awkward to build, so these tests drive `label` with the boundary cases
    /// the thresholds care about, using a real model and reading back its
    /// probability.
    #[test]
    fn thresholds_are_strict() {
        let training = vec![ids("ab"), ids("ab")];
        let model = PpmModel::train(&training, 1, 3, EscapePolicy::Exclusion).unwrap();
        let injected = ids("ac");
        let reference = ids("ab");
        let al = lcs(&injected, &reference);
        let p_c = model.predict(&ids("a"), SymbolId(2));
        let p_b = model.predict(&ids("a"), SymbolId(1));

        let mut cfg = ClassifierConfig::new(1);
        cfg.thresholds = Thresholds::new(p_c, p_b).unwrap();
        let r = Classifier::new(cfg).unwrap().label("t", &injected, &reference, 0, &al, Some(&model));
        assert_eq!(r.summary.spurious, 0, "p == eps_spurious is not spurious");
        assert_eq!(r.summary.missing, 0, "p == eps_missing is not missing");

        cfg.thresholds = Thresholds::new(p_c + 1e-9, p_b - 1e-9).unwrap();
        let r = Classifier::new(cfg).unwrap().label("t", &injected, &reference, 0, &al, Some(&model));
        assert_eq!(r.summary.spurious, 1);
        assert_eq!(r.summary.missing, 1);
    }

    #[test]
    fn lcs_only_reports_every_difference_without_probabilities() {
        let training = vec![ids("abcd"), ids("abcd")];
        let mut cfg = ClassifierConfig::new(2);
        cfg.mode = Mode::LcsOnly;
        let r = Classifier::new(cfg).unwrap().classify("t", &ids("abxd"), &training, 24).unwrap();
        assert_eq!(r.summary.spurious, 1);
        assert_eq!(r.summary.missing, 1);
        assert!(r.records.iter().all(|rec| rec.probability.is_none()));
    }

    #[test]
    fn probability_present_iff_model_decided() {
        let training = vec![ids("abcabd"), ids("abdabc"), ids("abcabc")];
        let c = Classifier::new(ClassifierConfig::new(3)).unwrap();
        let r = c.classify("t", &ids("abxabcd"), &training, 24).unwrap();
        for rec in &r.records {
            assert_eq!(rec.probability.is_some(), rec.label != Label::Common, "{rec:?}");
            assert_eq!(rec.context.is_some(), rec.probability.is_some());
        }
        assert_eq!(r.records.len(), r.summary.common + r.summary.anomalies()
            + r.summary.non_anomalous_injected + r.summary.non_anomalous_reference);
    }

    #[test]
    fn skip_anomalous_drops_spurious_events_from_later_contexts() {
        let training = vec![ids("abcdef"), ids("abcdef"), ids("abcdef")];
        let injected = ids("abcxydef");
        let mut cfg = ClassifierConfig::new(2);
        cfg.context = ContextPolicy::SkipAnomalous;
        let r = Classifier::new(cfg).unwrap().classify("t", &injected, &training, 26).unwrap();
        let y = r.records.iter().find(|rec| rec.symbol == ids("y")[0]).unwrap();
        assert_eq!(y.label, Label::Spurious);
        assert_eq!(y.context.as_deref(), Some(&ids("bc")[..]));

        cfg.context = ContextPolicy::AllPreceding;
        let r = Classifier::new(cfg).unwrap().classify("t", &injected, &training, 26).unwrap();
        let y = r.records.iter().find(|rec| rec.symbol == ids("y")[0]).unwrap();
        assert_eq!(y.context.as_deref(), Some(&ids("cx")[..]));
    }
}
