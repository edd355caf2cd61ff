use std::collections::BTreeSet;
use std::io::Write;

use rand::seq::index::sample;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{derive_seed, mean_std, stream};
use crate::alignment::select_reference;
use crate::classifier::{Classifier, ClassifierConfig, ContextPolicy, Mode, ReferenceModels, Thresholds};
use crate::error::{Error, Result};
use crate::synthgen::seeded_rng;
use crate::trace::{EventSequence, SymbolId};
use crate::vmm::{estimate_order, EscapePolicy, DEFAULT_ORDER_CAP};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FpRunConfig {
    pub n_values: Vec<usize>,
    /// Held-out test traces per repetition.
    pub m: usize,
    pub repetitions: usize,
    pub thresholds: Thresholds,
    pub modes: Vec<Mode>,
    /// Fixed model order; `None` estimates it from each training draw.
    pub order: Option<usize>,
    pub escape: EscapePolicy,
    pub seed: u64,
}

impl Default for FpRunConfig {
    fn default() -> Self {
        FpRunConfig {
            n_values: (5..=20).collect(),
            m: 10,
            repetitions: 30,
            thresholds: Thresholds::default(),
            modes: vec![Mode::LcsOnly, Mode::LcsWithVmm],
            order: None,
            escape: EscapePolicy::Exclusion,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FpPoint {
    pub n: usize,
    pub mode: Mode,
    pub mean_fp_pct: f64,
    pub std_fp_pct: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FpSummary {
    /// One point per `(n, mode)`, ordered by `n` then by the order of modes in
    /// the config.
    pub points: Vec<FpPoint>,
    /// Symbols reported as anomalous in any run.
    pub uncertain: BTreeSet<SymbolId>,
}

impl FpSummary {
    pub fn point(&self, n: usize, mode: Mode) -> Option<&FpPoint> {
        self.points.iter().find(|p| p.n == n && p.mode == mode)
    }
}

struct Repetition {
    /// Mean FP% over the test traces, per mode.
    fp_pct: Vec<f64>,
    anomalies: BTreeSet<SymbolId>,
}

fn run_repetition(
    config: &FpRunConfig,
    corpus: &[EventSequence],
    alphabet_size: usize,
    n: usize,
    rep: usize,
) -> Result<Repetition> {
    let mut rng = seeded_rng(derive_seed(config.seed, stream::FP_DRAW, ((n as u64) << 32) | rep as u64));
    let picked = sample(&mut rng, corpus.len(), n + config.m).into_vec();
    let (train_idx, test_idx) = picked.split_at(n);
    let training: Vec<EventSequence> = train_idx.iter().map(|&i| corpus[i].clone()).collect();
    let order = match config.order {
        Some(d) => d,
        None => estimate_order(&training)?.capped(DEFAULT_ORDER_CAP),
    };
    let models = ReferenceModels::new(&training, order, alphabet_size, config.escape)?;

    let per_test: Vec<(Vec<f64>, BTreeSet<SymbolId>)> = test_idx
        .par_iter()
        .map(|&t| {
            let test = corpus[t].symbols();
            // One alignment per test trace, shared by every mode.
            let (reference, alignment) = select_reference(test, models.training())?;
            let mut pcts = Vec::with_capacity(config.modes.len());
            let mut symbols = BTreeSet::new();
            for &mode in &config.modes {
                let classifier = Classifier::new(ClassifierConfig {
                    thresholds: config.thresholds,
                    mode,
                    order,
                    escape: config.escape,
                    context: ContextPolicy::AllPreceding,
                })?;
                let model = (mode == Mode::LcsWithVmm).then(|| models.get(reference));
                let report = classifier.label(
                    &corpus[t].events()[0].trace_id,
                    test,
                    models.training()[reference],
                    reference,
                    &alignment,
                    model,
                );
                let len = alignment.diff_len().max(1);
                pcts.push(100.0 * report.summary.anomalies() as f64 / len as f64);
                symbols.extend(report.anomalies().map(|a| a.symbol));
            }
            Ok((pcts, symbols))
        })
        .collect::<Result<_>>()?;

    let mut fp_pct = vec![0.0; config.modes.len()];
    let mut anomalies = BTreeSet::new();
    for (pcts, symbols) in per_test {
        for (acc, p) in fp_pct.iter_mut().zip(pcts) {
            *acc += p;
        }
        anomalies.extend(symbols);
    }
    for acc in &mut fp_pct {
        *acc /= config.m.max(1) as f64;
    }
    Ok(Repetition { fp_pct, anomalies })
}

/// Every anomaly on a fault-free test trace is a false positive.
///
/// Each repetition draws `n` training and `m` test traces without
/// replacement, so the two sets are disjoint.
pub fn eval_false_positives(config: &FpRunConfig, corpus: &[EventSequence], alphabet_size: usize) -> Result<FpSummary> {
    config.thresholds.validate()?;
    let max_n = config.n_values.iter().copied().max().unwrap_or(0);
    if let Some(&n) = config.n_values.iter().find(|&&n| n < 2) {
        return Err(Error::InsufficientTraining { needed: 2, have: n });
    }
    if corpus.len() < max_n + config.m {
        return Err(Error::InsufficientCorpus {
            needed: max_n + config.m,
            have: corpus.len(),
        });
    }
    if let Some(empty) = corpus.iter().position(|t| t.is_empty()) {
        log::warn!("fault-free trace {empty} is empty after filtering");
        return Err(Error::EmptySequence);
    }

    let jobs: Vec<(usize, usize)> = config
        .n_values
        .iter()
        .flat_map(|&n| (0..config.repetitions).map(move |r| (n, r)))
        .collect();
    let results: Vec<Repetition> = jobs
        .par_iter()
        .map(|&(n, r)| run_repetition(config, corpus, alphabet_size, n, r))
        .collect::<Result<_>>()?;

    let mut points = Vec::new();
    let mut uncertain = BTreeSet::new();
    for (k, &n) in config.n_values.iter().enumerate() {
        let reps = &results[k * config.repetitions..(k + 1) * config.repetitions];
        for (mi, &mode) in config.modes.iter().enumerate() {
            let values: Vec<f64> = reps.iter().map(|r| r.fp_pct[mi]).collect();
            let (mean, std) = mean_std(&values);
            points.push(FpPoint {
                n,
                mode,
                mean_fp_pct: mean,
                std_fp_pct: std,
            });
        }
        for r in reps {
            uncertain.extend(r.anomalies.iter().copied());
        }
    }
    Ok(FpSummary { points, uncertain })
}

/// Writes `n,mode,mean_fp_pct,std_fp_pct` rows.
pub fn write_fp_csv(points: &[FpPoint], out: impl Write) -> Result<()> {
    #[derive(Serialize)]
    struct Row<'a> {
        n: usize,
        mode: &'a str,
        mean_fp_pct: f64,
        std_fp_pct: f64,
    }
    let mut w = csv::Writer::from_writer(out);
    for p in points {
        w.serialize(Row {
            n: p.n,
            mode: p.mode.as_str(),
            mean_fp_pct: p.mean_fp_pct,
            std_fp_pct: p.std_fp_pct,
        })?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}
