use std::hint::black_box;
use std::io::Write;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::{derive_seed, linear_fit, stream, Corpus, CorpusSpec, ExperimentMix};
use crate::alignment::select_reference;
use crate::classifier::{Classifier, ClassifierConfig, ReferenceModels};
use crate::error::{Error, Result};
use crate::synthgen::WorkloadTemplate;
use crate::trace::EventSequence;
use crate::vmm::{estimate_order, EscapePolicy, PpmModel, DEFAULT_ORDER_CAP};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    /// Order estimation plus training one model.
    TrainingTraces,
    /// Reference selection plus labeling, models already trained.
    Experiments,
    /// Training plus classification at fixed counts, template repeated.
    EventsPerTrace,
}

impl Axis {
    pub fn as_str(self) -> &'static str {
        match self {
            Axis::TrainingTraces => "training_traces",
            Axis::Experiments => "experiments",
            Axis::EventsPerTrace => "events_per_trace",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchConfig {
    pub noise: f64,
    pub seed: u64,
    pub training_sizes: Vec<usize>,
    pub experiment_counts: Vec<usize>,
    /// Training traces behind the experiment axis.
    pub experiment_training: usize,
    /// Template repetition factors for the length axis.
    pub length_scales: Vec<usize>,
    pub length_training: usize,
    pub length_experiments: usize,
    /// Each point reports the fastest of this many samples.
    pub repeats: usize,
    /// A sample repeats the operation until this many seconds have passed and
    /// reports the mean per run.
    pub min_sample_secs: f64,
    pub warmup: usize,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            noise: crate::synthgen::DEFAULT_NOISE,
            seed: 0,
            training_sizes: (1..=8).map(|k| 5 * k).collect(),
            experiment_counts: vec![250, 500, 1000, 1500, 2000],
            experiment_training: 20,
            length_scales: vec![1, 2],
            length_training: 10,
            length_experiments: 50,
            repeats: 5,
            min_sample_secs: 0.05,
            warmup: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingPoint {
    pub axis: Axis,
    pub x: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AxisFit {
    pub axis: Axis,
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub points: Vec<TimingPoint>,
    pub fits: Vec<AxisFit>,
}

impl BenchReport {
    pub fn fit(&self, axis: Axis) -> Option<&AxisFit> {
        self.fits.iter().find(|f| f.axis == axis)
    }

    pub fn axis(&self, axis: Axis) -> impl Iterator<Item = &TimingPoint> {
        self.points.iter().filter(move |p| p.axis == axis)
    }

    /// Time at the largest length scale over time at the smallest.
    pub fn length_ratio(&self) -> Option<f64> {
        let pts: Vec<&TimingPoint> = self.axis(Axis::EventsPerTrace).collect();
        let lo = pts.iter().min_by(|a, b| a.x.total_cmp(&b.x))?;
        let hi = pts.iter().max_by(|a, b| a.x.total_cmp(&b.x))?;
        Some(hi.seconds / lo.seconds)
    }

    /// Writes `axis,x,seconds` rows.
    pub fn write_csv(&self, out: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["axis", "x", "seconds"])?;
        for p in &self.points {
            w.write_record([p.axis.as_str(), &p.x.to_string(), &p.seconds.to_string()])?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }
}

fn fastest(config: &BenchConfig, mut run: impl FnMut()) -> f64 {
    (0..config.repeats.max(1))
        .map(|_| {
            let start = Instant::now();
            let mut runs = 0u32;
            loop {
                run();
                runs += 1;
                let elapsed = start.elapsed().as_secs_f64();
                if elapsed >= config.min_sample_secs {
                    break elapsed / runs as f64;
                }
            }
        })
        .fold(f64::INFINITY, f64::min)
}

fn corpus(template: &WorkloadTemplate, config: &BenchConfig, fault_free: usize, experiments: usize, salt: u64) -> Result<Corpus> {
    Corpus::generate(
        template,
        &CorpusSpec {
            noise: config.noise,
            fault_free,
            idle: 2,
            idle_length: 5.0,
            experiments,
            mix: ExperimentMix::mixed(),
            seed: derive_seed(config.seed, stream::BENCH, salt),
        },
    )
}

fn train(training: &[EventSequence], alphabet: usize) -> Result<PpmModel> {
    let d = estimate_order(training)?.capped(DEFAULT_ORDER_CAP);
    PpmModel::train(training, d, alphabet, EscapePolicy::Exclusion)
}

/// Sequential classification of every experiment against `models`.
fn classify_all(corpus: &Corpus, models: &ReferenceModels<'_>, classifier: &Classifier, count: usize) -> Result<usize> {
    let mut anomalies = 0;
    for exp in corpus.experiments.iter().take(count) {
        let trace = exp.trace.symbols();
        let (reference, alignment) = select_reference(trace, models.training())?;
        let report = classifier.label(
            &exp.id,
            trace,
            models.training()[reference],
            reference,
            &alignment,
            Some(models.get(reference)),
        );
        anomalies += report.summary.anomalies();
    }
    Ok(anomalies)
}

/// Times the pipeline along three axes on corpora drawn from `template`.
///
/// Runs single-threaded so that the numbers measure work, not parallel
/// efficiency.
pub fn benchmark_scaling(template: &WorkloadTemplate, config: &BenchConfig) -> Result<BenchReport> {
    let mut points = Vec::new();

    let max_n = config.training_sizes.iter().copied().max().unwrap_or(0);
    let max_k = config.experiment_counts.iter().copied().max().unwrap_or(0);
    let base = corpus(template, config, max_n.max(config.experiment_training), max_k, 0)?;
    let alphabet = base.alphabet_size();

    if let Some(&n) = config.training_sizes.first() {
        for _ in 0..config.warmup {
            black_box(train(&base.fault_free[..n], alphabet)?);
        }
    }
    for &n in &config.training_sizes {
        let training = &base.fault_free[..n];
        let mut err = None;
        let seconds = fastest(config, || {
            if let Err(e) = train(training, alphabet).map(black_box) {
                err = Some(e);
            }
        });
        if let Some(e) = err {
            return Err(e);
        }
        points.push(TimingPoint {
            axis: Axis::TrainingTraces,
            x: n as f64,
            seconds,
        });
    }

    if !config.experiment_counts.is_empty() {
        let training = &base.fault_free[..config.experiment_training];
        let d = estimate_order(training)?.capped(DEFAULT_ORDER_CAP);
        let models = ReferenceModels::new(training, d, alphabet, EscapePolicy::Exclusion)?;
        models.train_all();
        let classifier = Classifier::new(ClassifierConfig::new(d))?;
        for _ in 0..config.warmup {
            black_box(classify_all(&base, &models, &classifier, config.experiment_counts[0])?);
        }
        for &k in &config.experiment_counts {
            let mut err = None;
            let seconds = fastest(config, || {
                if let Err(e) = classify_all(&base, &models, &classifier, k).map(black_box) {
                    err = Some(e);
                }
            });
            if let Some(e) = err {
                return Err(e);
            }
            points.push(TimingPoint {
                axis: Axis::Experiments,
                x: k as f64,
                seconds,
            });
        }
    }

    for &scale in &config.length_scales {
        let scaled = WorkloadTemplate {
            name: format!("{}x{scale}", template.name),
            blocks: template.blocks.iter().cycle().take(template.blocks.len() * scale).cloned().collect(),
            background: template.background.clone(),
        };
        let c = corpus(&scaled, config, config.length_training, config.length_experiments, scale as u64)?;
        let run = || -> Result<()> {
            let training = &c.fault_free;
            let d = estimate_order(training)?.capped(DEFAULT_ORDER_CAP);
            let models = ReferenceModels::new(training, d, c.alphabet_size(), EscapePolicy::Exclusion)?;
            for i in 0..training.len() {
                black_box(models.get(i));
            }
            let classifier = Classifier::new(ClassifierConfig::new(d))?;
            black_box(classify_all(&c, &models, &classifier, config.length_experiments)?);
            Ok(())
        };
        for _ in 0..config.warmup {
            run()?;
        }
        let mut err = None;
        let seconds = fastest(config, || {
            if let Err(e) = run() {
                err = Some(e);
            }
        });
        if let Some(e) = err {
            return Err(e);
        }
        points.push(TimingPoint {
            axis: Axis::EventsPerTrace,
            x: (template.workload_len() * scale) as f64,
            seconds,
        });
    }

    let fits = [Axis::TrainingTraces, Axis::Experiments, Axis::EventsPerTrace]
        .into_iter()
        .filter_map(|axis| {
            let xy: Vec<(f64, f64)> = points.iter().filter(|p| p.axis == axis).map(|p| (p.x, p.seconds)).collect();
            (xy.len() >= 2).then(|| {
                let (slope, intercept, r2) = linear_fit(&xy);
                AxisFit {
                    axis,
                    slope,
                    intercept,
                    r2,
                }
            })
        })
        .collect();
    Ok(BenchReport { points, fits })
}
