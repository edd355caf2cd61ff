use std::collections::{BTreeMap, BTreeSet};
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use tracelens::classifier::{
    ClassificationReport, Classifier, ClassifierConfig, ContextPolicy, Mode, ReferenceModels,
};
use tracelens::evaluation::{
    benchmark_scaling, eval_false_negatives, eval_false_positives, write_fp_csv, Experiment, FnRunConfig,
    FpRunConfig, RawCorpus, TruthSymbols,
};
use tracelens::render::{render, Format};
use tracelens::synthgen::FaultSpec;
use tracelens::trace::{read_spans, write_spans, CallPair, Event, EventSequence, SymbolId, SymbolTable, TraceLabel};

use crate::manifest::RunManifest;
use crate::state::{self, Loaded, STATE_FILE};
use crate::{Command, ConfigError, GlobalArgs};

/// Ground truth written next to each generated experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthFile {
    pub fault: FaultSpec,
    pub manifests: bool,
    pub spurious: Vec<CallPair>,
    pub missing: Vec<CallPair>,
}

/// `exp.jsonl` -> `exp.truth.json`.
pub fn truth_path(trace: &Path) -> PathBuf {
    trace.with_extension("truth.json")
}

/// The manifest with every flag applied.
pub fn effective_manifest(global: &GlobalArgs) -> Result<RunManifest> {
    let mut m = match &global.manifest {
        Some(p) => RunManifest::load(p)?,
        None => RunManifest::default(),
    };
    if let Some(v) = global.eps_spurious {
        m.thresholds.eps_spurious = v;
    }
    if let Some(v) = global.eps_missing {
        m.thresholds.eps_missing = v;
    }
    if global.order.is_some() {
        m.order = global.order;
    }
    if let Some(mode) = global.mode {
        m.mode = mode.into();
    }
    if let Some(seed) = global.seed {
        m.seed = seed;
    }
    if let Some(out) = &global.out {
        m.output = std::env::current_dir()?.join(out);
    }
    m.thresholds.validate()?;
    Ok(m)
}

pub fn run(command: &Command, global: &GlobalArgs) -> Result<()> {
    let manifest = effective_manifest(global)?;
    let format = global.format.map(Format::from);
    match command {
        Command::Train => train(&manifest),
        Command::Analyze { files } => analyze(&manifest, files, format),
        Command::Gen {
            preset,
            fault_free,
            idle,
            experiments,
            noise,
            force,
        } => {
            let mut m = manifest;
            let g = &mut m.generator;
            if let Some(p) = preset {
                g.preset = *p;
                g.template = None;
            }
            g.fault_free = fault_free.unwrap_or(g.fault_free);
            g.idle = idle.unwrap_or(g.idle);
            g.experiments = experiments.unwrap_or(g.experiments);
            g.noise = noise.unwrap_or(g.noise);
            gen(&m, *force)
        }
        Command::EvalFp {
            repetitions,
            m: test_traces,
            n_values,
        } => {
            let mut m = manifest;
            let e = &mut m.evaluation;
            e.repetitions = repetitions.unwrap_or(e.repetitions);
            e.m = test_traces.unwrap_or(e.m);
            if let Some(n) = n_values {
                e.n_values = n.clone();
            }
            eval_fp(&m, global.mode.map(Mode::from))
        }
        Command::EvalFn => eval_fn(&manifest, global.mode.map(Mode::from)),
        Command::Bench => bench(&manifest),
        Command::Render { report, trace } => render_cmd(&manifest, report, trace.as_deref(), format),
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).with_context(|| format!("cannot write {}", path.display()))
}

fn create_file(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("cannot create {}", path.display()))?,
    ))
}

fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

fn modes_for(only: Option<Mode>) -> Vec<Mode> {
    match only {
        Some(m) => vec![m],
        None => vec![Mode::LcsOnly, Mode::LcsWithVmm],
    }
}

pub fn train(m: &RunManifest) -> Result<()> {
    let trained = state::train(m)?;
    let model = trained.full_model()?;
    let out = m.output_dir();
    let (state_path, model_path) = state::save(&trained.state, &model, &out)?;
    let order = match trained.state.estimated_order {
        Some(_) => format!("order {} (estimated)", trained.state.order),
        None => format!("order {} (given)", trained.state.order),
    };
    crate::emit(&format!(
        "{order}, {} training traces, {} symbols, {} background, {} contexts\nwrote {} and {}\n",
        trained.training.len(),
        trained.alphabet_size(),
        trained.dictionary.len(),
        model.context_count(),
        state_path.display(),
        model_path.display()
    ))?;
    Ok(())
}

/// The saved state in the output directory, or a fresh one trained in memory.
fn load_or_train(m: &RunManifest) -> Result<Loaded> {
    let dir = m.output_dir();
    if dir.join(STATE_FILE).exists() {
        let loaded = state::load(&dir)?;
        if m.order.is_some_and(|d| d != loaded.state.order) {
            return Err(ConfigError(format!(
                "the saved state in {} uses order {}; rerun train to change it",
                dir.display(),
                loaded.state.order
            ))
            .into());
        }
        Ok(loaded)
    } else {
        log::info!("no trained state in {}; training in memory", dir.display());
        Ok(state::train(m)?.into())
    }
}

fn experiment_id(path: &Path) -> String {
    path.file_stem().map_or_else(|| path.display().to_string(), |s| s.to_string_lossy().into_owned())
}

/// Reads an experiment against its own copy of the table, so that its
/// symbols and alphabet do not depend on which other experiments are analyzed.
fn load_experiment(loaded: &Loaded, path: &Path) -> Result<(SymbolTable, EventSequence)> {
    let mut table = loaded.table.clone();
    let events = read_spans(path)?;
    let seq = loaded
        .dictionary
        .filter(&EventSequence::from_events(events, TraceLabel::FaultInjected, &mut table));
    if seq.is_empty() {
        return Err(tracelens::Error::EmptyTrace {
            origin: format!("{} (after background filtering)", path.display()),
        }
        .into());
    }
    Ok((table, seq))
}

pub fn analyze(m: &RunManifest, files: &[PathBuf], format: Option<Format>) -> Result<()> {
    let loaded = load_or_train(m)?;
    let files = if files.is_empty() { m.experiment_files()? } else { files.to_vec() };
    if files.is_empty() {
        return Err(ConfigError("no experiment traces given (pass files or list them in the manifest)".into()).into());
    }
    let classifier = Classifier::new(ClassifierConfig {
        thresholds: m.thresholds,
        mode: m.mode,
        order: loaded.state.order,
        escape: loaded.state.escape,
        context: ContextPolicy::AllPreceding,
    })?;
    let experiments: Vec<(SymbolTable, EventSequence)> =
        files.par_iter().map(|f| load_experiment(&loaded, f)).collect::<Result<_>>()?;

    // Experiments without new symbols share an alphabet and thus models.
    let training: Vec<&[SymbolId]> = loaded.state.training.iter().map(|t| t.symbols.as_slice()).collect();
    let sizes: BTreeSet<usize> = experiments.iter().map(|(t, _)| t.len()).collect();
    let models: BTreeMap<usize, ReferenceModels<'_>> = sizes
        .into_iter()
        .map(|n| Ok((n, ReferenceModels::new(&training, loaded.state.order, n, loaded.state.escape)?)))
        .collect::<Result<_>>()?;

    let dir = m.output_dir().join("reports");
    create_dir(&dir)?;
    let formats = match format {
        Some(f) => vec![f],
        None => vec![Format::Text, Format::Json],
    };
    let lines: Vec<String> = files
        .par_iter()
        .zip(&experiments)
        .map(|(path, (table, seq))| {
            let id = experiment_id(path);
            let report = classifier.classify_with(&id, seq.symbols(), &models[&table.len()])?;
            let mut written = Vec::new();
            for &f in &formats {
                let out = dir.join(format!("{id}.{}", f.extension()));
                write_file(&out, &render(&report, table, f)?)?;
                written.push(out.display().to_string());
            }
            let s = &report.summary;
            Ok(format!(
                "{id}: reference {}, common {}, spurious {}, missing {} -> {}",
                loaded.state.training[report.reference_index].path.display(),
                s.common,
                s.spurious,
                s.missing,
                written.join(", ")
            ))
        })
        .collect::<Result<_>>()?;
    crate::emit(&lines.iter().map(|l| format!("{l}\n")).collect::<String>())?;
    Ok(())
}

fn clear_corpus_dir(dir: &Path, force: bool) -> Result<()> {
    if dir.exists() {
        let occupied = fs::read_dir(dir)
            .with_context(|| format!("cannot list {}", dir.display()))?
            .next()
            .is_some();
        if occupied && !force {
            return Err(ConfigError(format!("{} is not empty (pass --force to replace it)", dir.display())).into());
        }
        if occupied {
            fs::remove_dir_all(dir).with_context(|| format!("cannot remove {}", dir.display()))?;
        }
    }
    create_dir(dir)
}

fn write_trace(path: &Path, events: &[Event]) -> Result<()> {
    let mut w = create_file(path)?;
    write_spans(events, &mut w).with_context(|| format!("cannot write {}", path.display()))?;
    w.flush().with_context(|| format!("cannot write {}", path.display()))
}

/// Writes `fault-free/`, `idle/`, `experiments/` (with truth files),
/// `template.json` and a `manifest.json` that points at them.
pub fn gen(m: &RunManifest, force: bool) -> Result<()> {
    let template = m.template()?;
    let raw = RawCorpus::generate(&template, &m.generator.corpus_spec(m.seed))?;
    let root = m.output_dir();
    let dirs = ["fault-free", "idle", "experiments"].map(|d| root.join(d));
    for d in &dirs {
        clear_corpus_dir(d, force)?;
    }
    for (i, g) in raw.fault_free.iter().enumerate() {
        write_trace(&dirs[0].join(format!("ff-{i:04}.jsonl")), &g.events)?;
    }
    for (i, g) in raw.idle.iter().enumerate() {
        write_trace(&dirs[1].join(format!("idle-{i:04}.jsonl")), &g.events)?;
    }
    for (i, e) in raw.experiments.iter().enumerate() {
        let path = dirs[2].join(format!("exp-{i:04}.jsonl"));
        write_trace(&path, &e.trace.events)?;
        let truth = TruthFile {
            fault: e.fault.clone(),
            manifests: e.trace.truth.manifests,
            spurious: e.trace.spurious_pairs(),
            missing: e.trace.missing_pairs(),
        };
        write_file(&truth_path(&path), &to_json(&truth)?)?;
    }
    write_file(&root.join("template.json"), &(template.to_json()? + "\n"))?;

    let mut generated = m.clone();
    generated.training = vec!["fault-free".into()];
    generated.idle = vec!["idle".into()];
    generated.experiments = vec!["experiments".into()];
    generated.output = "out".into();
    generated.generator.template = m.generator.template.as_ref().map(|_| "template.json".into());
    let manifest_path = root.join("manifest.json");
    generated.save(&manifest_path)?;
    crate::emit(&format!(
        "{}: {} fault-free, {} idle, {} experiments -> {}\n",
        template.name,
        raw.fault_free.len(),
        raw.idle.len(),
        raw.experiments.len(),
        manifest_path.display()
    ))?;
    Ok(())
}

fn fp_config(m: &RunManifest, modes: Vec<Mode>) -> FpRunConfig {
    FpRunConfig {
        n_values: m.evaluation.n_values.clone(),
        m: m.evaluation.m,
        repetitions: m.evaluation.repetitions,
        thresholds: m.thresholds,
        modes,
        order: m.order,
        escape: m.escape,
        seed: m.seed,
    }
}

pub fn eval_fp(m: &RunManifest, only: Option<Mode>) -> Result<()> {
    let trained = state::train(m)?;
    let summary = eval_false_positives(&fp_config(m, modes_for(only)), &trained.training, trained.alphabet_size())?;
    let out = m.output_dir();
    create_dir(&out)?;
    let mut csv = Vec::new();
    write_fp_csv(&summary.points, &mut csv)?;
    write_file(&out.join("fp.csv"), &String::from_utf8_lossy(&csv))?;
    let uncertain: Vec<String> = summary.uncertain.iter().map(|&s| trained.table.name(s)).collect();
    write_file(
        &out.join("fp.json"),
        &to_json(&serde_json::json!({ "points": summary.points, "uncertain": uncertain }))?,
    )?;
    crate::emit(&String::from_utf8_lossy(&csv))?;
    Ok(())
}

pub fn eval_fn(m: &RunManifest, only: Option<Mode>) -> Result<()> {
    let mut trained = state::train(m)?;
    let files = m.experiment_files()?;
    if files.is_empty() {
        return Err(tracelens::Error::NoExperiments.into());
    }
    let mut experiments = Vec::with_capacity(files.len());
    for path in &files {
        let truth_file = truth_path(path);
        if !truth_file.exists() {
            return Err(ConfigError(format!(
                "{} has no ground truth (expected {})",
                path.display(),
                truth_file.display()
            ))
            .into());
        }
        let text = fs::read_to_string(&truth_file).with_context(|| format!("cannot read {}", truth_file.display()))?;
        let truth: TruthFile =
            serde_json::from_str(&text).with_context(|| format!("invalid truth file {}", truth_file.display()))?;
        let events = read_spans(path)?;
        let seq = EventSequence::from_events(events, TraceLabel::FaultInjected, &mut trained.table);
        let table = &mut trained.table;
        experiments.push(Experiment {
            id: experiment_id(path),
            kind: truth.fault.kind,
            trace: trained.dictionary.filter(&seq),
            truth: TruthSymbols {
                manifests: truth.manifests,
                spurious: truth.spurious.iter().map(|p| table.register(p)).collect(),
                missing: truth.missing.iter().map(|p| table.register(p)).collect(),
            },
        });
    }
    let alphabet = trained.alphabet_size();

    let e = &m.evaluation;
    let needed = e.n_values.iter().copied().max().unwrap_or(0) + e.m;
    let uncertain = if !e.uncertain_from_fp {
        BTreeSet::new()
    } else if trained.training.len() >= needed {
        eval_false_positives(&fp_config(m, modes_for(None)), &trained.training, alphabet)?.uncertain
    } else {
        log::warn!(
            "{} training traces are too few for the false-positive run ({needed} needed); no symbols are treated as uncertain",
            trained.training.len()
        );
        BTreeSet::new()
    };

    let config = FnRunConfig {
        thresholds: m.thresholds,
        modes: modes_for(only),
        order: m.order,
        escape: m.escape,
    };
    let summary = eval_false_negatives(&config, &trained.training, &experiments, &uncertain, alphabet)?;

    let out = m.output_dir();
    create_dir(&out)?;
    let mut rows = String::from("mode,failed,undetected,fn_pct\n");
    for r in &summary.results {
        rows.push_str(&format!("{},{},{},{}\n", r.mode.as_str(), r.failed, r.undetected, r.fn_pct));
    }
    write_file(&out.join("fn.csv"), &rows)?;
    #[derive(Serialize)]
    struct Row<'a> {
        id: &'a str,
        kind: &'a str,
        mode: &'a str,
        manifests: bool,
        detected: bool,
        truth_spurious: usize,
        truth_missing: usize,
        matched_spurious: usize,
        matched_missing: usize,
    }
    let path = out.join("fn_experiments.csv");
    let mut w = csv::Writer::from_writer(create_file(&path)?);
    for o in &summary.outcomes {
        w.serialize(Row {
            id: &o.id,
            kind: o.kind.as_str(),
            mode: o.mode.as_str(),
            manifests: o.manifests,
            detected: o.detected,
            truth_spurious: o.truth_spurious,
            truth_missing: o.truth_missing,
            matched_spurious: o.matched_spurious,
            matched_missing: o.matched_missing,
        })?;
    }
    w.flush().with_context(|| format!("cannot write {}", path.display()))?;
    let results: Vec<_> = summary.results.iter().collect();
    write_file(
        &out.join("fn.json"),
        &to_json(&serde_json::json!({
            "order": summary.order,
            "uncertain": uncertain.iter().map(|&s| trained.table.name(s)).collect::<Vec<_>>(),
            "results": results,
        }))?,
    )?;
    crate::emit(&rows)?;
    Ok(())
}

pub fn bench(m: &RunManifest) -> Result<()> {
    let template = m.template()?;
    let mut config = m.bench.clone();
    config.seed = m.seed;
    config.noise = m.generator.noise;
    let report = benchmark_scaling(&template, &config)?;
    let out = m.output_dir();
    create_dir(&out)?;
    let mut csv = Vec::new();
    report.write_csv(&mut csv)?;
    write_file(&out.join("bench.csv"), &String::from_utf8_lossy(&csv))?;
    write_file(&out.join("bench.json"), &to_json(&report)?)?;
    crate::emit(&String::from_utf8_lossy(&csv))?;
    for f in &report.fits {
        eprintln!("{}: slope {:.3e} s/unit, R2 {:.4}", f.axis.as_str(), f.slope, f.r2);
    }
    Ok(())
}

pub fn render_cmd(m: &RunManifest, report_path: &Path, trace: Option<&Path>, format: Option<Format>) -> Result<()> {
    let text = fs::read_to_string(report_path).with_context(|| format!("cannot read {}", report_path.display()))?;
    let report: ClassificationReport =
        serde_json::from_str(&text).with_context(|| format!("invalid report {}", report_path.display()))?;
    let dir = m.output_dir();
    let table = if dir.join(STATE_FILE).exists() {
        let loaded = state::load(&dir)?;
        match trace {
            Some(t) => load_experiment(&loaded, t)?.0,
            None => loaded.table,
        }
    } else {
        log::warn!("no trained state in {}; symbols are shown as ids", dir.display());
        SymbolTable::new()
    };
    crate::emit(&render(&report, &table, format.unwrap_or(Format::Text))?)?;
    Ok(())
}
