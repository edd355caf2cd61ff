//! Command-line front end: argument parsing, manifest handling and the
//! commands behind the `tracelens` binary.

pub mod commands;
pub mod manifest;
pub mod state;

use std::fmt;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use tracelens::classifier::Mode;
use tracelens::render::Format;
use tracelens::synthgen::Preset;
use tracelens::ErrorClass;

/// Exit codes, one per error class.
pub mod exit {
    pub const OK: u8 = 0;
    pub const IO: u8 = 1;
    /// Also what clap uses for bad arguments.
    pub const USAGE: u8 = 2;
    pub const PARSE: u8 = 3;
    pub const CONFIG: u8 = 4;
    pub const DATA: u8 = 5;
}

/// A setting that cannot work, caught by the front end.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

/// Picks the exit code from the innermost classified error.
pub fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<tracelens::Error>() {
            return match e.class() {
                ErrorClass::Io => exit::IO,
                ErrorClass::Parse => exit::PARSE,
                ErrorClass::Config => exit::CONFIG,
                ErrorClass::DataInsufficiency => exit::DATA,
            };
        }
        if cause.is::<ConfigError>() {
            return exit::CONFIG;
        }
        if cause.is::<serde_json::Error>() {
            return exit::PARSE;
        }
        if cause.is::<std::io::Error>() {
            return exit::IO;
        }
    }
    exit::IO
}

/// The error chain joined by `: `, skipping causes that the previous message
/// already ends with.
pub fn error_message(err: &anyhow::Error) -> String {
    let mut msg = String::new();
    for cause in err.chain() {
        let text = cause.to_string();
        if msg.ends_with(&text) {
            continue;
        }
        if !msg.is_empty() {
            msg.push_str(": ");
        }
        msg.push_str(&text);
    }
    msg
}

/// Writes to stdout; a closed pipe ends output quietly.
pub fn emit(text: &str) -> std::io::Result<()> {
    use std::io::Write;
    let mut out = std::io::stdout().lock();
    match out.write_all(text.as_bytes()).and_then(|()| out.flush()) {
        Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
        other => other,
    }
}

#[derive(Debug, Parser)]
#[command(name = "tracelens", version, about = "Failure-related anomalies in fault-injection traces")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

/// Flags shared by every command; each overrides the manifest field of the
/// same name.
#[derive(Debug, Clone, Default, Args)]
pub struct GlobalArgs {
    /// Run manifest (JSON). Relative paths inside it resolve against its directory.
    #[arg(long, global = true, value_name = "PATH")]
    pub manifest: Option<PathBuf>,
    /// Injected-only events below this probability are spurious.
    #[arg(long, global = true, value_name = "F")]
    pub eps_spurious: Option<f64>,
    /// Reference-only events above this probability are missing.
    #[arg(long, global = true, value_name = "F")]
    pub eps_missing: Option<f64>,
    /// Model order D; estimated from client requests when absent.
    #[arg(long, global = true, value_name = "D")]
    pub order: Option<usize>,
    #[arg(long, global = true, value_enum)]
    pub mode: Option<ModeArg>,
    #[arg(long, global = true, value_name = "N")]
    pub seed: Option<u64>,
    /// Worker threads; defaults to one per core.
    #[arg(long, global = true, value_name = "N")]
    pub jobs: Option<usize>,
    /// Report format; `analyze` writes text and JSON when absent.
    #[arg(long, global = true, value_enum)]
    pub format: Option<FormatArg>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Lcs,
    Vmm,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Lcs => Mode::LcsOnly,
            ModeArg::Vmm => Mode::LcsWithVmm,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FormatArg {
    Text,
    Json,
    Svg,
}

impl From<FormatArg> for Format {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Text => Format::Text,
            FormatArg::Json => Format::Json,
            FormatArg::Svg => Format::Svg,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Filter and symbolize fault-free traces, fix the order and persist the model.
    Train,
    /// Classify fault-injected traces against the trained state.
    Analyze {
        /// Span files; defaults to the manifest's experiments.
        files: Vec<PathBuf>,
    },
    /// Generate a synthetic corpus with ground truth and a manifest for it.
    Gen {
        #[arg(long)]
        preset: Option<Preset>,
        #[arg(long, value_name = "N")]
        fault_free: Option<usize>,
        #[arg(long, value_name = "N")]
        idle: Option<usize>,
        #[arg(long, value_name = "N")]
        experiments: Option<usize>,
        #[arg(long, value_name = "P")]
        noise: Option<f64>,
        /// Replace an existing corpus in the output directory.
        #[arg(long)]
        force: bool,
    },
    /// False-positive rate on held-out fault-free traces, per training-set size.
    EvalFp {
        #[arg(long, value_name = "N")]
        repetitions: Option<usize>,
        /// Test traces per repetition.
        #[arg(long, value_name = "N")]
        m: Option<usize>,
        /// Training-set sizes, comma separated.
        #[arg(long, value_name = "N,..", value_delimiter = ',')]
        n_values: Option<Vec<usize>>,
    },
    /// False-negative rate on experiments with ground truth.
    EvalFn,
    /// Time training and classification along the scaling axes.
    Bench,
    /// Re-render a JSON report.
    Render {
        report: PathBuf,
        /// Span file the report was computed from; names symbols unknown to the training set.
        #[arg(long, value_name = "PATH")]
        trace: Option<PathBuf>,
    },
}
