use std::path::PathBuf;

use thiserror::Error;

use crate::trace::SymbolId;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Coarse error classes, used by front ends to pick exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Io,
    Parse,
    Config,
    DataInsufficiency,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{origin}:{line}: {message}")]
    Parse {
        origin: String,
        line: usize,
        message: String,
    },

    #[error("{origin}: trace contains no events")]
    EmptyTrace { origin: String },

    #[error("similarity is undefined for an empty sequence")]
    EmptySequence,

    #[error("no training traces were supplied")]
    EmptyTrainingSet,

    #[error("at least {needed} fault-free traces are required, got {have}")]
    InsufficientTraining { needed: usize, have: usize },

    #[error("cannot estimate the model order: no client-layer events in the training traces (pass an explicit order)")]
    NoClientEvents,

    #[error("symbol {symbol} is outside an alphabet of {alphabet_size} symbols")]
    SymbolOutOfRange { symbol: SymbolId, alphabet_size: usize },

    #[error("alphabet must contain at least one symbol")]
    EmptyAlphabet,

    #[error("log-loss is undefined for an empty test sequence")]
    EmptyTestSequence,

    #[error("{name} must lie in [0, 1], got {value}")]
    InvalidThreshold { name: &'static str, value: f64 },

    #[error("invalid workload template: {0}")]
    InvalidTemplate(String),

    #[error("injection point (block {block}, event {event}) is outside the template")]
    InjectionPoint { block: usize, event: usize },

    #[error("invalid fault specification: {0}")]
    InvalidFault(String),

    #[error("corpus holds {have} traces but {needed} are required")]
    InsufficientCorpus { needed: usize, have: usize },

    #[error("no failed experiments to evaluate")]
    NoExperiments,

    #[error("unsupported model format version {0}")]
    UnsupportedModelVersion(u32),

    #[error("corrupt model: {0}")]
    CorruptModel(String),

    #[error("unknown preset `{0}` (expected depl, net or sto)")]
    UnknownPreset(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Io { .. } => ErrorClass::Io,
            Error::Parse { .. } | Error::Json(_) | Error::Csv(_) => ErrorClass::Parse,
            Error::UnsupportedModelVersion(_) | Error::CorruptModel(_) => ErrorClass::Parse,
            Error::EmptyTrace { .. }
            | Error::EmptySequence
            | Error::EmptyTrainingSet
            | Error::InsufficientTraining { .. }
            | Error::EmptyTestSequence
            | Error::InsufficientCorpus { .. }
            | Error::NoExperiments => ErrorClass::DataInsufficiency,
            Error::NoClientEvents
            | Error::SymbolOutOfRange { .. }
            | Error::EmptyAlphabet
            | Error::InvalidThreshold { .. }
            | Error::InvalidTemplate(_)
            | Error::InjectionPoint { .. }
            | Error::InvalidFault(_)
            | Error::UnknownPreset(_) => ErrorClass::Config,
        }
    }
}
