use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Coarse failure category, used to pick a process exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Data,
    Numerical,
}

impl ErrorKind {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorKind::Config => 2,
            ErrorKind::Data => 3,
            ErrorKind::Numerical => 4,
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("EDF parse error at byte offset {offset}: {message}")]
    Parse { offset: usize, message: String },

    #[error("EDF integrity error: {0}")]
    Integrity(String),

    #[error("record has no 'EDF Annotations' signal; movement events are required")]
    MissingAnnotations,

    #[error("unknown annotation label {0:?} (expected T0, T1 or T2)")]
    UnknownAnnotation(String),

    #[error("movement events overlap: event at {first:.3} s runs past onset {second:.3} s")]
    OverlappingEvents { first: f64, second: f64 },

    #[error("invalid subset: {0}")]
    Subset(String),

    #[error("filter design error: {0}")]
    FilterDesign(String),

    #[error("sampling rate mismatch: filter designed for {filter} Hz, signal is {signal} Hz")]
    SampleRateMismatch { filter: f64, signal: f64 },

    #[error("signal too short: {len} samples, at least {needed} required")]
    SignalTooShort { len: usize, needed: usize },

    #[error("channel {0:?} not found")]
    MissingChannel(String),

    #[error("duplicate channel label {0:?}")]
    DuplicateChannel(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("rank-deficient covariance (eigenvalue ratio {ratio:.3e}); prune constant or duplicated channels")]
    RankDeficient { ratio: f64 },

    #[error("ICA did not converge after {iterations} iterations (last weight change {last_change:.3e}, learning rate {learning_rate:.3e})")]
    IcaNotConverged {
        iterations: usize,
        last_change: f64,
        learning_rate: f64,
    },

    #[error("SMO did not converge after {iterations} iterations (max KKT violation {violation:.3e})")]
    SvmNotConverged { iterations: usize, violation: f64 },

    #[error("neural network training diverged at epoch {epoch}; try a smaller learning rate")]
    Diverged { epoch: usize },

    #[error("index {index} out of range for {len} components")]
    ComponentIndex { index: usize, len: usize },

    #[error("side {0} has no epochs")]
    EmptySide(crate::edf::Side),

    #[error("duplicate feature row for {0}")]
    DuplicateRow(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("serialization error: {0}")]
    Serialization(String),

    #[error("stage {stage} failed{}: {source}", record.as_ref().map(|r| format!(" on {r}")).unwrap_or_default())]
    Stage {
        stage: String,
        record: Option<String>,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Stage { source, .. } => source.kind(),
            Error::Config(_) | Error::Subset(_) | Error::FilterDesign(_) => ErrorKind::Config,
            Error::RankDeficient { .. }
            | Error::IcaNotConverged { .. }
            | Error::SvmNotConverged { .. }
            | Error::Diverged { .. } => ErrorKind::Numerical,
            _ => ErrorKind::Data,
        }
    }

    pub fn in_stage(self, stage: &str, record: Option<String>) -> Self {
        Error::Stage {
            stage: stage.to_string(),
            record,
            source: Box::new(self),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
