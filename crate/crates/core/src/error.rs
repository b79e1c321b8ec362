use std::fmt;

/// Errors raised anywhere in the engine.
///
/// Each variant carries a short class prefix (see [`Error::class`]) that the
/// command-line front end prints so failures are easy to grep for.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid shape: {0}")]
    Shape(String),
    #[error("invalid range: {0}")]
    Range(String),
    #[error("non-finite value: {0}")]
    Numeric(String),
    #[error("geometry mismatch: {0}")]
    Geometry(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("bad data: {0}")]
    Data(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("undefined metric: {0}")]
    UndefinedMetric(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Shape(_) => ErrorClass::Shape,
            Error::Range(_) => ErrorClass::Range,
            Error::Numeric(_) => ErrorClass::Numeric,
            Error::Geometry(_) => ErrorClass::Geometry,
            Error::Config(_) => ErrorClass::Config,
            Error::Data(_) => ErrorClass::Data,
            Error::Checkpoint(_) => ErrorClass::Checkpoint,
            Error::UndefinedMetric(_) => ErrorClass::Metric,
            Error::Io { .. } => ErrorClass::Io,
        }
    }

    pub(crate) fn io(path: impl fmt::Display, source: std::io::Error) -> Self {
        Error::Io {
            path: path.to_string(),
            source,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Shape,
    Range,
    Numeric,
    Geometry,
    Config,
    Data,
    Checkpoint,
    Metric,
    Io,
}

impl fmt::Display for ErrorClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ErrorClass::Shape => "SHAPE",
            ErrorClass::Range => "RANGE",
            ErrorClass::Numeric => "NUMERIC",
            ErrorClass::Geometry => "GEOMETRY",
            ErrorClass::Config => "CONFIG",
            ErrorClass::Data => "DATA",
            ErrorClass::Checkpoint => "CHECKPOINT",
            ErrorClass::Metric => "METRIC",
            ErrorClass::Io => "IO",
        };
        f.write_str(s)
    }
}

pub type Result<T> = std::result::Result<T, Error>;
