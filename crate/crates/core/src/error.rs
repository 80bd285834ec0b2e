use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("file not found: {}", .0.display())]
    MissingFile(PathBuf),

    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed WAV header in {}: {detail}", path.display())]
    MalformedWav { path: PathBuf, detail: String },

    #[error("unsupported WAV encoding in {}: {detail}", path.display())]
    UnsupportedEncoding { path: PathBuf, detail: String },

    #[error("sample out of range: channel {channel}, index {index}, value {value}")]
    SampleOutOfRange {
        channel: usize,
        index: usize,
        value: f64,
    },

    #[error("invalid audio clip: {0}")]
    InvalidClip(String),

    #[error("expected a mono clip, got {0} channels")]
    NotMono(usize),

    #[error("invalid argument `{name}`: {detail}")]
    InvalidArgument { name: &'static str, detail: String },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("band edge {hz} Hz is at or above the Nyquist frequency {nyquist} Hz")]
    AboveNyquist { hz: f64, nyquist: f64 },

    #[error("voicing grid mismatch: clip has {expected} frames, voicing track has {actual}")]
    GridMismatch { expected: usize, actual: usize },

    #[error("sample rate mismatch: {expected} Hz vs {actual} Hz")]
    RateMismatch { expected: u32, actual: u32 },

    #[error("silent signal: {0}")]
    Silent(&'static str),

    #[error("fewer than two usable filter-bank bands")]
    TooFewBands,

    #[error("no voiced frames")]
    NoVoicedFrames,

    #[error("manifest line {line}: field `{field}`: {message}")]
    Manifest {
        line: usize,
        field: String,
        message: String,
    },

    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn invalid(name: &'static str, detail: impl Into<String>) -> Self {
        Error::InvalidArgument {
            name,
            detail: detail.into(),
        }
    }

    /// Wraps the error with a short description of the item being processed.
    pub fn context(self, context: impl Into<String>) -> Self {
        Error::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }

    /// True for errors caused by bad inputs rather than internal failures.
    pub fn is_validation(&self) -> bool {
        match self {
            Error::Io { .. } => false,
            Error::Context { source, .. } => source.is_validation(),
            _ => true,
        }
    }
}
