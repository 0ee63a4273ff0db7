use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("cannot read WAV file {path}: {source}")]
    Wav {
        path: PathBuf,
        #[source]
        source: hound::Error,
    },

    #[error("unsupported audio encoding: {0}")]
    UnsupportedEncoding(String),

    #[error("audio file {0} contains no samples")]
    EmptyAudio(PathBuf),

    #[error("silent signal")]
    SilentSignal,

    #[error("no active region")]
    NoActiveRegion,

    #[error("sample rate mismatch: reference {reference} Hz, test {test} Hz")]
    SampleRateMismatch { reference: u32, test: u32 },

    #[error("signal of {len} samples is shorter than one frame of {frame_size}")]
    SignalTooShort { len: usize, frame_size: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("degenerate frame count: {0}")]
    DegenerateFrames(String),

    #[error("silent reference spectrum")]
    SilentReferenceSpectrum,

    #[error("no percussive energy in test signal")]
    NoPercussiveEnergy,

    #[error("feature {feature} failed: {source}")]
    Feature {
        feature: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("feature {0} is constant over the table; cannot build a scaler")]
    DegenerateScaler(String),

    #[error("schema mismatch: expected {expected}, found {found}")]
    SchemaMismatch { expected: String, found: String },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("empty split: {0}")]
    EmptySplit(&'static str),

    #[error("missing label {label} in row {row}")]
    MissingLabel { label: String, row: usize },

    #[error("non-finite value: {0}")]
    NonFinite(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Wraps an error with the name of the feature that produced it.
    pub fn in_feature(self, feature: &'static str) -> Self {
        Error::Feature {
            feature,
            source: Box::new(self),
        }
    }

    /// True for failures caused by arithmetic rather than by the input data.
    pub fn is_numeric(&self) -> bool {
        match self {
            Error::NonFinite(_) => true,
            Error::Feature { source, .. } => source.is_numeric(),
            _ => false,
        }
    }
}
