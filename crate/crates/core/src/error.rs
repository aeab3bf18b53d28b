use thiserror::Error;

/// Errors produced anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid sample at index {index}: {value} is not finite")]
    InvalidSample { index: usize, value: f64 },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("pattern code {code} out of range for dimension {m}")]
    CodeOutOfRange { code: u64, m: usize },

    #[error("invalid permutation: {0:?}")]
    InvalidPermutation(Vec<usize>),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("channel {channel} out of bounds: {reason}")]
    OutOfBounds { channel: usize, reason: String },

    #[error("degenerate frame: {0}")]
    DegenerateFrame(String),

    #[error("numeric tolerance failure: {0}")]
    Tolerance(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("joint table too large: {0}")]
    TableTooLarge(String),

    #[error("input format error: {0}")]
    Format(String),

    #[error("frame at timestep {t}: {source}")]
    Frame {
        t: i64,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Strips `Frame` context and returns the underlying error.
    pub fn root(&self) -> &Error {
        match self {
            Error::Frame { source, .. } => source.root(),
            other => other,
        }
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Format(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
