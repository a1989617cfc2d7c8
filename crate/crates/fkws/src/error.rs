//! Crate-wide error type.
//!
//! One enum covers the whole pipeline so CLI exit codes can be derived
//! uniformly: 2 = configuration, 3 = data, 4 = numeric divergence.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    /// Malformed container (WAV header, cache file, checkpoint).
    #[error("format: {0}")]
    Format(String),

    /// Structurally valid but unsupported (e.g. stereo WAV, wrong rate).
    #[error("unsupported format: {0}")]
    Unsupported(String),

    /// Line-oriented parse failure (manifests).
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("validation: {0}")]
    Validation(String),

    #[error("shape: {0}")]
    Shape(String),

    #[error("index: {0}")]
    Index(String),

    /// A covariance or alignment term was asked for with < 2 rows.
    #[error("degenerate batch: {0}")]
    DegenerateBatch(String),

    #[error("config: {0}")]
    Config(String),

    /// Non-finite gradients or loss; aborts a training run.
    #[error("divergence: {0}")]
    Divergence(String),

    /// Input shorter than the operation's minimum length.
    #[error("too short: {0}")]
    TooShort(String),

    /// A brute-force oracle was invoked outside its combinatorial guard.
    #[error("oracle range: {0}")]
    OracleRange(String),
}

impl Error {
    /// Process exit code for the CLI: 0 is success, 2 config, 3 data, 4 divergence.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::Divergence(_) => 4,
            _ => 3,
        }
    }

    /// The message without its kind prefix, for output that prints the
    /// kind separately.
    pub fn message(&self) -> String {
        match self {
            Error::Io(e) => e.to_string(),
            Error::Format(m)
            | Error::Unsupported(m)
            | Error::Validation(m)
            | Error::Shape(m)
            | Error::Index(m)
            | Error::DegenerateBatch(m)
            | Error::Config(m)
            | Error::Divergence(m)
            | Error::TooShort(m)
            | Error::OracleRange(m) => m.clone(),
            Error::Parse { line, msg } => format!("line {line}: {msg}"),
        }
    }

    /// Short machine-readable kind tag used in the CLI's one-line error output.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Io(_) => "io",
            Error::Format(_) => "format",
            Error::Unsupported(_) => "unsupported",
            Error::Parse { .. } => "parse",
            Error::Validation(_) => "validation",
            Error::Shape(_) => "shape",
            Error::Index(_) => "index",
            Error::DegenerateBatch(_) => "degenerate-batch",
            Error::Config(_) => "config",
            Error::Divergence(_) => "divergence",
            Error::TooShort(_) => "too-short",
            Error::OracleRange(_) => "oracle-range",
        }
    }
}
