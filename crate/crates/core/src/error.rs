use std::fmt;

/// Errors produced by the library.
///
/// Numeric contract violations (NaN/Inf) are surfaced as `NonFinite` rather
/// than silently propagated through downstream arithmetic.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// A tensor or parameter shape does not match what an operation expects.
    ShapeMismatch { context: String, detail: String },
    /// A value that must be finite is NaN or infinite.
    NonFinite { context: String },
    /// An argument violates a documented precondition.
    InvalidArgument(String),
    /// A binary file starts with the wrong magic number.
    BadMagic { context: String, expected: String, actual: String },
    /// A versioned file format has an unsupported version.
    VersionMismatch { context: String, expected: u32, actual: u32 },
    /// A file ended before the declared payload was complete.
    Truncated { context: String },
    /// Two counts that must agree do not (e.g. images vs. labels).
    CountMismatch { context: String, left: usize, right: usize },
    /// Malformed content in a structured file.
    Format(String),
    /// Underlying I/O failure.
    Io(String),
    /// Optimization produced a non-finite loss.
    Diverged(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::ShapeMismatch { context, detail } => {
                write!(f, "shape mismatch in {context}: {detail}")
            }
            Error::NonFinite { context } => {
                write!(f, "non-finite value in {context}")
            }
            Error::InvalidArgument(msg) => write!(f, "invalid argument: {msg}"),
            Error::BadMagic {
                context,
                expected,
                actual,
            } => write!(f, "bad magic in {context}: expected {expected}, got {actual}"),
            Error::VersionMismatch {
                context,
                expected,
                actual,
            } => write!(
                f,
                "unsupported {context} version: expected {expected}, got {actual}"
            ),
            Error::Truncated { context } => write!(f, "truncated {context}"),
            Error::CountMismatch {
                context,
                left,
                right,
            } => write!(f, "count mismatch in {context}: {left} vs {right}"),
            Error::Format(msg) => write!(f, "format error: {msg}"),
            Error::Io(msg) => write!(f, "io error: {msg}"),
            Error::Diverged(msg) => write!(f, "training diverged: {msg}"),
        }
    }
}

impl std::error::Error for Error {}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
