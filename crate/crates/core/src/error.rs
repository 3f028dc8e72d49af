use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// An argument outside the operation's domain.
    #[error("domain error: {0}")]
    Domain(String),

    /// A valid-looking input at which the function diverges.
    #[error("singular input: {0}")]
    Singular(String),

    #[error("degenerate batch: all weights zero")]
    DegenerateBatch,

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("ambiguous curve: {turns} direction changes survive the tolerance")]
    AmbiguousCurve { turns: usize },

    #[error("bin grid mismatch: {0}")]
    GridMismatch(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite value in forward pass")]
    NonFinite,

    /// A training batch whose weights all vanished; names the epoch so the
    /// threshold can be adjusted.
    #[error("degenerate batch at epoch {epoch}: all weights zero ({detail})")]
    DegenerateTraining { epoch: usize, detail: String },
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}
