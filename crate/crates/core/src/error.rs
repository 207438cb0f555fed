use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// The requested dense computation exceeds the supported register size.
    #[error("capability limit: {0}")]
    Capability(String),

    #[error("degenerate spectrum bounds: lambda_plus == lambda_minus == {0}")]
    DegenerateSpectrum(f64),

    #[error("width mismatch: expected {expected} qubits, got {got}")]
    WidthMismatch { expected: usize, got: usize },

    #[error("circuit contains composite gate `{0}`; decompose it first")]
    DecompositionRequired(String),

    #[error("non-physical state: {0}")]
    NonPhysical(String),

    #[error("post-selection impossible: success probability {0:e}")]
    PostSelectionImpossible(f64),

    #[error("over-mitigation: corrected denominator {denominator:e} is not positive (p = {p})")]
    OverMitigation { denominator: f64, p: f64 },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("missing entry: {0}")]
    MissingEntry(String),

    #[error("parse error on line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    /// True for failures that stem from the numbers rather than the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Numerical(_)
                | Error::OverMitigation { .. }
                | Error::PostSelectionImpossible(_)
                | Error::NonPhysical(_)
        )
    }
}
