use thiserror::Error;

pub type Result<T> = std::result::Result<T, GyroError>;

#[derive(Debug, Error)]
pub enum GyroError {
    /// Operator and state live in different level bases.
    #[error("basis mismatch: expected {expected}, found {found}")]
    BasisMismatch {
        expected: &'static str,
        found: &'static str,
    },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("rotation vector is not identifiable from {families} famil{}; at least 3 are required", if *.families == 1 { "y" } else { "ies" })]
    Identifiability { families: usize },

    #[error("zero readout contrast: n0 and n1 photon counts are equal")]
    ZeroContrast,

    #[error("input schema error at line {line}: {message}")]
    Schema { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl GyroError {
    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> u8 {
        match self {
            GyroError::Config(_) | GyroError::Precondition(_) | GyroError::ZeroContrast => 2,
            GyroError::Schema { .. } | GyroError::Identifiability { .. } => 3,
            GyroError::BasisMismatch { .. } | GyroError::Io(_) => 1,
        }
    }

    pub(crate) fn precondition(msg: impl Into<String>) -> Self {
        GyroError::Precondition(msg.into())
    }
}
