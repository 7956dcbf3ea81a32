use thiserror::Error;

/// Errors produced by the lab's solvers, builders and drivers.
#[derive(Debug, Error)]
pub enum LabError {
    /// An input parameter violates an operation's precondition.
    #[error("invalid parameter `{name}`: {reason}")]
    Parameter { name: &'static str, reason: String },

    /// The discrete linear system is numerically singular.
    #[error("singular discrete system for n = {mode} (condition estimate {condition:.3e})")]
    Singular { mode: i64, condition: f64 },

    /// The boundary-layer coefficient system is nearly singular.
    #[error("near-singular coefficient system: |denominator| = {denominator:.3e} < {threshold:.3e}")]
    CoefficientSystem { denominator: f64, threshold: f64 },

    /// A solve finished but its residual misses the acceptance gate.
    #[error("solver residual {value:.3e} exceeds gate {gate:.3e}")]
    Residual { value: f64, gate: f64 },

    /// The Airy evaluation would overflow.
    #[error("Airy argument {re}+{im}i is outside the representable range")]
    AiryOutOfRange { re: f64, im: f64 },

    /// A linear sub-solve failed inside an iteration.
    #[error("mode {mode}: {source}")]
    Mode {
        mode: i64,
        #[source]
        source: Box<LabError>,
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("I/O error at {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed checkpoint: {0}")]
    Checkpoint(String),
}

impl LabError {
    pub fn param(name: &'static str, reason: impl Into<String>) -> Self {
        LabError::Parameter {
            name,
            reason: reason.into(),
        }
    }

    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        LabError::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    /// Whether this error is a parameter/config validation failure (as opposed
    /// to a numerical or I/O failure).
    pub fn is_validation(&self) -> bool {
        matches!(self, LabError::Parameter { .. } | LabError::Config(_))
    }
}

pub type Result<T> = std::result::Result<T, LabError>;
