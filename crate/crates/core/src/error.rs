use thiserror::Error;

/// Errors produced anywhere in the library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("quadrature rule size out of range: {0}")]
    RuleSize(String),

    #[error("syntax error at position {position}: {message}")]
    Syntax { position: usize, message: String },

    #[error("unknown identifier `{name}` at position {position}")]
    UnknownIdentifier { name: String, position: usize },

    #[error("unbound variable `{0}`")]
    UnboundVariable(&'static str),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("expression grew beyond {limit} nodes")]
    ExpressionTooLarge { limit: usize },

    #[error("expression uses variable `{var}` which is not allowed in {context}")]
    DisallowedVariable { var: &'static str, context: String },

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("grid functions live on different quadrature rules")]
    RuleMismatch,

    #[error("characteristic value: system is singular (condition estimate {condition:e})")]
    CharacteristicValue { condition: f64 },

    #[error("kernel is not symmetric (max asymmetry {0:e})")]
    AsymmetricKernel(f64),

    #[error("index out of range: {0}")]
    IndexOutOfRange(String),

    #[error("degenerate denominator: {0}")]
    Degenerate(String),

    #[error("Newton iteration diverged: {0}")]
    NewtonDivergence(String),

    #[error("x-derivative matrices were not computed for this kernel")]
    MissingDerivative,

    #[error("value out of range: {0}")]
    OutOfRange(String),

    #[error("configuration error: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// True for failures of the numerics (as opposed to bad input).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::CharacteristicValue { .. }
                | Error::NewtonDivergence(_)
                | Error::Domain(_)
                | Error::Degenerate(_)
                | Error::ExpressionTooLarge { .. }
        )
    }
}
