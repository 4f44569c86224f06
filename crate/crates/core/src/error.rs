use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid model spec: {0}")]
    InvalidSpec(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("support cap exceeded: need {needed} entries, cap is {cap}")]
    SupportCapExceeded { needed: usize, cap: usize },

    #[error("budget exceeded: {0}")]
    BudgetExceeded(String),

    #[error("exact mode requires {0}")]
    NotExact(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("no sign change: {0}")]
    NoSignChange(String),

    #[error("degenerate model: {0}")]
    Degenerate(String),

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
