use thiserror::Error;

/// Errors raised by the library. Every variant carries enough context to
/// point at the offending group, cell, row, or parameter.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("invalid probability table: {0}")]
    InvalidTable(String),

    #[error("rate undefined for group {group}: no rows with y={label}")]
    UndefinedRate { group: i64, label: u8 },

    #[error("conditioning on zero-probability cell (a={a}, y={y}, yhat={yhat})")]
    Conditioning { a: usize, y: usize, yhat: usize },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("wrong noise law: {0}")]
    WrongLaw(String),

    #[error("domain too large: {cells} classifier cells exceed the enumeration cap of {cap} (|A|*|X| <= {cap})")]
    TooLarge { cells: usize, cap: usize },

    #[error("ingestion error at row {row}: {msg}")]
    Ingestion { row: usize, msg: String },

    #[error("linear program is {0}")]
    Lp(&'static str),

    #[error("training diverged at epoch {epoch} (last finite epoch: {last_finite:?})")]
    Diverged { epoch: usize, last_finite: Option<usize> },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
