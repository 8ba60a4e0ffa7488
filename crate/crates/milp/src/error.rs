use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MilpError {
    #[error("column {0} has a non-finite bound")]
    UnboundedColumn(String),
    #[error("column {name} has lower bound {lower} above upper bound {upper}")]
    InvertedBounds { name: String, lower: f64, upper: f64 },
    #[error("row {row} references unknown column index {col}")]
    UnknownColumn { row: String, col: usize },
    #[error("duplicate column name {0}")]
    DuplicateName(String),
    #[error("model has {found} binary columns, enumeration is limited to {limit}")]
    TooManyBinaries { found: usize, limit: usize },
    #[error("LP format parse error on line {line}: {message}")]
    Parse { line: usize, message: String },
}

pub type Result<T> = std::result::Result<T, MilpError>;
