use thiserror::Error;

#[derive(Debug, Error)]
pub enum MilpError {
    #[error("constraint `{row}` references unknown variable index {index}")]
    UnknownVariable { row: String, index: usize },

    #[error("variable `{name}` has inconsistent bounds [{lower}, {upper}]")]
    InconsistentBounds { name: String, lower: f64, upper: f64 },

    #[error("non-finite coefficient in `{0}`")]
    NonFinite(String),

    #[error("constraint `{row}` lists variable `{var}` twice")]
    DuplicateEntry { row: String, var: String },

    #[error("name collision: `{0}` is used more than once")]
    NameCollision(String),

    #[error("invalid name `{0}` for LP format")]
    InvalidName(String),

    #[error("LP format parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("cutting-plane loop stopped after {rounds} rounds with violation {violation:.3e}")]
    CutNonconvergence { rounds: usize, violation: f64 },

    #[error("initial point rejected: {0}")]
    BadStart(String),
}
