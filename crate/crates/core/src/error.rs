use thiserror::Error;

/// Errors raised by the solver and its diagnostics.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("instance rejected: {0}")]
    Invalid(String),

    #[error("lower-bound condition violated: {0}")]
    LowerBound(String),

    #[error("row {0} has zero sum; the matrix cannot be row-scaled")]
    DegenerateRow(usize),

    #[error("column {0} has zero sum; the matrix cannot be column-scaled")]
    DegenerateColumn(usize),

    #[error("{what} needs at least two rows and two columns, got {rows}x{cols}")]
    TooSmall {
        what: &'static str,
        rows: usize,
        cols: usize,
    },

    #[error("exhaustive subset enumeration limited to n+m <= {limit}, got {actual}; use the hat estimate")]
    SizeLimit { limit: usize, actual: usize },

    #[error("{axis} {index} has {nonzeros} nonzeros out of {len}; more than half are required")]
    MajorityHypothesis {
        axis: &'static str,
        index: usize,
        nonzeros: usize,
        len: usize,
    },

    #[error("oracle limited to n*m <= {limit} entries, got {actual}")]
    OracleSize { limit: usize, actual: usize },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("degenerate: {0}")]
    Degenerate(String),

    #[error("oracle did not converge after {iterations} iterations (stationarity {stationarity:.3e}, feasibility {feasibility:.3e}, complementarity {complementarity:.3e})")]
    OracleNotConverged {
        iterations: usize,
        stationarity: f64,
        feasibility: f64,
        complementarity: f64,
    },

    #[error("constraint system appears inconsistent: feasibility gap stalled at {gap:.3e} after {iterations} iterations")]
    Infeasible { gap: f64, iterations: usize },

    #[error("generator configuration infeasible: {0}")]
    Generator(String),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("parse error at {location}: {message}")]
    Parse { location: String, message: String },
}

pub type Result<T> = std::result::Result<T, Error>;
