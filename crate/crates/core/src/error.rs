use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("degenerate measure: {0}")]
    DegenerateMeasure(String),

    #[error("marginals must each sum to 1 (got {row_sum} and {col_sum})")]
    MarginalMismatch { row_sum: f64, col_sum: f64 },

    #[error("instance too large for {solver}: {rows}x{cols} (limit {limit} cells)")]
    InstanceTooLarge {
        solver: &'static str,
        rows: usize,
        cols: usize,
        limit: usize,
    },

    #[error(
        "exp(-lambda*M) underflows to an all-zero {axis} {index} at lambda={lambda}; \
         use the log-domain variant"
    )]
    KernelUnderflow {
        axis: &'static str,
        index: usize,
        lambda: f64,
    },

    #[error(
        "scaling vectors left the finite positive range after {iterations} iterations; use the log-domain variant"
    )]
    NumericalBreakdown { iterations: usize },

    #[error("Sinkhorn did not converge in {iterations} iterations (marginal error {error:e})")]
    NotConverged { iterations: usize, error: f64 },

    #[error("proximal update overflowed; try a smaller step size t0")]
    ProxOverflow,

    #[error("transport subproblem {index} failed: {source}")]
    Subproblem {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("network simplex exceeded {0} pivots")]
    PivotLimit(usize),

    #[error("unsupported configuration: {0}")]
    Unsupported(String),

    #[error("{path}:{line}: {message}")]
    Parse { path: String, line: u64, message: String },

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn subproblem(index: usize, err: Error) -> Self {
        Error::Subproblem {
            index,
            source: Box::new(err),
        }
    }

    /// Strips `Subproblem` wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Subproblem { source, .. } => source.root(),
            other => other,
        }
    }
}
