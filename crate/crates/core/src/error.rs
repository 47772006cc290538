use thiserror::Error;

/// Errors raised by the solvers and reconstruction routines.
#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("model error: {0}")]
    Model(String),

    #[error("{stage} did not converge after {iterations} iterations (last residual {residual:.3e})")]
    Iteration {
        stage: &'static str,
        iterations: usize,
        residual: f64,
        trace: Vec<f64>,
    },

    #[error("numerical integrity violated in {stage}: {detail}")]
    NumericalIntegrity { stage: &'static str, detail: String },

    #[error("data error: {0}")]
    Data(String),

    #[error("data consistency error at cell {cell} ({x:.4}, {y:.4}): {detail}")]
    DataConsistency {
        cell: usize,
        x: f64,
        y: f64,
        detail: String,
    },

    #[error("unsupported parameter: {0}")]
    Unsupported(String),

    #[error("fields live on different grids")]
    GridMismatch,

    #[error("linear algebra failure: {0}")]
    Numerical(String),
}

impl Error {
    pub fn is_iteration(&self) -> bool {
        matches!(self, Error::Iteration { .. })
    }
}

pub type Result<T> = std::result::Result<T, Error>;
