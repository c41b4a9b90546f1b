use std::path::PathBuf;

use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("nesting error: {0}")]
    Nesting(String),

    #[error("invalid material: {0}")]
    InvalidMaterial(String),

    #[error("decoupling bound violated in coarse cell {cell}: eta_p = {eta_p:.6e} exceeds 2*K_b = {limit:.6e}")]
    DecouplingBound { cell: usize, eta_p: f64, limit: f64 },

    #[error("linear solver stalled after {iterations} iterations, relative residual {residual:.6e}")]
    SolverStall { iterations: usize, residual: f64 },

    #[error("singular mechanics system: {0}")]
    SingularSystem(String),

    #[error("inconsistent coupling: {0}")]
    InconsistentCoupling(String),

    #[error("time step error: {0}")]
    Step(String),

    #[error(
        "coupling iterations did not converge within {max_iters} iterations \
         (weighted norm history: {history:?})"
    )]
    NonConvergence { max_iters: usize, history: Vec<f64> },

    #[error("numeric breakdown at step {step}, iteration {iter}: {what}")]
    NumericBreakdown { step: usize, iter: usize, what: String },

    #[error("config error at {path}:{line} (key `{key}`): {msg}")]
    Parse { path: String, line: usize, key: String, msg: String },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
