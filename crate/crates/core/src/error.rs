use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },

    #[error("length mismatch: {inputs} inputs vs {outputs} outputs")]
    LengthMismatch { inputs: usize, outputs: usize },

    #[error("invalid hyperparameters: {0}")]
    InvalidHyper(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("cholesky factorization failed at every jitter level {attempted:?}")]
    Cholesky { attempted: Vec<f64> },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("task {task_id}: {source}")]
    Task {
        task_id: u64,
        #[source]
        source: Box<Error>,
    },

    #[error("test task {task_id} (seed {seed}): {source}")]
    TestTask {
        task_id: u64,
        seed: u64,
        #[source]
        source: Box<Error>,
    },

    #[error(
        "infeasible: best-case certified inclusion {best:.6} < required {required:.6} \
         (margin {margin:.6}) for n={n}, delta={delta}"
    )]
    Infeasible {
        n: usize,
        delta: f64,
        best: f64,
        required: f64,
        margin: f64,
    },

    #[error("no task count up to {limit} makes delta={delta} feasible")]
    NotFound { delta: f64, limit: u64 },

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn in_task(self, task_id: u64) -> Error {
        Error::Task {
            task_id,
            source: Box::new(self),
        }
    }

    /// True for failures of the linear algebra rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::Cholesky { .. } | Error::Numerical(_) => true,
            Error::Task { source, .. } | Error::TestTask { source, .. } => source.is_numerical(),
            _ => false,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
