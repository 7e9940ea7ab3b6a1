use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    /// A stated hypothesis on the data (H(xi), H(beta), H(f)(i)-(iv)) is violated.
    #[error("hypothesis {clause} violated: {detail}")]
    Hypothesis { clause: &'static str, detail: String },

    #[error("dimension mismatch: expected {expected}, got {got} ({context})")]
    Dimension {
        expected: usize,
        got: usize,
        context: &'static str,
    },

    #[error("eigensolver did not converge: attained residual {residual:e} ({detail})")]
    Eigen { residual: f64, detail: String },

    #[error("matrix is not positive definite ({0})")]
    NotPositiveDefinite(&'static str),

    #[error("singular linear system ({0})")]
    Singular(&'static str),

    #[error("certificate failed: {0}")]
    Certificate(String),

    #[error("not enough spectral clusters: need {needed}, have {available}; request more eigenpairs")]
    InsufficientClusters { needed: usize, available: usize },

    /// Iterative solve gave up; carries the best iterate found.
    #[error("{what} did not converge after {iterations} iterations (gradient norm {grad_norm:e})")]
    Convergence {
        what: &'static str,
        iterations: usize,
        grad_norm: f64,
        best: Vec<f64>,
    },

    #[error("search exhausted: {0}")]
    SearchExhausted(String),

    #[error("config error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("config error in key `{key}`: {msg}")]
    Schema { key: String, msg: String },

    #[error("malformed input: {0}")]
    Format(String),

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn hypothesis(clause: &'static str, detail: impl Into<String>) -> Self {
        Error::Hypothesis {
            clause,
            detail: detail.into(),
        }
    }

    pub fn schema(key: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Schema {
            key: key.into(),
            msg: msg.into(),
        }
    }

    pub fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }
}
