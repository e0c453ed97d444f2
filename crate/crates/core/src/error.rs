use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: expected {expected:?}, got {actual:?}")]
    ShapeMismatch {
        expected: (usize, usize),
        actual: (usize, usize),
    },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid parameter `{name}` = {value}: {constraint}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        constraint: &'static str,
    },

    #[error("singular Hessian at frequency ({freq_row}, {freq_col}): rho*lambda + eta*omega = {value:e}")]
    SingularHessian {
        freq_row: usize,
        freq_col: usize,
        value: f64,
    },

    #[error("split operator is rank deficient at frequency ({freq_row}, {freq_col}): lambda = omega = 0")]
    RankDeficient { freq_row: usize, freq_col: usize },

    #[error("conjugate gradient breakdown at step {step}: curvature p'Hp = {curvature:e}")]
    CgBreakdown { step: usize, curvature: f64 },

    #[error("non-finite value encountered in {context}")]
    NonFinite { context: String },

    #[error("iteration {iteration}: cost {cost:e} exceeded divergence guard {limit:e}")]
    Diverged {
        iteration: usize,
        cost: f64,
        limit: f64,
    },

    #[error("iteration {iteration}: {source}")]
    AtIteration {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("image error: {0}")]
    Image(#[from] image::ImageError),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    pub fn at_iteration(self, iteration: usize) -> Self {
        match self {
            e @ Error::AtIteration { .. } => e,
            e => Error::AtIteration {
                iteration,
                source: Box::new(e),
            },
        }
    }
}

pub(crate) fn require_positive(name: &'static str, value: f64) -> Result<()> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter {
            name,
            value,
            constraint: "must be finite and > 0",
        })
    }
}
