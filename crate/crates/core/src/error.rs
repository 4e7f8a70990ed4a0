use num_complex::Complex64;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, LssError>;

#[derive(Debug, Clone, Error)]
pub enum LssError {
    /// One or more structural problems with a model or signal.
    #[error("invalid input: {}", .0.join("; "))]
    Validation(Vec<String>),

    /// The linear matrix equation has no unique solution.
    #[error("ill-posed matrix equation: eigenvalues {lhs} and {rhs} sum to (nearly) zero")]
    IllPosed { lhs: Complex64, rhs: Complex64 },

    #[error("ill-posed: mode {mode} is not asymptotically stable (spectral abscissa {abscissa:.3e})")]
    UnstableMode { mode: usize, abscissa: f64 },

    /// Growth of the Gramian series or fixed-point iterates. The coupling
    /// matrices are probably too large relative to the decay of the modes.
    #[error("divergence detected after {iterations} iterations: {what}")]
    Divergence { iterations: usize, what: String },

    #[error("linear algebra failure: {0}")]
    Solver(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    /// The bilinear embedding requires equal dimensions and identity couplings.
    #[error("bilinear embedding undefined: {}", .0.join(", "))]
    EmbeddingUndefined(Vec<String>),

    #[error("refused: {0}")]
    Refused(String),
}

impl LssError {
    pub fn validation(msg: impl Into<String>) -> Self {
        LssError::Validation(vec![msg.into()])
    }
}
