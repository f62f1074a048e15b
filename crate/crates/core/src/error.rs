use thiserror::Error;

/// Errors produced by the regression toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("matrix is not positive definite: {0}")]
    Decomposition(String),
    #[error("unsupported shape: {0}")]
    UnsupportedShape(String),
    #[error("{block} update failed at iteration {iteration}: {message}")]
    Sampler {
        block: &'static str,
        iteration: usize,
        message: String,
    },
    #[error(
        "reverse logistic regression did not converge after {iterations} iterations \
         (gradient norm {gradient_norm:e})"
    )]
    Convergence {
        iterations: usize,
        gradient_norm: f64,
    },
    #[error("empty input: {0}")]
    Empty(String),
    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn context(self, context: impl Into<String>) -> Self {
        Error::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }

    /// Innermost error with any scenario/context wrappers removed.
    pub fn root(&self) -> &Error {
        match self {
            Error::Context { source, .. } => source.root(),
            other => other,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
