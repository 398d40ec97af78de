use thiserror::Error;

/// Errors raised by the solver library.
#[derive(Debug, Error)]
pub enum Error {
    /// An input violated a mathematical precondition.
    #[error("domain error: {0}")]
    Domain(String),

    /// A configuration value is missing, mistyped or out of range.
    #[error("config error at `{key}`: {message}")]
    Config { key: String, message: String },

    /// An iterative solver exhausted its iteration budget.
    #[error("{solver} did not converge after {iterations} iterations (residual {residual:e})")]
    NonConvergence {
        solver: &'static str,
        iterations: usize,
        residual: f64,
    },

    /// Backtracking could not find a step satisfying the Armijo condition.
    #[error("line search failed after {halvings} halvings")]
    LineSearch { halvings: usize },

    /// A constraint set has no feasible point.
    #[error("infeasible: {0}")]
    Infeasible(String),

    /// A sub-solver failed inside the outer alternating loop.
    #[error("outer iteration {iteration}, {stage}: {source}")]
    Stage {
        iteration: usize,
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            message: message.into(),
        }
    }

    pub(crate) fn at_stage(self, iteration: usize, stage: &'static str) -> Self {
        Error::Stage {
            iteration,
            stage,
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
