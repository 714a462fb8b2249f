use thiserror::Error;

/// Errors produced anywhere in the library.
///
/// The CLI maps [`Error::is_validation`] failures to exit code 2 and
/// everything else to exit code 3.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid specification: {0}")]
    InvalidSpec(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("argument outside domain: {0}")]
    Domain(String),

    #[error("kernel is singular at the requested point: {0}")]
    SingularPoint(String),

    #[error("condition violated: {0}")]
    ConditionViolated(String),

    #[error("quadrature did not converge (estimate {estimate:.6e}, error {error:.3e})")]
    QuadratureFailure { estimate: f64, error: f64 },

    #[error("series diverges: {0}")]
    Divergent(String),

    #[error("series tail did not reach tolerance {tol:.3e} by order {order} (tail bound {tail:.3e})")]
    NoConvergence { order: usize, tail: f64, tol: f64 },

    #[error("outside the regime where the quantity is defined: {0}")]
    OutsideRegime(String),

    #[error("sample {index} failed: {message}")]
    WorkerFailure { index: u64, message: String },

    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl Error {
    /// Short machine-readable name of the variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidSpec(_) => "invalid_spec",
            Error::InvalidConfig(_) => "invalid_config",
            Error::Domain(_) => "domain",
            Error::SingularPoint(_) => "singular_point",
            Error::ConditionViolated(_) => "condition_violated",
            Error::QuadratureFailure { .. } => "quadrature_failure",
            Error::Divergent(_) => "divergent",
            Error::NoConvergence { .. } => "no_convergence",
            Error::OutsideRegime(_) => "outside_regime",
            Error::WorkerFailure { .. } => "worker_failure",
            Error::Numerical(_) => "numerical",
        }
    }

    /// True for errors the caller could have avoided by passing valid input.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::InvalidSpec(_)
                | Error::InvalidConfig(_)
                | Error::Domain(_)
                | Error::SingularPoint(_)
                | Error::Divergent(_)
                | Error::ConditionViolated(_)
                | Error::OutsideRegime(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
