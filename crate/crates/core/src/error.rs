use thiserror::Error;

/// Errors raised by the engine. Each variant maps onto one CLI exit class.
#[derive(Debug, Error)]
pub enum Error {
    #[error("enumeration cap exceeded: about {count:.3e} items requested, cap is {cap}")]
    CapExceeded { count: f64, cap: u64 },

    #[error("not primitive within N <= {bound}: pair ({a}, {b}) cannot be connected")]
    NotPrimitive { a: usize, b: usize, bound: usize },

    #[error("no convergence after {iterations} iterations (residual {residual:.3e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("no sign change of the pressure on [{lo}, {hi}]")]
    NoSignChange { lo: f64, hi: f64 },

    #[error("potential has no tail descriptor")]
    MissingTailDescriptor,

    #[error("{beta} * phi is not summable")]
    NotSummable { beta: f64 },

    #[error("pressure curve is not convex at grid index {index} (second difference {second_difference:.3e})")]
    NotConvex { index: usize, second_difference: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    /// Short machine-parsable tag used on the CLI's stderr line.
    pub fn tag(&self) -> &'static str {
        match self {
            Error::CapExceeded { .. } => "cap_exceeded",
            Error::NotPrimitive { .. } => "not_primitive",
            Error::NonConvergence { .. } => "non_convergence",
            Error::NoSignChange { .. } => "no_sign_change",
            Error::MissingTailDescriptor => "missing_tail",
            Error::NotSummable { .. } => "not_summable",
            Error::NotConvex { .. } => "not_convex",
            Error::InvalidArgument(_) => "invalid_argument",
            Error::Unsupported(_) => "unsupported",
            Error::Config(_) => "config",
            Error::Io(_) => "io",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
