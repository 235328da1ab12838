use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("unsupported configuration: {0}")]
    UnsupportedConfiguration(String),

    #[error("resource limit exceeded: {0}")]
    ResourceLimit(String),

    #[error("degenerate grid: {0}")]
    DegenerateGrid(String),

    #[error("axis mismatch: {0}")]
    AxisMismatch(String),

    #[error("fit did not converge: {0}")]
    ConvergenceFailure(String),

    #[error("{source_name}:{line}:{column}: {message}")]
    Parse {
        source_name: String,
        line: usize,
        column: usize,
        message: String,
    },

    #[error("no data: {0}")]
    NoData(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    pub(crate) fn parse(
        source_name: impl Into<String>,
        line: usize,
        column: usize,
        message: impl Into<String>,
    ) -> Self {
        Error::Parse {
            source_name: source_name.into(),
            line,
            column,
            message: message.into(),
        }
    }
}

/// Checks that `value` is a probability and names it in the error otherwise.
pub(crate) fn check_probability(name: &str, value: f64) -> Result<()> {
    if (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(Error::invalid(format!("{name} must lie in [0, 1], got {value}")))
    }
}
