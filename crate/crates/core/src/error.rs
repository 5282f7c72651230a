use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// Inconsistent variable sets, missing nodes, bad partitions and the like.
    #[error("structural error: {0}")]
    Structural(String),

    /// A factorization or inversion failed. `condition` is the best available
    /// condition-number estimate of the offending matrix (infinite if singular).
    #[error("numerical error: {message} (condition estimate {condition:e})")]
    Numerical { message: String, condition: f64 },

    /// Fusion left a robot's joint information matrix non positive-definite.
    #[error(
        "negative information event: robot {robot} fusing from {neighbor} at step {timestep} \
         (min eigenvalue of fused joint {min_eigenvalue:e})"
    )]
    NegativeInformation {
        robot: u32,
        neighbor: u32,
        timestep: u32,
        min_eigenvalue: f64,
    },

    #[error("invalid config field `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    pub(crate) fn structural(msg: impl Into<String>) -> Self {
        Error::Structural(msg.into())
    }

    pub(crate) fn numerical(msg: impl Into<String>, condition: f64) -> Self {
        Error::Numerical {
            message: msg.into(),
            condition,
        }
    }

    pub(crate) fn config(field: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: msg.into(),
        }
    }
}
