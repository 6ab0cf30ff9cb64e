use thiserror::Error;

use crate::vehicle::Trajectory;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("singular kernel evaluated at the source point ({x}, {z})")]
    Singularity { x: f64, z: f64 },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("boundary-condition system is singular or ill-conditioned (condition estimate {condition:e})")]
    SingularSystem { condition: f64 },

    #[error("simulation diverged at t = {time} s")]
    Diverged {
        time: f64,
        partial: Option<Box<Trajectory>>,
    },

    #[error("all {samples} rollouts diverged")]
    AllRolloutsDiverged { samples: usize },

    #[error("linearization failed at knot {knot} (t = {time} s)")]
    Linearization { knot: usize, time: f64 },

    #[error("config error{}: {message}", line.map(|l| format!(" (line {l})")).unwrap_or_default())]
    Config { line: Option<usize>, message: String },

    #[error("malformed data file `{path}`: {message}")]
    Format { path: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
