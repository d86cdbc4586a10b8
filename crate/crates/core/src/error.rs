use std::path::PathBuf;

use thiserror::Error;

/// Everything that can go wrong in the library.
///
/// Variants are grouped by failure class so the CLI can map them onto
/// stable exit codes (see [`Error::exit_code`]).
#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("validation error: {0}")]
    Validation(String),

    #[error("laplacian is singular: nullspace dimension {0} (graph disconnected)")]
    Singularity(usize),

    #[error("newton iteration did not converge after {iterations} iterations (residual {residual:.3e})")]
    Convergence { iterations: usize, residual: f64 },

    #[error("equilibrium left the angle box: max |lambda| = {max_abs:.6}")]
    OutsideGamma { max_abs: f64 },

    #[error("missing parameter: {0}")]
    MissingParameter(&'static str),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("envelope does not reach the bound within horizon {horizon} s")]
    NotReached { horizon: f64 },

    #[error("optimisation problem is infeasible: {0}")]
    Infeasible(String),

    #[error("node degree {degree} exceeds enumeration guard {limit}")]
    Degree { degree: usize, limit: usize },

    #[error("measurement error amplitude {amplitude} exceeds declared bound {bound} ({channel})")]
    Bound {
        channel: &'static str,
        amplitude: f64,
        bound: f64,
    },

    #[error("frequency guard tripped at t = {t:.4} s: |omega_{bus}| = {value:.4e} rad/s")]
    Blowup { t: f64, bus: usize, value: f64 },
}

impl Error {
    /// Process exit code for the failure class: parse 2, validation 3,
    /// convergence 4, guard 5, anything else 1.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io { .. } | Error::Parse(_) => 2,
            Error::Validation(_)
            | Error::Singularity(_)
            | Error::MissingParameter(_)
            | Error::Domain(_)
            | Error::Degree { .. }
            | Error::Bound { .. } => 3,
            Error::Convergence { .. }
            | Error::OutsideGamma { .. }
            | Error::NotReached { .. }
            | Error::Infeasible(_) => 4,
            Error::Blowup { .. } => 5,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
