use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("numeric domain error in {op}: argument {value}")]
    NumericDomain { op: &'static str, value: f64 },

    #[error("shape mismatch in {op}: {lhs:?} vs {rhs:?}")]
    Shape {
        op: &'static str,
        lhs: (usize, usize),
        rhs: (usize, usize),
    },

    /// Cholesky pivot was not strictly positive.
    #[error("matrix not positive definite (pivot {pivot} = {value})")]
    NotPositiveDefinite { pivot: usize, value: f64 },

    #[error("filter diverged at step {step}: {source}")]
    FilterDivergence {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("degenerate mode weight for mode {mode}: {detail}")]
    DegenerateWeight { mode: usize, detail: String },

    #[error("data error: {0}")]
    Data(String),

    #[error("trajectory {trajectory}: {source}")]
    Trajectory {
        trajectory: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("non-finite gradient at epoch {epoch}")]
    NonFiniteGradient { epoch: usize },

    #[error("undefined baseline: metric {metric} is zero")]
    UndefinedBaseline { metric: &'static str },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    /// True for failures of the numerics (divergence, bad gradients) as
    /// opposed to IO or configuration problems.
    pub fn is_numeric(&self) -> bool {
        match self {
            Error::NumericDomain { .. }
            | Error::NotPositiveDefinite { .. }
            | Error::FilterDivergence { .. }
            | Error::DegenerateWeight { .. }
            | Error::NonFiniteGradient { .. }
            | Error::UndefinedBaseline { .. } => true,
            Error::Trajectory { source, .. } => source.is_numeric(),
            _ => false,
        }
    }

    pub(crate) fn at_step(self, step: usize) -> Error {
        match self {
            e @ (Error::FilterDivergence { .. } | Error::Trajectory { .. }) => e,
            e => Error::FilterDivergence {
                step,
                source: Box::new(e),
            },
        }
    }

    pub(crate) fn in_trajectory(self, trajectory: usize) -> Error {
        Error::Trajectory {
            trajectory,
            source: Box::new(self),
        }
    }
}
