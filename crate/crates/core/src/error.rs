//! Crate-wide error type.

use std::path::PathBuf;

/// All failure modes surfaced by this crate.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("voxel ({x}, {y}, {z}) outside {l}x{w}x{h} grid")]
    OutOfBounds {
        x: usize,
        y: usize,
        z: usize,
        l: usize,
        w: usize,
        h: usize,
    },

    #[error("non-finite sample at voxel ({x}, {y}, {z}), time point {t}")]
    NonFinite { x: usize, y: usize, z: usize, t: usize },

    #[error("dimension mismatch: {0}")]
    DimMismatch(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("{path}:{line}: {msg}")]
    Manifest {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("{path}: {msg} (byte offset {offset})")]
    Format {
        path: PathBuf,
        offset: u64,
        msg: String,
    },

    #[error(
        "eigensolver did not converge: residual {residual:.3e} exceeds tolerance {tol:.1e} \
         after {iterations} iterations"
    )]
    NoConvergence {
        residual: f64,
        tol: f64,
        iterations: usize,
    },

    #[error("training data contains a single class")]
    SingleClass,

    #[error("every leave-one-out fold had a single-class training part")]
    AllFoldsInvalid,

    #[error("holdout partition is empty")]
    EmptyHoldout,

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("stage {stage} failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Wraps an error with the pipeline stage it occurred in.
    pub fn in_stage(self, stage: &'static str) -> Error {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
