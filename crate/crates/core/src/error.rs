use std::path::PathBuf;

use thiserror::Error;

use crate::eval::EvalError;
use crate::label_registry::LabelSetError;
use crate::rsize_io::{FeatureError, ManifestError, NameError, ScanError};
use crate::scoring::ScoreError;
use crate::size_gate::GateError;
use crate::synth::SynthError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Crate-wide error. Module errors convert into it with `?`.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    LabelSet(#[from] LabelSetError),
    #[error(transparent)]
    Name(#[from] NameError),
    #[error(transparent)]
    Manifest(#[from] ManifestError),
    #[error(transparent)]
    Scan(#[from] ScanError),
    #[error(transparent)]
    Features(#[from] FeatureError),
    #[error(transparent)]
    Score(#[from] ScoreError),
    #[error(transparent)]
    Gate(#[from] GateError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error("{0}")]
    Usage(String),
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot write {path}: {source}")]
    Write {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// Process exit status for this error: 2 for invalid input or usage,
    /// 1 for failures that are not the caller's fault.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Write { .. } => 1,
            _ => 2,
        }
    }
}
