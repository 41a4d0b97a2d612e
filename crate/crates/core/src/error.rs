use std::path::PathBuf;

use thiserror::Error;

use crate::assembly::AssemblyError;
use crate::config::ConfigError;
use crate::descriptor::DescriptorError;
use crate::ensemble::EnsembleError;
use crate::formats::FormatError;
use crate::geometry::GeometryError;
use crate::model::ModelError;
use crate::sampling::SamplingError;

/// Usage or configuration problem.
pub const EXIT_USAGE: i32 = 1;
/// Bad, missing or stale input data.
pub const EXIT_DATA: i32 = 2;
/// Numerical failure such as a diverging loss.
pub const EXIT_NUMERIC: i32 = 3;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Format { path: PathBuf, source: FormatError },
    #[error("{path} was written by a different configuration (hash {found}, expected {expected}); rerun the earlier stage")]
    Stale {
        path: PathBuf,
        expected: String,
        found: String,
    },
    #[error("{path}: {source}")]
    Trajectory { path: PathBuf, source: GeometryError },
    #[error("frame {frame}: {source}")]
    Frame { frame: usize, source: GeometryError },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("frame {frame}, nodes {nodes:?}: {source}")]
    Descriptor {
        frame: usize,
        nodes: Vec<usize>,
        source: DescriptorError,
    },
    #[error("fragment kind {kind}: {source}")]
    Sampling { kind: String, source: SamplingError },
    #[error("fragment kind {kind}: {source}")]
    Model { kind: String, source: ModelError },
    #[error("fragment kind {kind}: {msg}")]
    Data { kind: String, msg: String },
    #[error("frame {frame}: {source}")]
    Assembly { frame: usize, source: AssemblyError },
    #[error(transparent)]
    Ensemble(#[from] EnsembleError),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Error {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Usage(_) | Error::Ensemble(_) => EXIT_USAGE,
            Error::Model {
                source: ModelError::NonFiniteLoss { .. },
                ..
            }
            | Error::Assembly {
                source: AssemblyError::Model(ModelError::NonFiniteLoss { .. }),
                ..
            } => EXIT_NUMERIC,
            _ => EXIT_DATA,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
