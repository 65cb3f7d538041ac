use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid camera rig: {0}")]
    InvalidRig(String),

    #[error("invalid grid spec: {0}")]
    InvalidGrid(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("could not place {requested} boxes under overlap cap {iou_cap} (placed {placed})")]
    Placement {
        requested: usize,
        placed: usize,
        iou_cap: f64,
    },

    #[error("wire decode error: {0}")]
    Wire(String),

    #[error("parameter file error: {0}")]
    ParamFile(String),

    #[error("training diverged at epoch {epoch}: loss = {loss}")]
    Diverged { epoch: usize, loss: f64 },

    #[error("scenario parse error: {0}")]
    Scenario(String),

    #[error("frame {frame}: {source}")]
    Frame {
        frame: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    /// Short stable identifier used by the CLI and the C ABI.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidRig(_) => "invalid_rig",
            Error::InvalidGrid(_) => "invalid_grid",
            Error::DimensionMismatch(_) => "dimension_mismatch",
            Error::InvalidConfig(_) => "invalid_config",
            Error::Placement { .. } => "placement",
            Error::Wire(_) => "wire",
            Error::ParamFile(_) => "param_file",
            Error::Diverged { .. } => "diverged",
            Error::Scenario(_) => "scenario",
            Error::Frame { source, .. } => source.kind(),
            Error::Io(_) => "io",
        }
    }

    pub(crate) fn in_frame(self, frame: usize) -> Error {
        Error::Frame {
            frame,
            source: Box::new(self),
        }
    }
}
