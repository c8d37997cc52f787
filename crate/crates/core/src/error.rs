use std::path::PathBuf;

use crate::grid::GridIndex;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("resolution {delta} m does not divide the room extents; nearest valid values: {nearest:?}")]
    InvalidResolution { delta: f64, nearest: Vec<f64> },

    #[error("point ({x}, {y}) lies outside the mobile space")]
    OutsideMobileSpace { x: f64, y: f64 },

    #[error("cell {0} is out of bounds")]
    IndexOutOfBounds(GridIndex),

    #[error("cell {0} is an obstacle")]
    ObstacleCell(GridIndex),

    #[error("pose ({x}, {y}) is inside an occupied cell")]
    PoseInObstacle { x: f64, y: f64 },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("no free cell left after inflation")]
    NoFreeCell,

    #[error("parse error in {context}: {message}")]
    Parse { context: String, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(context: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Parse {
            context: context.into(),
            message: message.into(),
        }
    }
}
