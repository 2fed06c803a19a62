use thiserror::Error;

use crate::grid_world::Position;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("position ({}, {}) is blocked or outside the map", .0.x, .0.y)]
    InvalidPosition(Position),

    #[error("map parse error on line {line}: {message}")]
    MapParse { line: usize, message: String },

    #[error("invalid map: {0}")]
    InvalidMap(String),

    #[error("map generation failed after {attempts} attempts")]
    Generation { attempts: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("episode logic error: {0}")]
    EpisodeLogic(String),

    #[error("trial {seed} failed: {source}")]
    Trial {
        seed: u64,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
