use std::path::PathBuf;

use crate::core_model::BiasPoint;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("non-finite input: {0}")]
    NonFinite(&'static str),

    #[error("invalid core parameters: {0}")]
    InvalidCore(String),

    #[error("core fit failed: {0}")]
    Fit(String),

    #[error("network shape error: {0}")]
    Shape(String),

    #[error("invalid grid: {0}")]
    Grid(String),

    #[error("core current vanishes at v_gs={v_gs}, v_gd={v_gd} (|ids_core| < 1e-30 A)", v_gs = .0.v_gs, v_gd = .0.v_gd)]
    DegenerateCore(BiasPoint),

    #[error("|v_ds| below 1 mV at v_gs={v_gs}, v_gd={v_gd}; eps is undefined there", v_gs = .0.v_gs, v_gd = .0.v_gd)]
    VdsGuard(BiasPoint),

    #[error("empty {0}")]
    Empty(&'static str),

    #[error("{path}:{line}: {msg}")]
    Csv { path: PathBuf, line: u64, msg: String },

    #[error("training diverged at epoch {epoch} (cost = {cost})")]
    Diverged { epoch: usize, cost: f64 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("model file: {0}")]
    ModelFile(String),

    #[error("parse error at {pos}: {msg}")]
    Parse { pos: usize, msg: String },

    #[error("evaluation error: {0}")]
    Eval(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
