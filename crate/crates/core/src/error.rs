use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the scanning pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("invalid depth {0} mm (must be positive)")]
    InvalidDepth(f64),

    #[error("under-constrained rigid solve: {effective} effective pairs, need at least 3")]
    UnderConstrained { effective: usize },

    #[error("degenerate point configuration (singular-value ratio {ratio:.3e})")]
    DegenerateConfiguration { ratio: f64 },

    #[error("insufficient points: have {have}, need {need}")]
    InsufficientPoints { have: usize, need: usize },

    #[error("no two end-effectors in contact below the {cap_mm} mm threshold cap")]
    NoContact { cap_mm: f64 },

    #[error("sparse alignment under-constrained ({effective} effective pairs); empty sets: {empty:?}")]
    SparseUnderConstrained {
        effective: usize,
        empty: Vec<&'static str>,
    },

    #[error("ICP diverged: no correspondences within {max_dist} mm")]
    IcpDivergence { max_dist: f64 },

    #[error("registration gave up at frame {frame} after {skipped} consecutive skipped frames (last registered frame {last_good})")]
    TooManySkips {
        frame: usize,
        skipped: usize,
        last_good: usize,
    },

    #[error("no zero crossing in the volume")]
    EmptyMesh,

    #[error("volume probe needs a closed mesh ({boundary_edges} boundary edges)")]
    OpenMesh { boundary_edges: usize },

    #[error("degenerate motion: frame {frame} has no visible points")]
    DegenerateMotion { frame: usize },

    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParameter { field: &'static str, reason: String },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    #[error("missing input file {0}")]
    MissingInput(PathBuf),

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("manifest: {0}")]
    Manifest(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            context: context.into(),
            source,
        }
    }

    pub(crate) fn invalid(field: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            field,
            reason: reason.into(),
        }
    }
}
