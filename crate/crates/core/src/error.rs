use std::path::PathBuf;

use thiserror::Error;

/// Errors surfaced by the tracking library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("frame directory not found: {0}")]
    MissingDirectory(PathBuf),
    #[error("no files in {dir} match pattern `{pattern}`")]
    NoFrames { dir: PathBuf, pattern: String },
    #[error("invalid file pattern `{0}`")]
    BadPattern(String),
    #[error("{path}: frame is {got_w}x{got_h}, expected {want_w}x{want_h}")]
    MixedDimensions {
        path: PathBuf,
        want_w: usize,
        want_h: usize,
        got_w: usize,
        got_h: usize,
    },
    #[error("{path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },
    #[error("no target in frame")]
    NoTarget,
    #[error("seed pixel ({0}, {1}) is not foreground")]
    SeedNotForeground(usize, usize),
    #[error("frame must be at least 3x3, got {0}x{1}")]
    FrameTooSmall(usize, usize),
    #[error("degenerate polygon: fewer than 2 distinct vertices")]
    DegeneratePolygon,
    #[error("degenerate segment: endpoints coincide")]
    DegenerateSegment,
    #[error("zero-area rectangle")]
    ZeroArea,
    #[error("length mismatch: {0} result frames vs {1} truth frames")]
    LengthMismatch(usize, usize),
    #[error("need at least 3 frames, got {0}")]
    TooFewFrames(usize),
    #[error("invalid scene: {0}")]
    InvalidScene(String),
    #[error("invalid configuration: {0}")]
    Config(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
