//! Crate-wide error type.
//!
//! Library code never panics on bad input; everything user-facing comes back
//! through [`Error`]. The pipeline layer wraps stage failures in
//! [`Error::Stage`] so a failed run can name the stage that died.

use std::path::Path;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Malformed input file. `line` is 1-based; 0 means the problem is not
    /// tied to a single line (e.g. a missing header column).
    #[error("parse error in {path} (line {line}): {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("empty universe: {0}")]
    EmptyUniverse(String),

    #[error("empty portfolio: no priced holdings at the valuation date")]
    EmptyPortfolio,

    #[error("undefined similarity: zero vector")]
    UndefinedSimilarity,

    #[error("degenerate graph: {0}")]
    DegenerateGraph(String),

    #[error("degenerate sample: {0}")]
    DegenerateSample(String),

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("stage '{stage}' failed: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        Error::Io {
            path: path.display().to_string(),
            source,
        }
    }

    pub fn parse(path: &Path, line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            path: path.display().to_string(),
            line,
            msg: msg.into(),
        }
    }

    pub fn in_stage(self, stage: &str) -> Self {
        Error::Stage {
            stage: stage.to_string(),
            source: Box::new(self),
        }
    }

    /// True for errors caused by bad configuration rather than bad data.
    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config(_))
    }
}
