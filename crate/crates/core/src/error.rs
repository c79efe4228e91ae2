use std::fmt;

use thiserror::Error;

/// Pipeline stage, used to label errors surfaced by the end-to-end runners.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Ingest,
    Split,
    Harmonic,
    Resample,
    Cluster,
    Fpca,
    Phenodates,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Stage::Ingest => "ingest",
            Stage::Split => "split",
            Stage::Harmonic => "harmonic",
            Stage::Resample => "resample",
            Stage::Cluster => "cluster",
            Stage::Fpca => "fpca",
            Stage::Phenodates => "phenodates",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed input: {0}")]
    MalformedInput(String),

    #[error("parse error at row {row}, column {column}: cannot read {cell:?} as a number")]
    Parse {
        row: usize,
        column: usize,
        cell: String,
    },

    #[error("model not identifiable: {0}")]
    Identifiability(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("rank error: {0}")]
    Rank(String),

    #[error("numerical failure at iteration {iteration}: {message}")]
    NumericalFailure { iteration: usize, message: String },

    #[error("degenerate curve: {0}")]
    DegenerateCurve(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{stage} stage failed: {source}")]
    Stage {
        stage: Stage,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn at(self, stage: Stage) -> Error {
        match self {
            e @ Error::Stage { .. } => e,
            e => Error::Stage {
                stage,
                source: Box::new(e),
            },
        }
    }

    /// Innermost error, skipping stage labels.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            e => e,
        }
    }

    /// Process exit code: 2 for input problems, 3 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self.root() {
            Error::NumericalFailure { .. }
            | Error::DegenerateCurve(_)
            | Error::Identifiability(_)
            | Error::Rank(_) => 3,
            _ => 2,
        }
    }
}

pub(crate) trait StageExt<T> {
    fn stage(self, stage: Stage) -> Result<T>;
}

impl<T> StageExt<T> for Result<T> {
    fn stage(self, stage: Stage) -> Result<T> {
        self.map_err(|e| e.at(stage))
    }
}
