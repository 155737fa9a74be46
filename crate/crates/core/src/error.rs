use std::path::PathBuf;

use thiserror::Error;

use crate::attention::AttentionError;
use crate::corpus::CorpusError;
use crate::geometry::GeometryError;
use crate::stats::StatsError;
use crate::trace::TraceError;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Attention(#[from] AttentionError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error("missing trace: {0}")]
    MissingTrace(String),
    #[error("grain mismatch: {0}")]
    GrainMismatch(String),
    #[error("insufficient pairs: {got} usable (need at least {needed})")]
    InsufficientPairs { got: usize, needed: usize },
    #[error("need at least 2 multilingual and 2 monolingual models, got {multilingual} and {monolingual}")]
    InsufficientModels { multilingual: usize, monolingual: usize },
    #[error("trace validation failed for {0} with {1} violation(s)")]
    ValidationFailed(PathBuf, usize),
    #[error("missing analysis output: {0}")]
    MissingAnalysis(PathBuf),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> Error {
        let path = path.into();
        move |source| Error::Io { path, source }
    }

    /// Process exit code: 1 validation, 2 numerical, 3 I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Stats(StatsError::NonConvergence { .. })
            | Error::Stats(StatsError::PerfectFit)
            | Error::Stats(StatsError::Numerical(_))
            | Error::Geometry(_) => 2,
            Error::Trace(TraceError::MissingManifest(_))
            | Error::Trace(TraceError::Io { .. })
            | Error::Corpus(CorpusError::Io { .. })
            | Error::MissingTrace(_)
            | Error::MissingAnalysis(_)
            | Error::Io { .. } => 3,
            _ => 1,
        }
    }

    /// Short machine-readable name of the error class.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Corpus(_) => "corpus",
            Error::Trace(TraceError::MissingManifest(_)) | Error::MissingTrace(_) => "missing_trace",
            Error::Trace(_) => "trace",
            Error::Geometry(_) => "geometry",
            Error::Attention(_) => "attention",
            Error::Stats(StatsError::NonConvergence { .. }) => "non_convergence",
            Error::Stats(StatsError::RankDeficientDesign(_)) => "rank_deficient_design",
            Error::Stats(_) => "stats",
            Error::GrainMismatch(_) => "grain_mismatch",
            Error::InsufficientPairs { .. } => "insufficient_pairs",
            Error::InsufficientModels { .. } => "insufficient_models",
            Error::ValidationFailed(..) => "validation_failed",
            Error::MissingAnalysis(_) => "missing_analysis",
            Error::Config(_) => "config",
            Error::Csv(_) | Error::Json(_) => "format",
            Error::Io { .. } => "io",
        }
    }
}
