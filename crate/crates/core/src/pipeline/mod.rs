//! End-to-end commands: convert, validate, evaluate, stats.

mod config;
mod convert;
mod evaluate;
mod stats;
mod validate;

use thiserror::Error;

pub use config::{JobConfig, PointFiles, RegistrySource};
pub use convert::{convert, ConvertSummary, SetSummary};
pub use evaluate::{evaluate, instances_as_detections, load_detections, EvalOptions, EvalTask};
pub use stats::{stats, CategoryStats, SetStats, StatsReport};
pub use validate::{validate, ValidateReport};

use crate::annotate::AnnotateError;
use crate::dataset::{DatasetError, Violation};
use crate::geo::GeoError;
use crate::metrics::MetricsError;
use crate::registry::RegistryError;
use crate::tiler::{OverlapReport, TileError};

/// Exit status for a successful run.
pub const EXIT_OK: i32 = 0;
/// Validation or policy failure (overlap, invalid documents).
pub const EXIT_POLICY: i32 = 1;
/// Bad input: unreadable files, malformed data, bad configuration.
pub const EXIT_INPUT: i32 = 2;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("{context}: {source}")]
    Geo {
        context: String,
        #[source]
        source: GeoError,
    },
    #[error("rasters are not co-registered: {0}")]
    CoRegistration(String),
    #[error(transparent)]
    Tile(#[from] TileError),
    #[error(transparent)]
    Registry(#[from] RegistryError),
    #[error("{context}: {source}")]
    Annotate {
        context: String,
        #[source]
        source: AnnotateError,
    },
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error("{context}: {source}")]
    Metrics {
        context: String,
        #[source]
        source: MetricsError,
    },
    #[error("{context}: {message}")]
    Input { context: String, message: String },
    #[error("{} overlap violation(s):\n{}", .0.violation_count(), .0.to_text())]
    OverlapViolation(OverlapReport),
    #[error("{} validation violation(s)", .0.len())]
    ValidationFailed(Vec<Violation>),
}

impl PipelineError {
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::OverlapViolation(_) | PipelineError::ValidationFailed(_) => EXIT_POLICY,
            _ => EXIT_INPUT,
        }
    }

    pub(crate) fn geo(context: impl Into<String>, source: GeoError) -> Self {
        PipelineError::Geo {
            context: context.into(),
            source,
        }
    }

    pub(crate) fn metrics(context: impl Into<String>, source: MetricsError) -> Self {
        PipelineError::Metrics {
            context: context.into(),
            source,
        }
    }
}

/// Runs `f` on a pool of `workers` threads (0 = number of CPUs).
pub fn with_workers<T: Send>(
    workers: usize,
    f: impl FnOnce() -> T + Send,
) -> Result<T, PipelineError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| PipelineError::Config(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}
