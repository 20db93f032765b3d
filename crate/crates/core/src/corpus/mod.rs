//! Knowledge corpus (paragraphs, passages, figures) and the past-exam
//! question bank.
//!
//! [`CorpusStore`] is an in-memory store persisted as JSON-lines files in a
//! data directory. Mutation goes through `&mut self`; callers sharing a store
//! wrap it in a `RwLock` so reads run concurrently and ingestion is exclusive.

mod ingest;
mod store;
mod types;

use thiserror::Error;

pub use ingest::{ExamIngestReport, IngestReport, LineDiagnostic, EXAM_CSV_HEADER};
pub use store::{CorpusStore, Facets};
pub use types::*;

/// Fraction of rejected lines above which an ingestion is aborted.
pub const MAX_REJECT_FRACTION: f64 = 0.10;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("I/O on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {rejected} of {total} lines rejected (limit 10%); first: {first}")]
    TooManyRejects {
        path: String,
        rejected: usize,
        total: usize,
        first: String,
    },
    #[error("{path}: bad header: expected {expected:?}, found {found:?}")]
    BadHeader {
        path: String,
        expected: String,
        found: String,
    },
    #[error("{path}:{line}: {reason}")]
    Parse {
        path: String,
        line: usize,
        reason: String,
    },
    #[error("invalid filter: {0}")]
    InvalidFilter(String),
    #[error("unknown exam question {0}")]
    UnknownQuestion(String),
}
