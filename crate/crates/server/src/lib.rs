//! HTTP API and deployment plumbing for the science QA service.
//!
//! [`router`] exposes the ask flow, the past-question bank, history,
//! feedback and usage analytics as JSON endpoints. [`workspace`] knows the
//! data directory layout used by the `sciqa` command-line tool.

mod error;
mod routes;
pub mod workspace;

pub use error::{ApiError, ErrorCode};
pub use routes::{
    router, AppState, ClientConfig, EmbedderInfo, FeedbackRequest, Health, HistoryPage, Summary,
    UsageRequest, SESSION_HEADER,
};
