//! Text embedding providers.
//!
//! Two providers implement [`Embedder`]:
//!
//! - [`ReferenceEmbedder`]: a deterministic hashed-feature embedder that needs
//!   no model files. Used for tests and desk-scale deployments.
//! - [`RemoteEmbedder`]: a JSON-over-HTTP client for an external sentence
//!   encoder (`POST /embed`).
//!
//! Every vector produced by either provider has unit L2 norm, or is exactly
//! zero when the text yields no features.

mod reference;
mod remote;

use std::env;
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use reference::{fnv1a_64, ReferenceEmbedder};
pub use remote::RemoteEmbedder;

/// Longest text, in characters, any provider accepts.
pub const MAX_INPUT_CHARS: usize = 512;
pub const DEFAULT_REFERENCE_DIM: usize = 256;
pub const DEFAULT_REMOTE_DIM: usize = 768;
pub const MIN_DIM: usize = 8;
pub const DEFAULT_TIMEOUT_MS: u64 = 10_000;
pub const DEFAULT_MAX_IN_FLIGHT: usize = 8;

#[derive(Debug, Error)]
pub enum EmbedError {
    #[error("input of {len} characters exceeds the {max}-character limit")]
    InputTooLong { len: usize, max: usize },
    #[error("embedding request to {endpoint} failed: {message}")]
    Transport { endpoint: String, message: String },
    #[error("embedding service {endpoint} returned status {status}")]
    Status { endpoint: String, status: u16 },
    #[error("embedding service {endpoint} sent a malformed response: {reason}")]
    Malformed { endpoint: String, reason: String },
    #[error("invalid embedder configuration: {0}")]
    Config(String),
}

impl EmbedError {
    /// Transport and status failures may succeed on retry.
    pub fn is_retryable(&self) -> bool {
        matches!(
            self,
            EmbedError::Transport { .. } | EmbedError::Status { .. }
        )
    }
}

/// A fixed-length embedding. Unit norm, or all zeros.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EmbeddingVector(Vec<f32>);

impl EmbeddingVector {
    /// Wrap raw values without normalizing them.
    pub fn from_raw(values: Vec<f32>) -> Self {
        Self(values)
    }

    /// L2-normalize `values`. An all-zero input stays zero.
    pub fn normalized(values: Vec<f64>) -> Self {
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Self(vec![0.0; values.len()]);
        }
        Self(values.into_iter().map(|v| (v / norm) as f32).collect())
    }

    pub fn zeros(dim: usize) -> Self {
        Self(vec![0.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f32> {
        self.0
    }

    pub fn norm(&self) -> f64 {
        self.0
            .iter()
            .map(|&v| f64::from(v) * f64::from(v))
            .sum::<f64>()
            .sqrt()
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&v| v == 0.0)
    }

    /// Cosine similarity; 0.0 when either side is the zero vector.
    pub fn cosine(&self, other: &EmbeddingVector) -> f64 {
        let (na, nb) = (self.norm(), other.norm());
        if na == 0.0 || nb == 0.0 {
            return 0.0;
        }
        let dot: f64 = self
            .0
            .iter()
            .zip(&other.0)
            .map(|(&a, &b)| f64::from(a) * f64::from(b))
            .sum();
        (dot / (na * nb)).clamp(-1.0, 1.0)
    }
}

/// Common contract for embedding providers.
pub trait Embedder: Send + Sync {
    fn dim(&self) -> usize;

    fn embed(&self, text: &str) -> Result<EmbeddingVector, EmbedError>;

    /// Embed many texts. The result is element-wise identical to calling
    /// [`Embedder::embed`] on each text, and fails as a whole if any text
    /// fails.
    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>, EmbedError> {
        texts.iter().map(|t| self.embed(t)).collect()
    }
}

/// The first `max` characters of `text`.
pub fn truncate_chars(text: &str, max: usize) -> &str {
    match text.char_indices().nth(max) {
        Some((byte, _)) => &text[..byte],
        None => text,
    }
}

pub(crate) fn check_length(text: &str) -> Result<(), EmbedError> {
    let len = text.chars().count();
    if len > MAX_INPUT_CHARS {
        return Err(EmbedError::InputTooLong {
            len,
            max: MAX_INPUT_CHARS,
        });
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provider {
    Reference,
    Remote,
}

impl std::str::FromStr for Provider {
    type Err = EmbedError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "reference" => Ok(Provider::Reference),
            "remote" => Ok(Provider::Remote),
            other => Err(EmbedError::Config(format!("unknown provider {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmbedderConfig {
    pub provider: Provider,
    pub dim: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub url: Option<String>,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
    #[serde(default = "default_max_in_flight")]
    pub max_in_flight: usize,
}

fn default_timeout_ms() -> u64 {
    DEFAULT_TIMEOUT_MS
}

fn default_max_in_flight() -> usize {
    DEFAULT_MAX_IN_FLIGHT
}

impl Default for EmbedderConfig {
    fn default() -> Self {
        Self::reference(DEFAULT_REFERENCE_DIM)
    }
}

impl EmbedderConfig {
    pub fn reference(dim: usize) -> Self {
        Self {
            provider: Provider::Reference,
            dim,
            url: None,
            timeout_ms: DEFAULT_TIMEOUT_MS,
            max_in_flight: DEFAULT_MAX_IN_FLIGHT,
        }
    }

    pub fn remote(url: impl Into<String>, dim: usize) -> Self {
        Self {
            provider: Provider::Remote,
            dim,
            url: Some(url.into()),
            timeout_ms: DEFAULT_TIMEOUT_MS,
            max_in_flight: DEFAULT_MAX_IN_FLIGHT,
        }
    }

    /// Read `EMBED_PROVIDER`, `EMBED_DIM`, `EMBED_URL` and `EMBED_TIMEOUT_MS`.
    pub fn from_env() -> Result<Self, EmbedError> {
        let provider = match env::var("EMBED_PROVIDER") {
            Ok(p) => p.parse()?,
            Err(_) => Provider::Reference,
        };
        let dim = match env::var("EMBED_DIM") {
            Ok(d) => d
                .parse()
                .map_err(|_| EmbedError::Config(format!("EMBED_DIM is not an integer: {d:?}")))?,
            Err(_) => match provider {
                Provider::Reference => DEFAULT_REFERENCE_DIM,
                Provider::Remote => DEFAULT_REMOTE_DIM,
            },
        };
        let timeout_ms = match env::var("EMBED_TIMEOUT_MS") {
            Ok(t) => t.parse().map_err(|_| {
                EmbedError::Config(format!("EMBED_TIMEOUT_MS is not an integer: {t:?}"))
            })?,
            Err(_) => DEFAULT_TIMEOUT_MS,
        };
        let config = Self {
            provider,
            dim,
            url: env::var("EMBED_URL").ok(),
            timeout_ms,
            max_in_flight: DEFAULT_MAX_IN_FLIGHT,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), EmbedError> {
        if self.dim < MIN_DIM {
            return Err(EmbedError::Config(format!(
                "dim must be at least {MIN_DIM}, got {}",
                self.dim
            )));
        }
        if self.timeout_ms == 0 {
            return Err(EmbedError::Config("timeout must be positive".into()));
        }
        if self.max_in_flight == 0 {
            return Err(EmbedError::Config(
                "max in-flight requests must be positive".into(),
            ));
        }
        if self.provider == Provider::Remote && self.url.is_none() {
            return Err(EmbedError::Config(
                "remote provider requires EMBED_URL".into(),
            ));
        }
        Ok(())
    }

    pub fn timeout(&self) -> Duration {
        Duration::from_millis(self.timeout_ms)
    }

    /// Instantiate the configured provider.
    pub fn build(&self) -> Result<Arc<dyn Embedder>, EmbedError> {
        self.validate()?;
        Ok(match self.provider {
            Provider::Reference => Arc::new(ReferenceEmbedder::new(self.dim)?),
            Provider::Remote => Arc::new(RemoteEmbedder::new(self)?),
        })
    }
}
