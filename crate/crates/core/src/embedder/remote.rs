use std::sync::{Condvar, Mutex};

use serde::{Deserialize, Serialize};

use super::{check_length, EmbedError, Embedder, EmbedderConfig, EmbeddingVector};

/// Texts sent per HTTP request when embedding a large batch.
const REQUEST_CHUNK: usize = 64;

#[derive(Serialize)]
struct EmbedRequest<'a> {
    texts: &'a [&'a str],
}

#[derive(Deserialize)]
struct EmbedResponse {
    vectors: Vec<Vec<f64>>,
    dim: usize,
}

/// Counting semaphore bounding concurrent requests.
struct InFlight {
    limit: usize,
    active: Mutex<usize>,
    freed: Condvar,
}

struct Permit<'a>(&'a InFlight);

impl InFlight {
    fn acquire(&self) -> Permit<'_> {
        let mut active = self.active.lock().unwrap_or_else(|e| e.into_inner());
        while *active >= self.limit {
            active = self.freed.wait(active).unwrap_or_else(|e| e.into_inner());
        }
        *active += 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        let mut active = self.0.active.lock().unwrap_or_else(|e| e.into_inner());
        *active -= 1;
        self.0.freed.notify_one();
    }
}

/// Client for an external embedding service.
///
/// Protocol: `POST {url}/embed` with `{"texts": [...]}`, answered by
/// `{"vectors": [[...], ...], "dim": n}`. Any non-2xx status is a failure.
/// Returned vectors are L2-normalized on receipt.
pub struct RemoteEmbedder {
    endpoint: String,
    dim: usize,
    client: reqwest::blocking::Client,
    in_flight: InFlight,
}

impl std::fmt::Debug for RemoteEmbedder {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RemoteEmbedder")
            .field("endpoint", &self.endpoint)
            .field("dim", &self.dim)
            .finish()
    }
}

impl RemoteEmbedder {
    pub fn new(config: &EmbedderConfig) -> Result<Self, EmbedError> {
        config.validate()?;
        let base = config
            .url
            .as_deref()
            .ok_or_else(|| EmbedError::Config("remote provider requires a URL".into()))?;
        let base = base.trim_end_matches('/');
        let endpoint = if base.ends_with("/embed") {
            base.to_string()
        } else {
            format!("{base}/embed")
        };
        let client = reqwest::blocking::Client::builder()
            .timeout(config.timeout())
            .build()
            .map_err(|e| EmbedError::Config(e.to_string()))?;
        Ok(Self {
            endpoint,
            dim: config.dim,
            client,
            in_flight: InFlight {
                limit: config.max_in_flight,
                active: Mutex::new(0),
                freed: Condvar::new(),
            },
        })
    }

    pub fn endpoint(&self) -> &str {
        &self.endpoint
    }

    fn request(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>, EmbedError> {
        let _permit = self.in_flight.acquire();
        let response = self
            .client
            .post(&self.endpoint)
            .json(&EmbedRequest { texts })
            .send()
            .map_err(|e| EmbedError::Transport {
                endpoint: self.endpoint.clone(),
                message: e.to_string(),
            })?;
        let status = response.status();
        if !status.is_success() {
            return Err(EmbedError::Status {
                endpoint: self.endpoint.clone(),
                status: status.as_u16(),
            });
        }
        let body: EmbedResponse = response.json().map_err(|e| self.malformed(e.to_string()))?;
        if body.dim != self.dim {
            return Err(self.malformed(format!("dim {} != configured {}", body.dim, self.dim)));
        }
        if body.vectors.len() != texts.len() {
            return Err(self.malformed(format!(
                "{} vectors for {} texts",
                body.vectors.len(),
                texts.len()
            )));
        }
        body.vectors
            .into_iter()
            .map(|v| {
                if v.len() != self.dim {
                    Err(self.malformed(format!("vector of length {}", v.len())))
                } else if v.iter().any(|x| !x.is_finite()) {
                    Err(self.malformed("non-finite component".into()))
                } else {
                    Ok(EmbeddingVector::normalized(v))
                }
            })
            .collect()
    }

    fn malformed(&self, reason: String) -> EmbedError {
        EmbedError::Malformed {
            endpoint: self.endpoint.clone(),
            reason,
        }
    }
}

impl Embedder for RemoteEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector, EmbedError> {
        check_length(text)?;
        let mut v = self.request(&[text])?;
        Ok(v.remove(0))
    }

    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>, EmbedError> {
        for t in texts {
            check_length(t)?;
        }
        let mut out = Vec::with_capacity(texts.len());
        for chunk in texts.chunks(REQUEST_CHUNK) {
            out.extend(self.request(chunk)?);
        }
        Ok(out)
    }
}
