//! Query-text embeddings for similarity search: a deterministic feature-
//! hashing reference embedder plus a client for an OpenAI-compatible remote
//! embedding service.
//!
//! The reference embedder hashes lowercased alphanumeric tokens into a
//! fixed-dimension count vector (FNV-1a 64) and L2-normalizes it. Counts are
//! non-negative, so cosine similarity on this path always lands in [0, 1]
//! and identical text always produces identical vectors.

use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_DIMENSION: usize = 384;

/// A fixed-dimension embedding; either the zero vector or unit Euclidean norm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EmbeddingVector {
    pub values: Vec<f64>,
}

impl EmbeddingVector {
    /// Wrap raw values, L2-normalizing unless the vector is all zeros.
    pub fn normalized(mut values: Vec<f64>) -> Self {
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            for v in &mut values {
                *v /= norm;
            }
        }
        Self { values }
    }

    /// Wrap values exactly as given (used when reloading stored vectors).
    pub fn from_stored(values: Vec<f64>) -> Self {
        Self { values }
    }

    pub fn dimension(&self) -> usize {
        self.values.len()
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|v| *v == 0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbedderKind {
    Reference,
    Remote,
}

/// Embedder selection plus the remote-service coordinates when applicable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmbedderConfig {
    pub kind: EmbedderKind,
    #[serde(default = "default_dimension")]
    pub dimension: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub remote_endpoint: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub remote_model_name: Option<String>,
}

fn default_dimension() -> usize {
    DEFAULT_DIMENSION
}

impl Default for EmbedderConfig {
    fn default() -> Self {
        Self::reference(DEFAULT_DIMENSION)
    }
}

impl EmbedderConfig {
    pub fn reference(dimension: usize) -> Self {
        Self {
            kind: EmbedderKind::Reference,
            dimension,
            remote_endpoint: None,
            remote_model_name: None,
        }
    }

    pub fn remote(endpoint: impl Into<String>, model: impl Into<String>, dimension: usize) -> Self {
        Self {
            kind: EmbedderKind::Remote,
            dimension,
            remote_endpoint: Some(endpoint.into()),
            remote_model_name: Some(model.into()),
        }
    }

    pub fn validate(&self) -> Result<(), EmbeddingError> {
        if self.dimension == 0 {
            return Err(EmbeddingError::InvalidConfig(
                "dimension must be positive".into(),
            ));
        }
        let remote_fields = self.remote_endpoint.is_some() && self.remote_model_name.is_some();
        match self.kind {
            EmbedderKind::Remote if !remote_fields => Err(EmbeddingError::InvalidConfig(
                "remote embedder requires remote_endpoint and remote_model_name".into(),
            )),
            EmbedderKind::Reference
                if self.remote_endpoint.is_some() || self.remote_model_name.is_some() =>
            {
                Err(EmbeddingError::InvalidConfig(
                    "reference embedder must not set remote fields".into(),
                ))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Error)]
pub enum EmbeddingError {
    #[error("embedding dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("embedding transport failure: {0}")]
    Transport(String),
    #[error("invalid embedder configuration: {0}")]
    InvalidConfig(String),
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn fnv1a_64(bytes: &[u8]) -> u64 {
    let mut hash = FNV_OFFSET;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(FNV_PRIME);
    }
    hash
}

/// Iterate the maximal alphanumeric runs of `text`.
pub(crate) fn alnum_tokens(text: &str) -> impl Iterator<Item = &str> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
}

/// Deterministic feature-hashing embedder: lowercase, split on
/// non-alphanumeric boundaries, bucket each token by FNV-1a 64 modulo the
/// dimension with weight +1, then L2-normalize. Empty token sets produce the
/// zero vector.
pub fn embed_reference(text: &str, dimension: usize) -> EmbeddingVector {
    assert!(dimension >= 1, "dimension must be positive");
    let lowered = text.to_lowercase();
    let mut counts = vec![0.0_f64; dimension];
    for token in alnum_tokens(&lowered) {
        let bucket = (fnv1a_64(token.as_bytes()) % dimension as u64) as usize;
        counts[bucket] += 1.0;
    }
    EmbeddingVector::normalized(counts)
}

/// Raw cosine similarity `dot(a, b) / (|a| |b|)`; 0 when either vector is
/// zero. Ranking consumes this raw value; clamp with [`reported_score`]
/// before displaying.
pub fn cosine_similarity(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64, EmbeddingError> {
    if a.dimension() != b.dimension() {
        return Err(EmbeddingError::DimensionMismatch {
            expected: a.dimension(),
            got: b.dimension(),
        });
    }
    let mut dot = 0.0;
    let mut na = 0.0;
    let mut nb = 0.0;
    for (x, y) in a.values.iter().zip(&b.values) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return Ok(0.0);
    }
    Ok(dot / (na.sqrt() * nb.sqrt()))
}

/// Clamp a raw cosine value into [0, 1] for reporting.
pub fn reported_score(raw: f64) -> f64 {
    raw.clamp(0.0, 1.0)
}

#[derive(Serialize)]
struct RemoteRequest<'a> {
    model: &'a str,
    input: [&'a str; 1],
}

#[derive(Deserialize)]
struct RemoteResponse {
    data: Vec<RemoteDatum>,
}

#[derive(Deserialize)]
struct RemoteDatum {
    embedding: Vec<f64>,
}

/// Client for an OpenAI-compatible embeddings endpoint.
pub struct RemoteEmbedder {
    client: reqwest::blocking::Client,
    config: EmbedderConfig,
}

impl RemoteEmbedder {
    pub fn new(config: EmbedderConfig) -> Result<Self, EmbeddingError> {
        config.validate()?;
        if config.kind != EmbedderKind::Remote {
            return Err(EmbeddingError::InvalidConfig(
                "RemoteEmbedder requires kind = remote".into(),
            ));
        }
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(30))
            .build()
            .map_err(|e| EmbeddingError::Transport(e.to_string()))?;
        Ok(Self { client, config })
    }

    pub fn embed(&self, text: &str) -> Result<EmbeddingVector, EmbeddingError> {
        let endpoint = self
            .config
            .remote_endpoint
            .as_deref()
            .expect("validated remote config");
        let model = self
            .config
            .remote_model_name
            .as_deref()
            .expect("validated remote config");
        let response = self
            .client
            .post(endpoint)
            .json(&RemoteRequest {
                model,
                input: [text],
            })
            .send()
            .map_err(|e| EmbeddingError::Transport(e.to_string()))?;
        let status = response.status();
        if !status.is_success() {
            return Err(EmbeddingError::Transport(format!(
                "embedding service returned status {status}"
            )));
        }
        let body: RemoteResponse = response
            .json()
            .map_err(|e| EmbeddingError::Transport(format!("malformed response: {e}")))?;
        let datum = body
            .data
            .into_iter()
            .next()
            .ok_or_else(|| EmbeddingError::Transport("response carries no embedding".into()))?;
        if datum.embedding.len() != self.config.dimension {
            return Err(EmbeddingError::DimensionMismatch {
                expected: self.config.dimension,
                got: datum.embedding.len(),
            });
        }
        Ok(EmbeddingVector::normalized(datum.embedding))
    }
}

/// One-shot remote embedding call; builds a throwaway client. Long-lived
/// callers should hold a [`RemoteEmbedder`] (or [`Embedder`]) instead.
pub fn embed_remote(text: &str, config: &EmbedderConfig) -> Result<EmbeddingVector, EmbeddingError> {
    RemoteEmbedder::new(config.clone())?.embed(text)
}

/// Unified embedder handle used by the pipeline.
pub enum Embedder {
    Reference { dimension: usize },
    Remote(RemoteEmbedder),
}

impl Embedder {
    pub fn from_config(config: &EmbedderConfig) -> Result<Self, EmbeddingError> {
        config.validate()?;
        match config.kind {
            EmbedderKind::Reference => Ok(Embedder::Reference {
                dimension: config.dimension,
            }),
            EmbedderKind::Remote => Ok(Embedder::Remote(RemoteEmbedder::new(config.clone())?)),
        }
    }

    pub fn dimension(&self) -> usize {
        match self {
            Embedder::Reference { dimension } => *dimension,
            Embedder::Remote(remote) => remote.config.dimension,
        }
    }

    pub fn embed(&self, text: &str) -> Result<EmbeddingVector, EmbeddingError> {
        match self {
            Embedder::Reference { dimension } => Ok(embed_reference(text, *dimension)),
            Embedder::Remote(remote) => remote.embed(text),
        }
    }
}
