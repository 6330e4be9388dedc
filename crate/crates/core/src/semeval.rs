//! Semantic scoring with a hashed byte-trigram embedding.

use serde::{Deserialize, Serialize};

use crate::remote::{post_json, Endpoint, RemoteError};

pub const EMBEDDING_DIM: usize = 1024;
/// Similarity a recovered text must exceed to count as correct.
pub const DEFAULT_THRESHOLD: f64 = 0.6;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

#[derive(Debug, thiserror::Error)]
pub enum SemevalError {
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("accuracy of an empty pair list")]
    NoPairs,
    #[error("threshold {0} outside [-1, 1]")]
    BadThreshold(f64),
    #[error(transparent)]
    Remote(#[from] RemoteError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingVector {
    pub values: Vec<f32>,
    /// FNV-1a hash of the source text.
    pub source_hash: u64,
}

impl EmbeddingVector {
    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }
}

pub fn fnv1a(bytes: &[u8]) -> u64 {
    bytes
        .iter()
        .fold(FNV_OFFSET, |h, &b| (h ^ u64::from(b)).wrapping_mul(FNV_PRIME))
}

/// Signed bag of lowercase byte trigrams hashed into 1024 buckets,
/// L2-normalized unless empty.
pub fn embed(text: &str) -> EmbeddingVector {
    let lower = text.to_lowercase();
    let mut acc = vec![0f64; EMBEDDING_DIM];
    for tri in lower.as_bytes().windows(3) {
        let h = fnv1a(tri);
        let sign = if h >> 63 == 0 { 1.0 } else { -1.0 };
        acc[(h % EMBEDDING_DIM as u64) as usize] += sign;
    }
    let norm = acc.iter().map(|v| v * v).sum::<f64>().sqrt();
    let values = if norm > 0.0 {
        acc.iter().map(|v| (v / norm) as f32).collect()
    } else {
        vec![0.0; EMBEDDING_DIM]
    };
    EmbeddingVector {
        values,
        source_hash: fnv1a(text.as_bytes()),
    }
}

/// `u·v / (‖u‖‖v‖)` in double precision, clamped to [-1, 1]; 0 when either
/// vector is zero.
pub fn cosine(u: &[f32], v: &[f32]) -> Result<f64, SemevalError> {
    if u.len() != v.len() {
        return Err(SemevalError::DimensionMismatch(u.len(), v.len()));
    }
    let (mut dot, mut nu, mut nv) = (0f64, 0f64, 0f64);
    for (&a, &b) in u.iter().zip(v) {
        let (a, b) = (f64::from(a), f64::from(b));
        dot += a * b;
        nu += a * a;
        nv += b * b;
    }
    if nu == 0.0 || nv == 0.0 {
        return Ok(0.0);
    }
    Ok((dot / (nu.sqrt() * nv.sqrt())).clamp(-1.0, 1.0))
}

/// Fraction of similarities strictly above `threshold`.
pub fn accuracy_from_scores(scores: &[f64], threshold: f64) -> Result<f64, SemevalError> {
    if !(-1.0..=1.0).contains(&threshold) {
        return Err(SemevalError::BadThreshold(threshold));
    }
    if scores.is_empty() {
        return Err(SemevalError::NoPairs);
    }
    Ok(scores.iter().filter(|&&s| s > threshold).count() as f64 / scores.len() as f64)
}

/// Fraction of `(sent, recovered)` pairs whose embeddings are more similar
/// than `threshold`.
pub fn accuracy(pairs: &[(String, String)], threshold: f64, embedder: &dyn Embedder) -> Result<f64, SemevalError> {
    let scores = pairs
        .iter()
        .map(|(a, b)| similarity(embedder, a, b))
        .collect::<Result<Vec<_>, _>>()?;
    accuracy_from_scores(&scores, threshold)
}

pub fn similarity(embedder: &dyn Embedder, a: &str, b: &str) -> Result<f64, SemevalError> {
    cosine(&embedder.embed(a)?, &embedder.embed(b)?)
}

pub trait Embedder {
    fn embed(&self, text: &str) -> Result<Vec<f32>, SemevalError>;
}

/// The built-in trigram embedding.
#[derive(Debug, Clone, Copy, Default)]
pub struct TrigramEmbedder;

impl Embedder for TrigramEmbedder {
    fn embed(&self, text: &str) -> Result<Vec<f32>, SemevalError> {
        Ok(embed(text).values)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmbedRequest {
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbedResponse {
    pub vector: Vec<f32>,
}

/// `POST <base>/embed`.
#[derive(Debug, Clone)]
pub struct RemoteEmbedder {
    pub endpoint: Endpoint,
}

impl Embedder for RemoteEmbedder {
    fn embed(&self, text: &str) -> Result<Vec<f32>, SemevalError> {
        let resp: EmbedResponse = post_json(&self.endpoint, "embed", &EmbedRequest { text: text.to_string() })?;
        Ok(resp.vector)
    }
}
