//! Unit-norm embedding vectors and cosine helpers.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Maximum deviation from unit norm accepted for stored embeddings.
pub const NORM_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EmbeddingError {
    #[error("embedding is empty")]
    Empty,
    #[error("embedding contains non-finite values")]
    NonFinite,
    #[error("embedding has zero norm")]
    ZeroNorm,
    #[error("embedding norm {0} is not within tolerance of 1")]
    NotUnitNorm(f64),
}

/// A unit-norm embedding vector in the provider's embedding space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct FrameEmbedding(Vec<f64>);

impl FrameEmbedding {
    /// Normalizes `raw` to unit length.
    pub fn new(raw: Vec<f64>) -> Result<Self, EmbeddingError> {
        if raw.is_empty() {
            return Err(EmbeddingError::Empty);
        }
        if raw.iter().any(|v| !v.is_finite()) {
            return Err(EmbeddingError::NonFinite);
        }
        let norm = l2_norm(&raw);
        if norm == 0.0 || !norm.is_finite() {
            return Err(EmbeddingError::ZeroNorm);
        }
        Ok(Self(raw.into_iter().map(|v| v / norm).collect()))
    }

    /// Accepts a vector that is already unit-norm (within [`NORM_TOLERANCE`])
    /// and keeps its values bit-for-bit.
    pub fn from_unit(values: Vec<f64>) -> Result<Self, EmbeddingError> {
        if values.is_empty() {
            return Err(EmbeddingError::Empty);
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(EmbeddingError::NonFinite);
        }
        let norm = l2_norm(&values);
        if (norm - 1.0).abs() > NORM_TOLERANCE {
            return Err(EmbeddingError::NotUnitNorm(norm));
        }
        Ok(Self(values))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    /// Cosine similarity. Both sides are unit-norm, so this is the dot product.
    pub fn cosine(&self, other: &FrameEmbedding) -> f64 {
        dot(&self.0, &other.0)
    }
}

impl TryFrom<Vec<f64>> for FrameEmbedding {
    type Error = EmbeddingError;

    fn try_from(values: Vec<f64>) -> Result<Self, Self::Error> {
        Self::from_unit(values)
    }
}

impl From<FrameEmbedding> for Vec<f64> {
    fn from(e: FrameEmbedding) -> Self {
        e.0
    }
}

impl AsRef<[f64]> for FrameEmbedding {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn l2_norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Cosine similarity of two arbitrary (not necessarily normalized) vectors,
/// clamped to [-1, 1]. Zero vectors have similarity 0 with everything.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let denom = l2_norm(a) * l2_norm(b);
    if denom == 0.0 {
        return 0.0;
    }
    (dot(a, b) / denom).clamp(-1.0, 1.0)
}
