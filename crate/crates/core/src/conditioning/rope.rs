//! Rotary position embedding over a single (temporal) axis.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RopeError {
    #[error("rotary head dimension must be even and positive, got {0}")]
    OddDimension(usize),
    #[error("vector has {found} entries, head_dim is {expected}")]
    LengthMismatch { expected: usize, found: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RopeConfig {
    pub head_dim: usize,
    pub base: f64,
}

impl RopeConfig {
    pub fn new(head_dim: usize) -> Result<Self, RopeError> {
        if head_dim == 0 || !head_dim.is_multiple_of(2) {
            return Err(RopeError::OddDimension(head_dim));
        }
        Ok(Self {
            head_dim,
            base: 10_000.0,
        })
    }

    /// Angular frequency of coordinate pair `j`: `base^(-2j / head_dim)`.
    pub fn frequency(&self, pair: usize) -> f64 {
        self.base.powf(-2.0 * pair as f64 / self.head_dim as f64)
    }
}

/// Rotates each coordinate pair `(2j, 2j+1)` by `position * frequency(j)`.
/// Negative positions rotate the other way.
pub fn rope_rotate(
    vector: &[f64],
    position: i64,
    config: &RopeConfig,
) -> Result<Vec<f64>, RopeError> {
    if config.head_dim == 0 || !config.head_dim.is_multiple_of(2) {
        return Err(RopeError::OddDimension(config.head_dim));
    }
    if vector.len() != config.head_dim {
        return Err(RopeError::LengthMismatch {
            expected: config.head_dim,
            found: vector.len(),
        });
    }
    let mut out = Vec::with_capacity(vector.len());
    for (j, pair) in vector.chunks_exact(2).enumerate() {
        let (sin, cos) = (position as f64 * config.frequency(j)).sin_cos();
        out.push(pair[0] * cos - pair[1] * sin);
        out.push(pair[0] * sin + pair[1] * cos);
    }
    Ok(out)
}
