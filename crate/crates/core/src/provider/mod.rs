//! Embedding and aesthetic-scoring providers.
//!
//! Image, video and text embeddings plus an aesthetic score are obtained
//! through the [`EmbeddingProvider`] and [`AestheticScorer`] traits. The
//! [`mock`] implementations are deterministic and in-process; [`http`] talks
//! to an external sidecar over the JSON protocol in [`wire`].

pub mod http;
pub mod mock;
pub mod multipart;
pub mod wire;

use std::sync::Arc;

use rayon::prelude::*;
use thiserror::Error;

use crate::embedding::{EmbeddingError, FrameEmbedding};
use crate::frame::Frame;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProviderError {
    #[error("provider transport error: {0}")]
    Transport(String),
    #[error("malformed provider request: {0}")]
    MalformedRequest(String),
    #[error("provider inference failure: {0}")]
    Inference(String),
    #[error("invalid provider response: {0}")]
    Protocol(String),
    #[error("invalid embedding from provider: {0}")]
    Embedding(#[from] EmbeddingError),
}

pub trait EmbeddingProvider: Send + Sync {
    fn model_id(&self) -> String;

    fn embed_image(&self, frame: &Frame) -> Result<FrameEmbedding, ProviderError>;

    /// Clip-level embedding of an ordered frame sequence.
    fn embed_video(&self, frames: &[Frame]) -> Result<FrameEmbedding, ProviderError>;

    fn embed_text(&self, text: &str) -> Result<FrameEmbedding, ProviderError>;
}

pub trait AestheticScorer: Send + Sync {
    fn model_id(&self) -> String;

    /// Scores one image on the scorer's native scale. `context` is the shot
    /// prompt, for scorers that condition on text.
    fn score(&self, frame: &Frame, context: Option<&str>) -> Result<f64, ProviderError>;
}

/// The provider set used by a run.
#[derive(Clone)]
pub struct Providers {
    pub embedder: Arc<dyn EmbeddingProvider>,
    pub scorer: Arc<dyn AestheticScorer>,
}

impl Providers {
    pub fn new(embedder: Arc<dyn EmbeddingProvider>, scorer: Arc<dyn AestheticScorer>) -> Self {
        Self { embedder, scorer }
    }

    pub fn mock() -> Self {
        let m = Arc::new(mock::MockProvider);
        Self::new(m.clone(), m)
    }

    pub fn sidecar(base_url: &str) -> Self {
        let c = Arc::new(http::SidecarClient::new(base_url));
        Self::new(c.clone(), c)
    }

    /// Identifier covering both models; part of the run fingerprint.
    pub fn id(&self) -> String {
        format!("{}+{}", self.embedder.model_id(), self.scorer.model_id())
    }

    /// Embeds every frame, concurrently, returning results in frame order.
    pub fn embed_frames(&self, frames: &[Frame]) -> Result<Vec<FrameEmbedding>, ProviderError> {
        frames
            .par_iter()
            .map(|f| self.embedder.embed_image(f))
            .collect()
    }

    pub fn score_frames(
        &self,
        frames: &[&Frame],
        context: Option<&str>,
    ) -> Result<Vec<f64>, ProviderError> {
        frames
            .par_iter()
            .map(|f| self.scorer.score(f, context))
            .collect()
    }
}

impl std::fmt::Debug for Providers {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Providers").field("id", &self.id()).finish()
    }
}
