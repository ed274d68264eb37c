//! HTTP client for an embedding/scoring sidecar.

use std::sync::OnceLock;
use std::time::Duration;

use super::multipart::{self, Part};
use super::wire::{
    ErrorBody, HealthResponse, ProviderRequest, ProviderResponse, RequestKind, MAX_RESPONSE_BYTES,
};
use super::{AestheticScorer, EmbeddingProvider, ProviderError};
use crate::embedding::FrameEmbedding;
use crate::frame::Frame;
use crate::transport::{HttpReply, HttpTransport};

pub struct SidecarClient {
    transport: HttpTransport,
    health: OnceLock<HealthResponse>,
}

impl SidecarClient {
    pub fn new(base_url: &str) -> Self {
        Self::with_timeout(base_url, Duration::from_secs(120))
    }

    pub fn with_timeout(base_url: &str, timeout: Duration) -> Self {
        Self {
            transport: HttpTransport::new(base_url, timeout, MAX_RESPONSE_BYTES),
            health: OnceLock::new(),
        }
    }

    pub fn health(&self) -> Result<HealthResponse, ProviderError> {
        if let Some(h) = self.health.get() {
            return Ok(h.clone());
        }
        let reply = self
            .transport
            .get("/health")
            .map_err(ProviderError::Transport)?;
        let health = HealthResponse::decode(&check_status(reply)?)?;
        Ok(self.health.get_or_init(|| health).clone())
    }

    fn post_json(&self, request: &ProviderRequest) -> Result<ProviderResponse, ProviderError> {
        let body = serde_json::to_vec(request).expect("request serialization is infallible");
        let reply = self
            .transport
            .post(request.kind.endpoint(), "application/json", &body)
            .map_err(ProviderError::Transport)?;
        ProviderResponse::decode(&check_status(reply)?)
    }

    /// Checks an embedding against the dimension the sidecar advertised, when
    /// health has been fetched.
    fn check_dim(
        &self,
        kind: RequestKind,
        e: FrameEmbedding,
    ) -> Result<FrameEmbedding, ProviderError> {
        if let Some(declared) = self
            .health
            .get()
            .and_then(|h| h.model(kind))
            .and_then(|m| m.dim)
        {
            if declared != e.dim() {
                return Err(ProviderError::Protocol(format!(
                    "{kind:?} returned dim {} but health declared {declared}",
                    e.dim()
                )));
            }
        }
        Ok(e)
    }
}

fn check_status(reply: HttpReply) -> Result<Vec<u8>, ProviderError> {
    match reply.status {
        200..=299 => Ok(reply.body),
        status => {
            let msg = serde_json::from_slice::<ErrorBody>(&reply.body)
                .map(|b| b.error)
                .unwrap_or_else(|_| String::from_utf8_lossy(&reply.body).into_owned());
            if (400..500).contains(&status) {
                Err(ProviderError::MalformedRequest(format!("{status}: {msg}")))
            } else {
                Err(ProviderError::Inference(format!("{status}: {msg}")))
            }
        }
    }
}

impl EmbeddingProvider for SidecarClient {
    fn model_id(&self) -> String {
        format!("sidecar:{}", self.transport.base_url())
    }

    fn embed_image(&self, frame: &Frame) -> Result<FrameEmbedding, ProviderError> {
        let e = self
            .post_json(&ProviderRequest::embed_image(frame)?)?
            .into_embedding()?;
        self.check_dim(RequestKind::EmbedImage, e)
    }

    fn embed_video(&self, frames: &[Frame]) -> Result<FrameEmbedding, ProviderError> {
        if frames.is_empty() {
            return Err(ProviderError::MalformedRequest("no frames".into()));
        }
        let request = ProviderRequest::embed_video(frames.len());
        let mut parts = vec![Part::new(
            "request",
            "application/json",
            serde_json::to_vec(&request).expect("request serialization is infallible"),
        )];
        for (i, f) in frames.iter().enumerate() {
            let png = f
                .encode_png()
                .map_err(|e| ProviderError::MalformedRequest(e.to_string()))?;
            parts.push(Part::new(format!("frame_{i:03}"), "image/png", png));
        }
        let (content_type, body) = multipart::encode(&parts);
        let reply = self
            .transport
            .post(RequestKind::EmbedVideo.endpoint(), &content_type, &body)
            .map_err(ProviderError::Transport)?;
        let e = ProviderResponse::decode(&check_status(reply)?)?.into_embedding()?;
        self.check_dim(RequestKind::EmbedVideo, e)
    }

    fn embed_text(&self, text: &str) -> Result<FrameEmbedding, ProviderError> {
        let e = self
            .post_json(&ProviderRequest::embed_text(text))?
            .into_embedding()?;
        self.check_dim(RequestKind::EmbedText, e)
    }
}

impl AestheticScorer for SidecarClient {
    fn model_id(&self) -> String {
        format!("sidecar:{}", self.transport.base_url())
    }

    fn score(&self, frame: &Frame, context: Option<&str>) -> Result<f64, ProviderError> {
        self.post_json(&ProviderRequest::score_aesthetic(frame, context)?)?
            .into_score()
    }
}
