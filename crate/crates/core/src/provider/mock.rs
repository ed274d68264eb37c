//! Deterministic in-process providers.
//!
//! Image embeddings are 4x4 grid color means centered on mid-gray (48 dims)
//! plus one small constant component so that flat gray images still have a
//! direction. Text embeddings embed the procedural pattern the mock generator
//! draws for that text, which puts prompts and frames in one space. The
//! aesthetic score is luminance contrast mapped onto [0, 10].

use super::wire::{
    HealthResponse, ModelInfo, Payload, ProviderRequest, ProviderResponse, RequestKind,
    PROTOCOL_VERSION,
};
use super::{AestheticScorer, EmbeddingProvider, ProviderError};
use crate::embedding::FrameEmbedding;
use crate::frame::Frame;
use crate::synth::Pattern;

const GRID: u32 = 4;
const BIAS: f64 = 1e-3;
pub const MOCK_EMBED_DIM: usize = (GRID * GRID * 3) as usize + 1;
const TEXT_RENDER_SIZE: u32 = 16;
/// Luma standard deviation that maps to the top score.
const FULL_CONTRAST: f64 = 0.2;

#[derive(Debug, Clone, Default)]
pub struct MockProvider;

impl MockProvider {
    fn raw_image_vector(frame: &Frame) -> Vec<f64> {
        let (w, h) = (frame.width(), frame.height());
        let mut sums = vec![0.0; (GRID * GRID * 3) as usize];
        let mut counts = vec![0usize; (GRID * GRID) as usize];
        for (x, y, px) in frame.image().enumerate_pixels() {
            let cell = ((y * GRID / h) * GRID + x * GRID / w) as usize;
            counts[cell] += 1;
            for ch in 0..3 {
                sums[cell * 3 + ch] += px[ch] as f64 / 255.0 - 0.5;
            }
        }
        let mut v: Vec<f64> = sums
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let n = counts[i / 3];
                if n == 0 {
                    0.0
                } else {
                    s / n as f64
                }
            })
            .collect();
        v.push(BIAS);
        v
    }

    /// Answers a protocol request in-process. `frames` carries the decoded
    /// multipart frames for `embed_video`.
    pub fn respond(
        &self,
        request: &ProviderRequest,
        frames: &[Frame],
    ) -> Result<ProviderResponse, ProviderError> {
        request.validate()?;
        match request.kind {
            RequestKind::EmbedImage => {
                let e = self.embed_image(&request.image()?)?;
                Ok(ProviderResponse::embedding(
                    EmbeddingProvider::model_id(self),
                    &e,
                ))
            }
            RequestKind::EmbedVideo => {
                let expected = match request.payload {
                    Payload::Frames { frame_count } => frame_count,
                    _ => unreachable!("validated"),
                };
                if frames.len() != expected {
                    return Err(ProviderError::MalformedRequest(format!(
                        "frame_count {expected} but {} frames attached",
                        frames.len()
                    )));
                }
                let e = self.embed_video(frames)?;
                Ok(ProviderResponse::embedding(
                    EmbeddingProvider::model_id(self),
                    &e,
                ))
            }
            RequestKind::EmbedText => {
                let Payload::Text { text } = &request.payload else {
                    unreachable!("validated")
                };
                let e = self.embed_text(text)?;
                Ok(ProviderResponse::embedding(
                    EmbeddingProvider::model_id(self),
                    &e,
                ))
            }
            RequestKind::ScoreAesthetic => {
                let s = self.score(&request.image()?, request.context.as_deref())?;
                Ok(ProviderResponse::score(AestheticScorer::model_id(self), s))
            }
        }
    }

    pub fn health(&self) -> HealthResponse {
        let embed = |kind| ModelInfo {
            kind,
            model_id: EmbeddingProvider::model_id(self),
            dim: Some(MOCK_EMBED_DIM),
        };
        HealthResponse {
            protocol_version: PROTOCOL_VERSION,
            models: vec![
                embed(RequestKind::EmbedImage),
                embed(RequestKind::EmbedVideo),
                embed(RequestKind::EmbedText),
                ModelInfo {
                    kind: RequestKind::ScoreAesthetic,
                    model_id: AestheticScorer::model_id(self),
                    dim: None,
                },
            ],
        }
    }
}

impl EmbeddingProvider for MockProvider {
    fn model_id(&self) -> String {
        "mock-grid-embed-v1".into()
    }

    fn embed_image(&self, frame: &Frame) -> Result<FrameEmbedding, ProviderError> {
        Ok(FrameEmbedding::new(Self::raw_image_vector(frame))?)
    }

    fn embed_video(&self, frames: &[Frame]) -> Result<FrameEmbedding, ProviderError> {
        if frames.is_empty() {
            return Err(ProviderError::MalformedRequest("no frames".into()));
        }
        let mut acc = vec![0.0; MOCK_EMBED_DIM];
        for f in frames {
            for (a, v) in acc.iter_mut().zip(self.embed_image(f)?.as_slice()) {
                *a += v;
            }
        }
        Ok(FrameEmbedding::new(acc)?)
    }

    fn embed_text(&self, text: &str) -> Result<FrameEmbedding, ProviderError> {
        if text.is_empty() {
            return Err(ProviderError::MalformedRequest("empty text".into()));
        }
        let pixels = crate::synth::quantize(&Pattern::for_text(text).render(
            TEXT_RENDER_SIZE,
            TEXT_RENDER_SIZE,
            (0.0, 0.0),
        ));
        let frame = Frame::from_rgb(TEXT_RENDER_SIZE, TEXT_RENDER_SIZE, pixels)
            .map_err(|e| ProviderError::Inference(e.to_string()))?;
        self.embed_image(&frame)
    }
}

impl AestheticScorer for MockProvider {
    fn model_id(&self) -> String {
        "mock-contrast-aesthetic-v1".into()
    }

    fn score(&self, frame: &Frame, _context: Option<&str>) -> Result<f64, ProviderError> {
        let luma: Vec<f64> = frame
            .image()
            .pixels()
            .map(|p| (0.299 * p[0] as f64 + 0.587 * p[1] as f64 + 0.114 * p[2] as f64) / 255.0)
            .collect();
        let n = luma.len() as f64;
        let mean = luma.iter().sum::<f64>() / n;
        let var = luma.iter().map(|l| (l - mean).powi(2)).sum::<f64>() / n;
        Ok(10.0 * (var.sqrt() / FULL_CONTRAST).min(1.0))
    }
}
