//! JSON wire protocol between the engine and an embedding sidecar.
//!
//! Endpoints: `/embed_image`, `/embed_video`, `/embed_text`,
//! `/score_aesthetic` (POST) and `/health` (GET). Every body carries
//! `protocol_version`. `embed_video` is sent as `multipart/form-data` with a
//! `request` JSON part followed by one `image/png` part per frame, in order.

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine as _;
use serde::{Deserialize, Serialize};

use super::ProviderError;
use crate::embedding::FrameEmbedding;
use crate::frame::Frame;

pub const PROTOCOL_VERSION: u32 = 1;

/// Largest response body accepted from a provider.
pub const MAX_RESPONSE_BYTES: u64 = 16 << 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RequestKind {
    EmbedImage,
    EmbedVideo,
    EmbedText,
    ScoreAesthetic,
}

impl RequestKind {
    pub fn endpoint(self) -> &'static str {
        match self {
            RequestKind::EmbedImage => "/embed_image",
            RequestKind::EmbedVideo => "/embed_video",
            RequestKind::EmbedText => "/embed_text",
            RequestKind::ScoreAesthetic => "/score_aesthetic",
        }
    }

    pub fn is_embedding(self) -> bool {
        !matches!(self, RequestKind::ScoreAesthetic)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Payload {
    /// Base64 PNG of a single image.
    Image {
        image: String,
    },
    /// Number of PNG parts that follow in the multipart body.
    Frames {
        frame_count: usize,
    },
    Text {
        text: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProviderRequest {
    pub protocol_version: u32,
    pub kind: RequestKind,
    pub payload: Payload,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub context: Option<String>,
}

impl ProviderRequest {
    pub fn embed_image(frame: &Frame) -> Result<Self, ProviderError> {
        Ok(Self {
            protocol_version: PROTOCOL_VERSION,
            kind: RequestKind::EmbedImage,
            payload: Payload::Image {
                image: encode_frame(frame)?,
            },
            context: None,
        })
    }

    pub fn score_aesthetic(frame: &Frame, context: Option<&str>) -> Result<Self, ProviderError> {
        Ok(Self {
            protocol_version: PROTOCOL_VERSION,
            kind: RequestKind::ScoreAesthetic,
            payload: Payload::Image {
                image: encode_frame(frame)?,
            },
            context: context.map(str::to_string),
        })
    }

    pub fn embed_text(text: &str) -> Self {
        Self {
            protocol_version: PROTOCOL_VERSION,
            kind: RequestKind::EmbedText,
            payload: Payload::Text {
                text: text.to_string(),
            },
            context: None,
        }
    }

    pub fn embed_video(frame_count: usize) -> Self {
        Self {
            protocol_version: PROTOCOL_VERSION,
            kind: RequestKind::EmbedVideo,
            payload: Payload::Frames { frame_count },
            context: None,
        }
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, ProviderError> {
        let req: Self = serde_json::from_slice(bytes)
            .map_err(|e| ProviderError::MalformedRequest(e.to_string()))?;
        req.validate()?;
        Ok(req)
    }

    /// Checks version and that the payload shape matches the request kind.
    pub fn validate(&self) -> Result<(), ProviderError> {
        if self.protocol_version != PROTOCOL_VERSION {
            return Err(ProviderError::MalformedRequest(format!(
                "unsupported protocol_version {}",
                self.protocol_version
            )));
        }
        match (self.kind, &self.payload) {
            (RequestKind::EmbedImage | RequestKind::ScoreAesthetic, Payload::Image { .. }) => {
                Ok(())
            }
            (RequestKind::EmbedVideo, Payload::Frames { frame_count }) if *frame_count > 0 => {
                Ok(())
            }
            (RequestKind::EmbedText, Payload::Text { text }) if !text.is_empty() => Ok(()),
            (kind, _) => Err(ProviderError::MalformedRequest(format!(
                "payload does not match request kind {kind:?}"
            ))),
        }
    }

    /// Decodes the inline image of an image-carrying request.
    pub fn image(&self) -> Result<Frame, ProviderError> {
        match &self.payload {
            Payload::Image { image } => decode_frame(image),
            _ => Err(ProviderError::MalformedRequest(
                "request carries no image".into(),
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProviderResponse {
    pub protocol_version: u32,
    pub model_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vector: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
}

impl ProviderResponse {
    pub fn embedding(model_id: String, e: &FrameEmbedding) -> Self {
        Self {
            protocol_version: PROTOCOL_VERSION,
            model_id,
            dim: Some(e.dim()),
            vector: Some(e.as_slice().to_vec()),
            score: None,
        }
    }

    pub fn score(model_id: String, score: f64) -> Self {
        Self {
            protocol_version: PROTOCOL_VERSION,
            model_id,
            dim: None,
            vector: None,
            score: Some(score),
        }
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, ProviderError> {
        let resp: Self =
            serde_json::from_slice(bytes).map_err(|e| ProviderError::Protocol(e.to_string()))?;
        if resp.protocol_version != PROTOCOL_VERSION {
            return Err(ProviderError::Protocol(format!(
                "unsupported protocol_version {}",
                resp.protocol_version
            )));
        }
        Ok(resp)
    }

    /// Validates an embedding response: declared dim matches, vector is
    /// unit-norm.
    pub fn into_embedding(self) -> Result<FrameEmbedding, ProviderError> {
        let vector = self
            .vector
            .ok_or_else(|| ProviderError::Protocol("response has no vector".into()))?;
        match self.dim {
            Some(d) if d == vector.len() => {}
            Some(d) => {
                return Err(ProviderError::Protocol(format!(
                    "declared dim {d} but vector has {} entries",
                    vector.len()
                )))
            }
            None => return Err(ProviderError::Protocol("response has no dim".into())),
        }
        Ok(FrameEmbedding::from_unit(vector)?)
    }

    pub fn into_score(self) -> Result<f64, ProviderError> {
        match self.score {
            Some(s) if s.is_finite() => Ok(s),
            Some(s) => Err(ProviderError::Protocol(format!("non-finite score {s}"))),
            None => Err(ProviderError::Protocol("response has no score".into())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelInfo {
    pub kind: RequestKind,
    pub model_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HealthResponse {
    pub protocol_version: u32,
    pub models: Vec<ModelInfo>,
}

impl HealthResponse {
    pub fn decode(bytes: &[u8]) -> Result<Self, ProviderError> {
        serde_json::from_slice(bytes).map_err(|e| ProviderError::Protocol(e.to_string()))
    }

    pub fn model(&self, kind: RequestKind) -> Option<&ModelInfo> {
        self.models.iter().find(|m| m.kind == kind)
    }
}

/// Error body returned with 4xx/5xx statuses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub protocol_version: u32,
    pub error: String,
}

pub fn encode_frame(frame: &Frame) -> Result<String, ProviderError> {
    let png = frame
        .encode_png()
        .map_err(|e| ProviderError::MalformedRequest(e.to_string()))?;
    Ok(BASE64.encode(png))
}

pub fn decode_frame(b64: &str) -> Result<Frame, ProviderError> {
    let png = BASE64
        .decode(b64)
        .map_err(|e| ProviderError::MalformedRequest(format!("bad base64 image: {e}")))?;
    Frame::decode_png(&png).map_err(|e| ProviderError::MalformedRequest(e.to_string()))
}
