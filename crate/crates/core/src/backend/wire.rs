//! JSON wire protocol for remote generation backends.
//!
//! The request carries the prompt, seed, latent shape, temporal indices and
//! the mask as its shape plus per-slice bit profile (the mask is constant
//! within a temporal slice). Frames travel as content-addressed payloads:
//! a SHA-256 digest and optional inline base64 PNG. A response frame may omit
//! its bytes only when it refers to a frame the request carried, e.g. an
//! echoed first frame.

use std::collections::HashMap;

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine as _;
use serde::{Deserialize, Serialize};

use super::BackendError;
use crate::conditioning::{ConditioningPlan, LatentShape};
use crate::frame::{Frame, FrameDigest};

pub const PROTOCOL_VERSION: u32 = 1;
pub const MAX_RESPONSE_BYTES: u64 = 512 << 20;
/// Upper bound on frames in one response.
pub const MAX_FRAMES: usize = 4096;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FramePayload {
    pub digest: FrameDigest,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub png_base64: Option<String>,
}

impl FramePayload {
    pub fn inline(frame: &Frame) -> Result<Self, BackendError> {
        let png = frame
            .encode_png()
            .map_err(|e| BackendError::Protocol(e.to_string()))?;
        Ok(Self {
            digest: frame.digest(),
            png_base64: Some(BASE64.encode(png)),
        })
    }

    pub fn reference(frame: &Frame) -> Self {
        Self {
            digest: frame.digest(),
            png_base64: None,
        }
    }

    /// Decodes inline bytes (verifying the digest) or resolves the digest
    /// against `known` frames.
    pub fn resolve(&self, known: &HashMap<FrameDigest, Frame>) -> Result<Frame, BackendError> {
        match &self.png_base64 {
            Some(b64) => {
                let png = BASE64
                    .decode(b64)
                    .map_err(|e| BackendError::Protocol(format!("bad base64 frame: {e}")))?;
                let frame =
                    Frame::decode_png(&png).map_err(|e| BackendError::Protocol(e.to_string()))?;
                if frame.digest() != self.digest {
                    return Err(BackendError::Protocol(format!(
                        "frame digest mismatch: declared {}, content {}",
                        self.digest.short(),
                        frame.digest().short()
                    )));
                }
                Ok(frame)
            }
            None => known.get(&self.digest).cloned().ok_or_else(|| {
                BackendError::Protocol(format!(
                    "unresolved frame reference {}",
                    self.digest.short()
                ))
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendRequest {
    pub protocol_version: u32,
    pub prompt: String,
    pub seed: u64,
    pub latent_shape: LatentShape,
    pub temporal_indices: Vec<i64>,
    /// `[s, f_m + f, h, w]`.
    pub mask_shape: [usize; 4],
    /// One bit per temporal slice.
    pub mask_profile: Vec<u8>,
    pub memory_frames: Vec<FramePayload>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub first_frame: Option<FramePayload>,
}

impl BackendRequest {
    pub fn from_plan(
        plan: &ConditioningPlan,
        prompt: &str,
        seed: u64,
        inline_frames: bool,
    ) -> Result<Self, BackendError> {
        let payload = |f: &Frame| {
            if inline_frames {
                FramePayload::inline(f)
            } else {
                Ok(FramePayload::reference(f))
            }
        };
        Ok(Self {
            protocol_version: PROTOCOL_VERSION,
            prompt: prompt.to_string(),
            seed,
            latent_shape: plan.shape,
            temporal_indices: plan.temporal_indices.clone(),
            mask_shape: plan.mask.shape(),
            mask_profile: plan.mask.temporal_profile(),
            memory_frames: plan
                .memory
                .iter()
                .map(|m| payload(&m.frame))
                .collect::<Result<_, _>>()?,
            first_frame: plan.first_frame.as_ref().map(payload).transpose()?,
        })
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, BackendError> {
        let req: Self =
            serde_json::from_slice(bytes).map_err(|e| BackendError::Protocol(e.to_string()))?;
        req.validate()?;
        Ok(req)
    }

    /// Structural consistency of the request.
    pub fn validate(&self) -> Result<(), BackendError> {
        let bad = |m: String| Err(BackendError::Protocol(m));
        if self.protocol_version != PROTOCOL_VERSION {
            return bad(format!(
                "unsupported protocol_version {}",
                self.protocol_version
            ));
        }
        self.latent_shape
            .validate()
            .map_err(|e| BackendError::Protocol(e.to_string()))?;
        let f_m = self.memory_frames.len();
        let slices = f_m + self.latent_shape.f;
        let s = &self.latent_shape;
        if self.mask_shape != [s.s, slices, s.h, s.w] {
            return bad(format!(
                "mask_shape {:?} inconsistent with latent shape",
                self.mask_shape
            ));
        }
        if self.temporal_indices.len() != slices || self.mask_profile.len() != slices {
            return bad("temporal_indices / mask_profile length mismatch".into());
        }
        let expected_profile = (0..slices).map(|t| u8::from(t < f_m));
        if !self.mask_profile.iter().copied().eq(expected_profile) {
            return bad("mask_profile must be ones over memory slices, zeros elsewhere".into());
        }
        if !self.temporal_indices.windows(2).all(|w| w[0] < w[1]) {
            return bad("temporal_indices must be strictly increasing".into());
        }
        Ok(())
    }

    /// Frames carried by the request, keyed by digest.
    pub fn known_frames(&self) -> Result<HashMap<FrameDigest, Frame>, BackendError> {
        let none = HashMap::new();
        let mut out = HashMap::new();
        for p in self.memory_frames.iter().chain(self.first_frame.as_ref()) {
            if p.png_base64.is_some() {
                let f = p.resolve(&none)?;
                out.insert(f.digest(), f);
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendResponse {
    pub protocol_version: u32,
    pub frames: Vec<FramePayload>,
    #[serde(default)]
    pub backend_info: serde_json::Value,
}

impl BackendResponse {
    pub fn from_frames(
        frames: &[Frame],
        backend_info: serde_json::Value,
    ) -> Result<Self, BackendError> {
        Ok(Self {
            protocol_version: PROTOCOL_VERSION,
            frames: frames
                .iter()
                .map(FramePayload::inline)
                .collect::<Result<_, _>>()?,
            backend_info,
        })
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, BackendError> {
        let resp: Self =
            serde_json::from_slice(bytes).map_err(|e| BackendError::Protocol(e.to_string()))?;
        if resp.protocol_version != PROTOCOL_VERSION {
            return Err(BackendError::Protocol(format!(
                "unsupported protocol_version {}",
                resp.protocol_version
            )));
        }
        if resp.frames.is_empty() || resp.frames.len() > MAX_FRAMES {
            return Err(BackendError::Protocol(format!(
                "response carries {} frames",
                resp.frames.len()
            )));
        }
        Ok(resp)
    }

    pub fn resolve_frames(
        &self,
        known: &HashMap<FrameDigest, Frame>,
    ) -> Result<Vec<Frame>, BackendError> {
        self.frames.iter().map(|p| p.resolve(known)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conditioning::assemble_plan;
    use crate::script::ShotSpec;

    fn plan() -> ConditioningPlan {
        let shot = ShotSpec {
            global_index: 0,
            prompt: "p".into(),
            is_cut: true,
            scene_num: 1,
        };
        let shape = LatentShape {
            c: 4,
            f: 2,
            h: 4,
            w: 4,
            s: 2,
        };
        assemble_plan(vec![], &shot, None, &shape, 5).unwrap()
    }

    #[test]
    fn request_round_trip_and_validation() {
        let req = BackendRequest::from_plan(&plan(), "hello", 7, true).unwrap();
        let bytes = serde_json::to_vec(&req).unwrap();
        assert_eq!(BackendRequest::decode(&bytes).unwrap(), req);

        let mut bad = req.clone();
        bad.mask_profile[0] = 1;
        assert!(bad.validate().is_err());
        let mut bad = req;
        bad.temporal_indices.pop();
        assert!(bad.validate().is_err());
    }

    #[test]
    fn response_frames_resolve() {
        let a = Frame::solid(2, 2, [1, 2, 3]).unwrap();
        let b = Frame::solid(2, 2, [4, 5, 6]).unwrap();
        let mut resp =
            BackendResponse::from_frames(&[a.clone(), b.clone()], serde_json::json!({})).unwrap();
        let decoded = BackendResponse::decode(&serde_json::to_vec(&resp).unwrap()).unwrap();
        assert_eq!(
            decoded.resolve_frames(&HashMap::new()).unwrap(),
            vec![a.clone(), b.clone()]
        );

        resp.frames[0] = FramePayload::reference(&a);
        assert!(resp.resolve_frames(&HashMap::new()).is_err());
        let known = HashMap::from([(a.digest(), a.clone())]);
        assert_eq!(resp.resolve_frames(&known).unwrap()[0], a);

        resp.frames[1].digest = a.digest();
        assert!(matches!(
            resp.resolve_frames(&known),
            Err(BackendError::Protocol(m)) if m.contains("digest mismatch")
        ));
    }

    #[test]
    fn empty_response_rejected() {
        let raw = br#"{"protocol_version":1,"frames":[]}"#;
        assert!(BackendResponse::decode(raw).is_err());
    }
}
