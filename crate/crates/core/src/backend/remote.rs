//! HTTP client for a remote generation service (`POST /generate`).

use std::time::Duration;

use super::wire::{BackendRequest, BackendResponse, MAX_RESPONSE_BYTES};
use super::{BackendError, Capabilities, GenerationBackend};
use crate::conditioning::ConditioningPlan;
use crate::frame::Frame;
use crate::transport::HttpTransport;

pub struct RemoteBackend {
    transport: HttpTransport,
}

impl RemoteBackend {
    pub fn new(base_url: &str) -> Self {
        Self::with_timeout(base_url, Duration::from_secs(1800))
    }

    pub fn with_timeout(base_url: &str, timeout: Duration) -> Self {
        Self {
            transport: HttpTransport::new(base_url, timeout, MAX_RESPONSE_BYTES),
        }
    }
}

impl GenerationBackend for RemoteBackend {
    fn id(&self) -> String {
        format!("remote:{}", self.transport.base_url())
    }

    fn capabilities(&self) -> Capabilities {
        Capabilities {
            supports_memory: true,
            supports_first_frame: true,
        }
    }

    fn generate(
        &self,
        plan: &ConditioningPlan,
        prompt: &str,
        seed: u64,
    ) -> Result<Vec<Frame>, BackendError> {
        let request = BackendRequest::from_plan(plan, prompt, seed, true)?;
        let body = serde_json::to_vec(&request).expect("request serialization is infallible");
        let reply = self
            .transport
            .post("/generate", "application/json", &body)
            .map_err(BackendError::Transport)?;
        match reply.status {
            200..=299 => {}
            400..=499 => {
                return Err(BackendError::Rejected(format!(
                    "{}: {}",
                    reply.status,
                    String::from_utf8_lossy(&reply.body)
                )))
            }
            s => {
                return Err(BackendError::Failed(format!(
                    "{s}: {}",
                    String::from_utf8_lossy(&reply.body)
                )))
            }
        }
        let response = BackendResponse::decode(&reply.body)?;
        let mut known = std::collections::HashMap::new();
        for m in &plan.memory {
            known.insert(m.frame.digest(), m.frame.clone());
        }
        if let Some(f) = &plan.first_frame {
            known.insert(f.digest(), f.clone());
        }
        response.resolve_frames(&known)
    }
}
