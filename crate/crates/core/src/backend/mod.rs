//! Video generation backends.

pub mod mock;
pub mod remote;
pub mod wire;

use thiserror::Error;

use crate::conditioning::ConditioningPlan;
use crate::frame::Frame;

pub use mock::MockBackend;
pub use remote::RemoteBackend;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BackendError {
    #[error("backend transport error: {0}")]
    Transport(String),
    #[error("backend rejected the request: {0}")]
    Rejected(String),
    #[error("backend generation failed: {0}")]
    Failed(String),
    #[error("invalid backend message: {0}")]
    Protocol(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Capabilities {
    pub supports_memory: bool,
    pub supports_first_frame: bool,
}

/// A memory-conditioned image-to-video generator.
///
/// Implementations must be deterministic for a fixed `(plan, prompt, seed)`
/// when they can be; the mock backend always is.
pub trait GenerationBackend: Send + Sync {
    /// Identifier recorded in the run fingerprint.
    fn id(&self) -> String;

    fn capabilities(&self) -> Capabilities;

    /// Returns the decoded frames of the new shot only (memory slices are
    /// discarded by the backend).
    fn generate(
        &self,
        plan: &ConditioningPlan,
        prompt: &str,
        seed: u64,
    ) -> Result<Vec<Frame>, BackendError>;
}
