//! Memory-conditioned multi-shot story video generation.
//!
//! The crate holds the control plane around a pluggable video generator:
//!
//! * [`script`] parses story scripts into an ordered shot plan.
//! * [`selection`] picks semantically distinct, aesthetically reliable
//!   keyframes out of each generated shot.
//! * [`bank`] keeps the bounded visual memory (sink + sliding window).
//! * [`conditioning`] lays out memory latents, the generation mask and the
//!   shifted temporal rotary positions for the next shot.
//! * [`pipeline`] drives generation shot by shot.
//! * [`eval`] computes the story-level metric suite.
//!
//! Generation and embedding models sit behind the [`backend`] and
//! [`provider`] traits. Deterministic mock implementations of both ship with
//! the crate so everything can run on a laptop.

pub mod backend;
pub mod bank;
pub mod conditioning;
pub mod config;
pub mod embedding;
pub mod eval;
pub mod flow;
pub mod frame;
pub mod manifest;
pub mod pipeline;
pub mod provider;
pub mod script;
pub mod selection;
pub mod synth;
pub mod transport;

pub use bank::{BankConfig, MemoryBank, MemoryFrame, NewMemory};
pub use conditioning::{ConditioningPlan, LatentShape};
pub use embedding::FrameEmbedding;
pub use frame::{Frame, FrameDigest};
pub use pipeline::{Pipeline, PipelineConfig, ShotResult, StoryResult};
pub use script::{ShotSpec, StoryScript};
pub use selection::{KeyframeCandidate, SelectionConfig};
