//! Autoregressive shot-by-shot story generation.
//!
//! Each shot is generated from its prompt and the memory bank as it stood
//! after the previous shot. After generation the shot's frames are embedded,
//! keyframes are extracted and the bank is updated. Shots run strictly in
//! order; a failure stops the run and hands back everything completed so far
//! so it can be persisted and resumed.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::backend::{BackendError, GenerationBackend};
use crate::bank::{BankConfig, BankError, MemoryBank, NewMemory};
use crate::conditioning::{
    assemble_plan, ConditioningError, ConditioningPlan, LatentShape, DEFAULT_ROPE_OFFSET,
};
use crate::embedding::FrameEmbedding;
use crate::frame::{Frame, FrameDigest};
use crate::provider::{ProviderError, Providers};
use crate::script::{ShotSpec, StoryScript};
use crate::selection::{
    extract_from_embeddings, KeyframeCandidate, SelectionConfig, SelectionError,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PipelineError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Conditioning(#[from] ConditioningError),
    #[error("backend failed on shot {shot}: {source}")]
    Backend { shot: usize, source: BackendError },
    #[error("provider failed{}: {source}", shot.map(|s| format!(" on shot {s}")).unwrap_or_default())]
    Provider {
        shot: Option<usize>,
        source: ProviderError,
    },
    #[error("keyframe extraction failed on shot {shot}: {source}")]
    Selection { shot: usize, source: SelectionError },
    #[error(transparent)]
    Bank(#[from] BankError),
    #[error("run fingerprint {found} does not match current configuration {expected}")]
    FingerprintMismatch { expected: String, found: String },
    #[error("persisting progress failed: {0}")]
    Persist(String),
}

/// A pipeline error together with whatever was completed before it.
#[derive(Debug, Clone)]
pub struct PipelineFailure {
    pub error: PipelineError,
    pub partial: Option<Box<StoryResult>>,
}

impl PipelineFailure {
    fn setup(error: impl Into<PipelineError>) -> Self {
        Self {
            error: error.into(),
            partial: None,
        }
    }
}

impl std::fmt::Display for PipelineFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        self.error.fmt(f)
    }
}

impl std::error::Error for PipelineFailure {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.error)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Shot `i` is generated with seed `seed + i`.
    pub seed: u64,
    pub shape: LatentShape,
    pub rope_offset: u32,
    pub selection: SelectionConfig,
    pub bank: BankConfig,
    /// When false every plan is built with an empty memory (ablation).
    pub use_memory: bool,
    /// Per-shot override of latent frames `f`.
    pub shot_frames: BTreeMap<usize, usize>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            shape: LatentShape::default(),
            rope_offset: DEFAULT_ROPE_OFFSET,
            selection: SelectionConfig::default(),
            bank: BankConfig::default(),
            use_memory: true,
            shot_frames: BTreeMap::new(),
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), PipelineError> {
        let cfg = |e: String| PipelineError::Config(e);
        self.shape.validate().map_err(|e| cfg(e.to_string()))?;
        if self.rope_offset < 1 {
            return Err(cfg("rope_offset must be at least 1".into()));
        }
        self.selection.validate().map_err(|e| cfg(e.to_string()))?;
        self.bank.validate().map_err(|e| cfg(e.to_string()))?;
        if self.shot_frames.values().any(|&f| f == 0) {
            return Err(cfg("shot_frames overrides must be positive".into()));
        }
        Ok(())
    }

    pub fn shape_for(&self, shot: usize) -> LatentShape {
        let mut shape = self.shape;
        if let Some(&f) = self.shot_frames.get(&shot) {
            shape.f = f;
        }
        shape
    }
}

/// What the backend was asked for a shot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanRecord {
    pub f_m: usize,
    pub temporal_indices: Vec<i64>,
    pub mask_shape: [usize; 4],
    pub memory: Vec<FrameDigest>,
    pub first_frame: Option<FrameDigest>,
}

impl PlanRecord {
    pub fn from_plan(plan: &ConditioningPlan) -> Self {
        Self {
            f_m: plan.f_m(),
            temporal_indices: plan.temporal_indices.clone(),
            mask_shape: plan.mask.shape(),
            memory: plan.memory.iter().map(|m| m.frame.digest()).collect(),
            first_frame: plan.first_frame.as_ref().map(Frame::digest),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShotResult {
    pub shot_index: usize,
    pub frames: Vec<Frame>,
    pub frame_embeddings: Vec<FrameEmbedding>,
    /// Shot-level embedding from the video embedder.
    pub video_embedding: FrameEmbedding,
    /// Semantic selection before aesthetic filtering.
    pub semantic_keyframes: Vec<usize>,
    pub keyframe_scores: Vec<f64>,
    /// Keyframes offered to the bank.
    pub keyframes_selected: Vec<usize>,
    pub seed_used: u64,
    pub plan: PlanRecord,
}

impl ShotResult {
    #[cfg(test)]
    pub(crate) fn for_test(shot_index: usize, frames: Vec<Frame>) -> Self {
        let e = FrameEmbedding::new(vec![1.0]).unwrap();
        Self {
            shot_index,
            frame_embeddings: vec![e.clone(); frames.len()],
            frames,
            video_embedding: e,
            semantic_keyframes: vec![0],
            keyframe_scores: vec![0.0],
            keyframes_selected: vec![0],
            seed_used: 0,
            plan: PlanRecord {
                f_m: 0,
                temporal_indices: vec![0],
                mask_shape: [1, 1, 1, 1],
                memory: vec![],
                first_frame: None,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StoryResult {
    pub shots: Vec<ShotResult>,
    /// Memory before the first shot (empty, or the reference images).
    pub initial_bank: MemoryBank,
    pub final_bank: MemoryBank,
    /// Bank after each completed shot.
    pub bank_history: Vec<MemoryBank>,
    pub config_fingerprint: String,
    pub reference_digests: Vec<FrameDigest>,
    pub total_shots: usize,
}

impl StoryResult {
    pub fn is_complete(&self) -> bool {
        self.shots.len() == self.total_shots
    }
}

/// Optional human or model review of extracted keyframes. Returns one
/// accept flag per candidate.
pub trait KeyframeReview: Send + Sync {
    fn review(
        &self,
        shot: &ShotSpec,
        frames: &[Frame],
        candidates: &[KeyframeCandidate],
    ) -> Vec<bool>;
}

#[derive(Clone)]
pub struct Pipeline {
    backend: Arc<dyn GenerationBackend>,
    providers: Providers,
    config: PipelineConfig,
    review: Option<Arc<dyn KeyframeReview>>,
}

impl Pipeline {
    pub fn new(
        backend: Arc<dyn GenerationBackend>,
        providers: Providers,
        config: PipelineConfig,
    ) -> Result<Self, PipelineError> {
        config.validate()?;
        Ok(Self {
            backend,
            providers,
            config,
            review: None,
        })
    }

    pub fn with_review(mut self, review: Arc<dyn KeyframeReview>) -> Self {
        self.review = Some(review);
        self
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    pub fn providers(&self) -> &Providers {
        &self.providers
    }

    /// Hash of everything that determines the run's output.
    pub fn fingerprint(&self, script: &StoryScript, references: &[FrameDigest]) -> String {
        #[derive(Serialize)]
        struct Inputs<'a> {
            config: &'a PipelineConfig,
            script: &'a StoryScript,
            backend: String,
            providers: String,
            references: &'a [FrameDigest],
        }
        let inputs = Inputs {
            config: &self.config,
            script,
            backend: self.backend.id(),
            providers: self.providers.id(),
            references,
        };
        let bytes = serde_json::to_vec(&inputs).expect("fingerprint inputs serialize");
        hex::encode(Sha256::digest(&bytes))
    }

    /// Builds the initial state: empty memory, or memory seeded from
    /// `references`.
    pub fn start(
        &self,
        script: &StoryScript,
        references: &[Frame],
    ) -> Result<StoryResult, PipelineFailure> {
        script
            .validate()
            .map_err(|e| PipelineFailure::setup(PipelineError::Config(e.to_string())))?;
        let initial_bank = if references.is_empty() {
            MemoryBank::init_empty(self.config.bank.clone()).map_err(PipelineFailure::setup)?
        } else {
            let embeddings = self.providers.embed_frames(references).map_err(|source| {
                PipelineFailure::setup(PipelineError::Provider { shot: None, source })
            })?;
            MemoryBank::init_from_references(self.config.bank.clone(), references, &embeddings)
                .map_err(PipelineFailure::setup)?
        };
        let reference_digests: Vec<FrameDigest> = references.iter().map(Frame::digest).collect();
        Ok(StoryResult {
            shots: Vec::new(),
            final_bank: initial_bank.clone(),
            initial_bank,
            bank_history: Vec::new(),
            config_fingerprint: self.fingerprint(script, &reference_digests),
            reference_digests,
            total_shots: script.shot_count(),
        })
    }

    pub fn run_story(&self, script: &StoryScript) -> Result<StoryResult, PipelineFailure> {
        self.run_story_with_references(script, &[])
    }

    pub fn run_story_with_references(
        &self,
        script: &StoryScript,
        references: &[Frame],
    ) -> Result<StoryResult, PipelineFailure> {
        let state = self.start(script, references)?;
        self.advance(state, script, &mut |_| Ok(()))
    }

    /// Continues a partial run from its first missing shot.
    pub fn resume(
        &self,
        partial: StoryResult,
        script: &StoryScript,
    ) -> Result<StoryResult, PipelineFailure> {
        self.resume_with_observer(partial, script, &mut |_| Ok(()))
    }

    pub fn resume_with_observer(
        &self,
        partial: StoryResult,
        script: &StoryScript,
        observer: &mut dyn FnMut(&StoryResult) -> Result<(), String>,
    ) -> Result<StoryResult, PipelineFailure> {
        let expected = self.fingerprint(script, &partial.reference_digests);
        if partial.config_fingerprint != expected {
            return Err(PipelineFailure::setup(PipelineError::FingerprintMismatch {
                expected,
                found: partial.config_fingerprint,
            }));
        }
        self.advance(partial, script, observer)
    }

    /// Generates every remaining shot, calling `observer` after each one.
    pub fn advance(
        &self,
        mut state: StoryResult,
        script: &StoryScript,
        observer: &mut dyn FnMut(&StoryResult) -> Result<(), String>,
    ) -> Result<StoryResult, PipelineFailure> {
        let shots = script.flatten_shots();
        if state.total_shots != shots.len() || state.shots.len() > shots.len() {
            return Err(PipelineFailure::setup(PipelineError::Config(format!(
                "state covers {} of {} shots but the script has {}",
                state.shots.len(),
                state.total_shots,
                shots.len()
            ))));
        }
        for shot in &shots[state.shots.len()..] {
            match self.generate_shot(shot, &state) {
                Ok((result, bank)) => {
                    state.shots.push(result);
                    state.bank_history.push(bank.clone());
                    state.final_bank = bank;
                }
                Err(error) => {
                    return Err(PipelineFailure {
                        error,
                        partial: Some(Box::new(state)),
                    })
                }
            }
            if let Err(e) = observer(&state) {
                return Err(PipelineFailure {
                    error: PipelineError::Persist(e),
                    partial: Some(Box::new(state)),
                });
            }
        }
        Ok(state)
    }

    fn generate_shot(
        &self,
        shot: &ShotSpec,
        state: &StoryResult,
    ) -> Result<(ShotResult, MemoryBank), PipelineError> {
        let i = shot.global_index;
        let caps = self.backend.capabilities();
        let shape = self.config.shape_for(i);
        let snapshot = if self.config.use_memory && caps.supports_memory {
            state.final_bank.snapshot_for_conditioning()
        } else {
            Vec::new()
        };
        let mut plan = assemble_plan(
            snapshot,
            shot,
            state.shots.last(),
            &shape,
            self.config.rope_offset,
        )?;
        if plan.first_frame.is_some() && !caps.supports_first_frame {
            log::warn!("backend cannot continue from a first frame; shot {i} starts fresh");
            plan.first_frame = None;
        }
        let seed = self.config.seed.wrapping_add(i as u64);

        let frames = self
            .backend
            .generate(&plan, &shot.prompt, seed)
            .map_err(|source| PipelineError::Backend { shot: i, source })?;
        if frames.len() != shape.raw_frames() {
            return Err(PipelineError::Backend {
                shot: i,
                source: BackendError::Protocol(format!(
                    "expected {} frames, got {}",
                    shape.raw_frames(),
                    frames.len()
                )),
            });
        }

        let provider_err = |source| PipelineError::Provider {
            shot: Some(i),
            source,
        };
        let frame_embeddings = self.providers.embed_frames(&frames).map_err(provider_err)?;
        let video_embedding = self
            .providers
            .embedder
            .embed_video(&frames)
            .map_err(provider_err)?;
        let extracted = extract_from_embeddings(
            &frames,
            &frame_embeddings,
            &self.providers,
            &self.config.selection,
            Some(&shot.prompt),
        )
        .map_err(|source| match source {
            SelectionError::Provider(p) => provider_err(p),
            source => PipelineError::Selection { shot: i, source },
        })?;

        let mut candidates = extracted.candidates;
        if let Some(review) = &self.review {
            let verdict = review.review(shot, &frames, &candidates);
            if verdict.len() != candidates.len() {
                return Err(PipelineError::Config(format!(
                    "keyframe review returned {} verdicts for {} candidates",
                    verdict.len(),
                    candidates.len()
                )));
            }
            let mut keep = verdict.into_iter();
            candidates.retain(|_| keep.next().unwrap_or(false));
        }

        let offered: Vec<NewMemory> = candidates
            .iter()
            .map(|c| NewMemory::from_candidate(c, i, &frames))
            .collect();
        let bank = if offered.is_empty() {
            state.final_bank.clone()
        } else {
            state.final_bank.update(&offered)?
        };

        let result = ShotResult {
            shot_index: i,
            plan: PlanRecord::from_plan(&plan),
            keyframes_selected: candidates.iter().map(|c| c.frame_index).collect(),
            semantic_keyframes: extracted.semantic,
            keyframe_scores: extracted.scores,
            frames,
            frame_embeddings,
            video_embedding,
            seed_used: seed,
        };
        Ok((result, bank))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::MockBackend;
    use crate::script::parse_script;

    fn script(n: usize) -> StoryScript {
        let prompts: Vec<String> = (0..n).map(|i| format!("shot number {i}")).collect();
        let mut cut = vec![true; n];
        if n > 1 {
            cut[1] = false;
        }
        parse_script(
            &serde_json::json!({
                "story_name": "s", "story_overview": "o",
                "scenes": [{"scene_num": 1, "video_prompts": prompts, "cut": cut}]
            })
            .to_string(),
        )
        .unwrap()
    }

    fn small() -> PipelineConfig {
        PipelineConfig {
            shape: LatentShape {
                c: 4,
                f: 3,
                h: 16,
                w: 16,
                s: 2,
            },
            ..Default::default()
        }
    }

    fn pipeline(cfg: PipelineConfig) -> Pipeline {
        Pipeline::new(Arc::new(MockBackend::default()), Providers::mock(), cfg).unwrap()
    }

    #[test]
    fn single_shot_runs_without_memory() {
        let r = pipeline(small()).run_story(&script(1)).unwrap();
        assert_eq!(r.shots.len(), 1);
        assert_eq!(r.shots[0].plan.f_m, 0);
        assert_eq!(r.shots[0].plan.temporal_indices, vec![0, 1, 2]);
        assert_eq!(r.shots[0].frames.len(), 6);
        assert!(!r.final_bank.is_empty());
    }

    #[test]
    fn seeds_follow_shot_index() {
        let cfg = PipelineConfig {
            seed: 100,
            ..small()
        };
        let r = pipeline(cfg).run_story(&script(3)).unwrap();
        assert_eq!(
            r.shots.iter().map(|s| s.seed_used).collect::<Vec<_>>(),
            vec![100, 101, 102]
        );
    }

    #[test]
    fn per_shot_length_override() {
        let mut cfg = small();
        cfg.shot_frames.insert(1, 5);
        let r = pipeline(cfg).run_story(&script(3)).unwrap();
        assert_eq!(r.shots[1].frames.len(), 10);
        assert_eq!(r.shots[2].frames.len(), 6);
    }

    #[test]
    fn memory_off_gives_empty_plans() {
        let cfg = PipelineConfig {
            use_memory: false,
            ..small()
        };
        let r = pipeline(cfg).run_story(&script(3)).unwrap();
        assert!(r.shots.iter().all(|s| s.plan.f_m == 0));
    }

    #[test]
    fn invalid_config_rejected() {
        let cfg = PipelineConfig {
            rope_offset: 0,
            ..small()
        };
        assert!(Pipeline::new(Arc::new(MockBackend::default()), Providers::mock(), cfg).is_err());
    }

    struct RejectAll;
    impl KeyframeReview for RejectAll {
        fn review(&self, _: &ShotSpec, _: &[Frame], c: &[KeyframeCandidate]) -> Vec<bool> {
            vec![false; c.len()]
        }
    }

    #[test]
    fn review_hook_can_veto_keyframes() {
        let p = pipeline(small()).with_review(Arc::new(RejectAll));
        let r = p.run_story(&script(2)).unwrap();
        assert!(r.final_bank.is_empty());
        assert!(r.shots.iter().all(|s| s.keyframes_selected.is_empty()));
    }
}
