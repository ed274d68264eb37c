//! Keyframe extraction from a generated shot.
//!
//! Selection is a sequential scan: frame 0 is always kept, and each later
//! frame becomes a keyframe when its cosine similarity to the most recently
//! kept keyframe falls strictly below the active threshold. When a pass keeps
//! more than `per_shot_limit` frames the threshold is lowered by `theta_step`
//! and the scan re-runs. If the count still overflows at `theta_min`, the
//! last pass is truncated by greedy farthest-first selection seeded at frame
//! 0.
//!
//! Selected frames are then scored and filtered by an aesthetic threshold,
//! keeping the single best frame if none pass.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedding::FrameEmbedding;
use crate::frame::Frame;
use crate::provider::{ProviderError, Providers};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SelectionError {
    #[error("no frames or candidates to select from")]
    EmptyInput,
    #[error("embedding dimension mismatch: expected {expected}, found {found} at frame {index}")]
    DimensionMismatch {
        expected: usize,
        found: usize,
        index: usize,
    },
    #[error("invalid selection config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Provider(#[from] ProviderError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SelectionConfig {
    pub theta_init: f64,
    pub per_shot_limit: usize,
    pub theta_step: f64,
    pub theta_min: f64,
    pub aesthetic_threshold: f64,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        Self {
            theta_init: 0.9,
            per_shot_limit: 3,
            theta_step: 0.05,
            theta_min: 0.5,
            aesthetic_threshold: 3.0,
        }
    }
}

impl SelectionConfig {
    pub fn validate(&self) -> Result<(), SelectionError> {
        let bad = |msg: &str| Err(SelectionError::InvalidConfig(msg.to_string()));
        if !(self.theta_init > 0.0 && self.theta_init <= 1.0) {
            return bad("theta_init must be in (0, 1]");
        }
        if self.per_shot_limit == 0 {
            return bad("per_shot_limit must be positive");
        }
        if !(self.theta_step > 0.0 && self.theta_step.is_finite()) {
            return bad("theta_step must be positive");
        }
        if !(self.theta_min >= 0.0 && self.theta_min <= self.theta_init) {
            return bad("theta_min must be in [0, theta_init]");
        }
        if !self.aesthetic_threshold.is_finite() {
            return bad("aesthetic_threshold must be finite");
        }
        Ok(())
    }

    /// Thresholds tried in order: `theta_init - k * theta_step` clamped at
    /// `theta_min`, ending with `theta_min` itself.
    pub fn threshold_schedule(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for k in 0.. {
            let theta = (self.theta_init - k as f64 * self.theta_step).max(self.theta_min);
            out.push(theta);
            if theta <= self.theta_min {
                break;
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeyframeCandidate {
    pub frame_index: usize,
    pub embedding: FrameEmbedding,
    pub aesthetic_score: f64,
}

/// Everything extraction learned about one shot.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtractedMemory {
    /// Output of semantic selection, before aesthetic filtering.
    pub semantic: Vec<usize>,
    /// Aesthetic scores of the semantically selected frames.
    pub scores: Vec<f64>,
    /// Final keyframes.
    pub candidates: Vec<KeyframeCandidate>,
}

fn check_dims(embeddings: &[FrameEmbedding]) -> Result<(), SelectionError> {
    let first = embeddings.first().ok_or(SelectionError::EmptyInput)?;
    let expected = first.dim();
    for (index, e) in embeddings.iter().enumerate() {
        if e.dim() != expected {
            return Err(SelectionError::DimensionMismatch {
                expected,
                found: e.dim(),
                index,
            });
        }
    }
    Ok(())
}

/// One sequential scan at a fixed threshold.
pub fn single_pass(embeddings: &[FrameEmbedding], theta: f64) -> Vec<usize> {
    if embeddings.is_empty() {
        return Vec::new();
    }
    let mut selected = vec![0];
    let mut latest = 0;
    for (i, e) in embeddings.iter().enumerate().skip(1) {
        if e.cosine(&embeddings[latest]) < theta {
            selected.push(i);
            latest = i;
        }
    }
    selected
}

/// Greedy farthest-first subset of `pool` (which must start with 0) of size
/// at most `limit`, using cosine distance. Ties go to the earliest index.
pub fn farthest_first(embeddings: &[FrameEmbedding], pool: &[usize], limit: usize) -> Vec<usize> {
    let Some(&seed) = pool.first() else {
        return Vec::new();
    };
    let mut chosen = vec![seed];
    // Distance from each pool member to its nearest chosen frame.
    let mut nearest: Vec<f64> = pool
        .iter()
        .map(|&i| 1.0 - embeddings[i].cosine(&embeddings[seed]))
        .collect();
    let mut taken = vec![false; pool.len()];
    taken[0] = true;
    while chosen.len() < limit.min(pool.len()) {
        let mut best: Option<usize> = None;
        for k in 0..pool.len() {
            if taken[k] {
                continue;
            }
            if best.is_none_or(|b| nearest[k] > nearest[b]) {
                best = Some(k);
            }
        }
        let Some(b) = best else { break };
        taken[b] = true;
        let picked = pool[b];
        chosen.push(picked);
        for k in 0..pool.len() {
            let d = 1.0 - embeddings[pool[k]].cosine(&embeddings[picked]);
            if d < nearest[k] {
                nearest[k] = d;
            }
        }
    }
    chosen.sort_unstable();
    chosen
}

/// Selects semantically distinct keyframe indices, always including 0.
pub fn select_semantic_keyframes(
    embeddings: &[FrameEmbedding],
    config: &SelectionConfig,
) -> Result<Vec<usize>, SelectionError> {
    config.validate()?;
    check_dims(embeddings)?;
    let mut last = Vec::new();
    for theta in config.threshold_schedule() {
        last = single_pass(embeddings, theta);
        if last.len() <= config.per_shot_limit {
            return Ok(last);
        }
    }
    Ok(farthest_first(embeddings, &last, config.per_shot_limit))
}

/// Keeps candidates scoring at least the threshold, in order; if none do,
/// keeps the single best (earliest on ties).
pub fn aesthetic_filter(
    candidates: Vec<KeyframeCandidate>,
    config: &SelectionConfig,
) -> Result<Vec<KeyframeCandidate>, SelectionError> {
    if candidates.is_empty() {
        return Err(SelectionError::EmptyInput);
    }
    let best = candidates.iter().enumerate().fold(0, |best, (i, c)| {
        if c.aesthetic_score > candidates[best].aesthetic_score {
            i
        } else {
            best
        }
    });
    let kept: Vec<KeyframeCandidate> = candidates
        .iter()
        .filter(|c| c.aesthetic_score >= config.aesthetic_threshold)
        .cloned()
        .collect();
    if kept.is_empty() {
        Ok(vec![candidates[best].clone()])
    } else {
        Ok(kept)
    }
}

/// Selection, scoring and filtering over frames whose embeddings are already
/// known.
pub fn extract_from_embeddings(
    frames: &[Frame],
    embeddings: &[FrameEmbedding],
    providers: &Providers,
    config: &SelectionConfig,
    context: Option<&str>,
) -> Result<ExtractedMemory, SelectionError> {
    if frames.is_empty() {
        return Err(SelectionError::EmptyInput);
    }
    if frames.len() != embeddings.len() {
        return Err(SelectionError::InvalidConfig(format!(
            "{} frames but {} embeddings",
            frames.len(),
            embeddings.len()
        )));
    }
    let semantic = select_semantic_keyframes(embeddings, config)?;
    let to_score: Vec<&Frame> = semantic.iter().map(|&i| &frames[i]).collect();
    let scores = providers.score_frames(&to_score, context)?;
    let candidates = semantic
        .iter()
        .zip(&scores)
        .map(|(&i, &s)| KeyframeCandidate {
            frame_index: i,
            embedding: embeddings[i].clone(),
            aesthetic_score: s,
        })
        .collect();
    let candidates = aesthetic_filter(candidates, config)?;
    Ok(ExtractedMemory {
        semantic,
        scores,
        candidates,
    })
}

/// Embeds all frames, selects, scores the selection and filters it.
pub fn extract_shot_memory(
    frames: &[Frame],
    providers: &Providers,
    config: &SelectionConfig,
    context: Option<&str>,
) -> Result<Vec<KeyframeCandidate>, SelectionError> {
    if frames.is_empty() {
        return Err(SelectionError::EmptyInput);
    }
    let embeddings = providers.embed_frames(frames)?;
    Ok(extract_from_embeddings(frames, &embeddings, providers, config, context)?.candidates)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn embs(rows: &[&[f64]]) -> Vec<FrameEmbedding> {
        rows.iter()
            .map(|r| FrameEmbedding::new(r.to_vec()).unwrap())
            .collect()
    }

    fn basis(n: usize) -> Vec<FrameEmbedding> {
        (0..n)
            .map(|i| {
                let mut v = vec![0.0; n];
                v[i] = 1.0;
                FrameEmbedding::new(v).unwrap()
            })
            .collect()
    }

    fn cand(i: usize, score: f64) -> KeyframeCandidate {
        KeyframeCandidate {
            frame_index: i,
            embedding: FrameEmbedding::new(vec![1.0]).unwrap(),
            aesthetic_score: score,
        }
    }

    #[test]
    fn two_clusters() {
        let e = embs(&[&[1.0, 0.0], &[1.0, 0.0], &[0.0, 1.0], &[0.0, 1.0]]);
        assert_eq!(
            select_semantic_keyframes(&e, &SelectionConfig::default()).unwrap(),
            vec![0, 2]
        );
    }

    #[test]
    fn single_frame() {
        let e = embs(&[&[0.3, 0.4]]);
        assert_eq!(
            select_semantic_keyframes(&e, &SelectionConfig::default()).unwrap(),
            vec![0]
        );
    }

    #[test]
    fn orthogonal_frames_fall_back_to_farthest_first() {
        let cfg = SelectionConfig::default();
        assert_eq!(
            select_semantic_keyframes(&basis(5), &cfg).unwrap(),
            vec![0, 1, 2]
        );
    }

    #[test]
    fn threshold_adaptation_resolves_overflow() {
        // Pairwise similarity 0.8 between consecutive frames: 0.9 keeps all
        // four, 0.8 keeps only frame 0.
        let a = [1.0, 0.0];
        let rot = |k: f64| {
            let angle = k * 0.8f64.acos();
            vec![angle.cos(), angle.sin()]
        };
        let e: Vec<FrameEmbedding> = (0..4)
            .map(|k| FrameEmbedding::new(rot(k as f64)).unwrap())
            .collect();
        assert_eq!(e[0].as_slice(), &a);
        let cfg = SelectionConfig::default();
        assert_eq!(single_pass(&e, 0.9).len(), 4);
        let sel = select_semantic_keyframes(&e, &cfg).unwrap();
        assert!(sel.len() <= 3);
        assert_eq!(sel[0], 0);
    }

    #[test]
    fn schedule_ends_at_theta_min() {
        let s = SelectionConfig::default().threshold_schedule();
        assert_eq!(s.len(), 9);
        assert_eq!(s[0], 0.9);
        assert_eq!(*s.last().unwrap(), 0.5);
        let flat = SelectionConfig {
            theta_init: 0.5,
            ..Default::default()
        };
        assert_eq!(flat.threshold_schedule(), vec![0.5]);
    }

    #[test]
    fn lowering_threshold_can_increase_single_pass_count() {
        // Frames on the unit circle at 0, 36.87, 61.87 and 11.87 degrees.
        // With theta 0.9 frame 1 becomes the reference and absorbs 2 and 3.
        // With theta 0.7 frame 1 is skipped, so 2 is compared against 0 and
        // 3 against 2.
        let e: Vec<FrameEmbedding> = [0.0f64, 36.87, 61.87, 11.87]
            .iter()
            .map(|deg| {
                let r = deg.to_radians();
                FrameEmbedding::new(vec![r.cos(), r.sin()]).unwrap()
            })
            .collect();
        assert_eq!(single_pass(&e, 0.9), vec![0, 1]);
        assert_eq!(single_pass(&e, 0.7), vec![0, 2, 3]);
    }

    #[test]
    fn errors() {
        let cfg = SelectionConfig::default();
        assert_eq!(
            select_semantic_keyframes(&[], &cfg),
            Err(SelectionError::EmptyInput)
        );
        let e = embs(&[&[1.0, 0.0], &[1.0, 0.0, 0.0]]);
        assert!(matches!(
            select_semantic_keyframes(&e, &cfg),
            Err(SelectionError::DimensionMismatch { index: 1, .. })
        ));
        let bad = SelectionConfig {
            theta_min: 0.95,
            ..Default::default()
        };
        assert!(matches!(
            select_semantic_keyframes(&basis(2), &bad),
            Err(SelectionError::InvalidConfig(_))
        ));
    }

    #[test]
    fn aesthetic_threshold() {
        let cfg = SelectionConfig::default();
        let out = aesthetic_filter(vec![cand(0, 3.5), cand(1, 2.1), cand(2, 4.0)], &cfg).unwrap();
        assert_eq!(
            out.iter().map(|c| c.frame_index).collect::<Vec<_>>(),
            vec![0, 2]
        );

        let out = aesthetic_filter(vec![cand(0, 1.0), cand(1, 2.9)], &cfg).unwrap();
        assert_eq!(
            out.iter().map(|c| c.frame_index).collect::<Vec<_>>(),
            vec![1]
        );

        let out = aesthetic_filter(vec![cand(0, 3.0), cand(1, 3.0)], &cfg).unwrap();
        assert_eq!(out.len(), 2);

        let out = aesthetic_filter(vec![cand(0, 1.0), cand(1, 2.0), cand(2, 2.0)], &cfg).unwrap();
        assert_eq!(out[0].frame_index, 1);

        assert_eq!(
            aesthetic_filter(vec![], &cfg),
            Err(SelectionError::EmptyInput)
        );
    }

    #[test]
    fn extract_identical_frames_yields_frame_zero() {
        let frames = vec![Frame::solid(8, 8, [200, 30, 30]).unwrap(); 6];
        let out = extract_shot_memory(
            &frames,
            &Providers::mock(),
            &SelectionConfig::default(),
            None,
        )
        .unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].frame_index, 0);
        assert!(matches!(
            extract_shot_memory(&[], &Providers::mock(), &SelectionConfig::default(), None),
            Err(SelectionError::EmptyInput)
        ));
    }

    fn arb_embeddings() -> impl Strategy<Value = Vec<FrameEmbedding>> {
        (1usize..5).prop_flat_map(|d| {
            proptest::collection::vec(proptest::collection::vec(-1.0f64..1.0, d), 1..40).prop_map(
                |rows| {
                    rows.into_iter()
                        .map(|mut r| {
                            r[0] += 1e-3;
                            FrameEmbedding::new(r).unwrap()
                        })
                        .collect()
                },
            )
        })
    }

    proptest! {
        #[test]
        fn selection_contract(e in arb_embeddings(), limit in 1usize..6) {
            let cfg = SelectionConfig { per_shot_limit: limit, ..Default::default() };
            let sel = select_semantic_keyframes(&e, &cfg).unwrap();
            prop_assert_eq!(sel[0], 0);
            prop_assert!(sel.len() <= limit);
            prop_assert!(sel.windows(2).all(|w| w[0] < w[1]));
            prop_assert!(sel.iter().all(|&i| i < e.len()));
        }

        #[test]
        fn filter_output_is_nonempty_subsequence(scores in proptest::collection::vec(0.0f64..6.0, 1..10)) {
            let input: Vec<_> = scores.iter().enumerate().map(|(i, &s)| cand(i, s)).collect();
            let out = aesthetic_filter(input, &SelectionConfig::default()).unwrap();
            prop_assert!(!out.is_empty());
            prop_assert!(out.windows(2).all(|w| w[0].frame_index < w[1].frame_index));
        }
    }
}
