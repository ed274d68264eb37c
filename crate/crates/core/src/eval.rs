//! Story-level metrics: aesthetic quality, prompt following and cross-shot
//! consistency.
//!
//! The metric functions accept raw vectors and normalize internally, so any
//! positive rescaling of provider output leaves them unchanged up to rounding.

use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedding::{cosine, FrameEmbedding};
use crate::frame::Frame;
use crate::pipeline::StoryResult;
use crate::provider::{ProviderError, Providers};
use crate::script::{flatten_shots, StoryScript};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("need at least 2 shots, got {0}")]
    TooFewShots(usize),
    #[error("length mismatch: {what} has {found} entries, expected {expected}")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("empty input: {0}")]
    EmptyInput(&'static str),
    #[error("provider failure during evaluation: {0}")]
    Provider(#[from] ProviderError),
}

fn check_len(what: &'static str, expected: usize, found: usize) -> Result<(), EvalError> {
    if expected != found {
        return Err(EvalError::LengthMismatch {
            what,
            expected,
            found,
        });
    }
    Ok(())
}

/// Unordered pairs `(i, j)`, `i < j`, in lexicographic order.
pub fn pairs(n: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..n).flat_map(move |i| (i + 1..n).map(move |j| (i, j)))
}

/// Mean cosine similarity over all unordered pairs.
pub fn consistency_overall<V: AsRef<[f64]>>(video: &[V]) -> Result<f64, EvalError> {
    let n = video.len();
    if n < 2 {
        return Err(EvalError::TooFewShots(n));
    }
    let mut sum = 0.0;
    let mut count = 0usize;
    for (i, j) in pairs(n) {
        sum += cosine(video[i].as_ref(), video[j].as_ref());
        count += 1;
    }
    Ok(sum / count as f64)
}

/// Pair indices ranked by prompt similarity, most similar first. Ties keep
/// lexicographic pair order.
pub fn rank_pairs<P: AsRef<[f64]>>(prompts: &[P]) -> Vec<((usize, usize), f64)> {
    let mut ranked: Vec<_> = pairs(prompts.len())
        .map(|(i, j)| ((i, j), cosine(prompts[i].as_ref(), prompts[j].as_ref())))
        .collect();
    // Stable sort, so equal similarities stay in lexicographic order.
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1));
    ranked
}

/// Mean video similarity of the `k` pairs whose prompts are most similar.
///
/// The selected pairs are summed in lexicographic order, which makes the
/// result bit-identical to [`consistency_overall`] when `k` covers every pair.
pub fn consistency_topk<V: AsRef<[f64]>, P: AsRef<[f64]>>(
    video: &[V],
    prompts: &[P],
    k: usize,
) -> Result<f64, EvalError> {
    let n = video.len();
    check_len("prompt embeddings", n, prompts.len())?;
    if n < 2 {
        return Err(EvalError::TooFewShots(n));
    }
    if k == 0 {
        return Err(EvalError::EmptyInput("k must be positive"));
    }
    let mut chosen: Vec<(usize, usize)> = rank_pairs(prompts)
        .into_iter()
        .take(k)
        .map(|(p, _)| p)
        .collect();
    chosen.sort_unstable();
    let sum: f64 = chosen
        .iter()
        .map(|&(i, j)| cosine(video[i].as_ref(), video[j].as_ref()))
        .sum();
    Ok(sum / chosen.len() as f64)
}

/// `(global, single)`: full video against the story overview, and the mean
/// of each shot against its own prompt.
pub fn prompt_following<V: AsRef<[f64]>, P: AsRef<[f64]>>(
    video: &[V],
    prompts: &[P],
    overview: &[f64],
    full_video: &[f64],
) -> Result<(f64, f64), EvalError> {
    check_len("prompt embeddings", video.len(), prompts.len())?;
    if video.is_empty() {
        return Err(EvalError::EmptyInput("no shots"));
    }
    let global = cosine(full_video, overview);
    let single = video
        .iter()
        .zip(prompts)
        .map(|(v, p)| cosine(v.as_ref(), p.as_ref()))
        .sum::<f64>()
        / video.len() as f64;
    Ok((global, single))
}

/// Mean over shots of the per-shot mean frame score.
pub fn aesthetic_quality(scores_per_shot: &[Vec<f64>]) -> Result<f64, EvalError> {
    if scores_per_shot.is_empty() {
        return Err(EvalError::EmptyInput("no shots"));
    }
    let mut total = 0.0;
    for shot in scores_per_shot {
        if shot.is_empty() {
            return Err(EvalError::EmptyInput("shot without scored frames"));
        }
        total += shot.iter().sum::<f64>() / shot.len() as f64;
    }
    Ok(total / scores_per_shot.len() as f64)
}

/// `k` indices spread uniformly over `0..n` (midpoints of equal segments).
/// Returns every index when `k == 0` or `k >= n`.
pub fn uniform_indices(n: usize, k: usize) -> Vec<usize> {
    if k == 0 || k >= n {
        return (0..n).collect();
    }
    (0..k).map(|i| ((2 * i + 1) * n) / (2 * k)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    /// Frame budget for the whole-story embedding, spread over all shots.
    pub video_sample_frames: usize,
    /// Frames per shot fed to the clip embedder; 0 means all.
    pub shot_sample_frames: usize,
    pub aesthetic_frames_per_shot: usize,
    /// Raw scorer output is divided by this.
    pub aesthetic_scale: f64,
    pub top_k: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            video_sample_frames: 8,
            shot_sample_frames: 0,
            aesthetic_frames_per_shot: 4,
            aesthetic_scale: 10.0,
            top_k: 10,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.video_sample_frames == 0 {
            return Err("video_sample_frames must be positive".into());
        }
        if self.aesthetic_frames_per_shot == 0 {
            return Err("aesthetic_frames_per_shot must be positive".into());
        }
        if !(self.aesthetic_scale.is_finite() && self.aesthetic_scale > 0.0) {
            return Err("aesthetic_scale must be positive".into());
        }
        if self.top_k == 0 {
            return Err("top_k must be positive".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairRow {
    pub shot_a: usize,
    pub shot_b: usize,
    pub video_similarity: f64,
    pub prompt_similarity: f64,
    /// Position in the prompt-similarity ranking, 0 = most similar.
    pub prompt_rank: usize,
    pub in_top_k: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub story_name: String,
    pub shots: usize,
    pub aesthetic_quality: f64,
    pub prompt_following_global: f64,
    pub prompt_following_single: f64,
    pub consistency_overall: f64,
    pub consistency_top10: f64,
    pub top_k: usize,
    pub embedder: String,
    pub scorer: String,
    pub pair_table: Vec<PairRow>,
}

impl MetricsReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serialization");
        s.push('\n');
        s
    }

    pub fn write_pair_csv<W: Write>(&self, out: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(out);
        for row in &self.pair_table {
            w.serialize(row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn summary_header() -> &'static str {
        "story\taesthetic\tglobal\tsingle\toverall\ttop10"
    }

    pub fn summary_row(&self) -> String {
        format!(
            "{}\t{:.4}\t{:.4}\t{:.4}\t{:.4}\t{:.4}",
            self.story_name,
            self.aesthetic_quality,
            self.prompt_following_global,
            self.prompt_following_single,
            self.consistency_overall,
            self.consistency_top10
        )
    }
}

/// Builds the pair table used in the report.
pub fn pair_table<V: AsRef<[f64]>, P: AsRef<[f64]>>(
    video: &[V],
    prompts: &[P],
    k: usize,
) -> Vec<PairRow> {
    let ranked = rank_pairs(prompts);
    let mut rows: Vec<PairRow> = ranked
        .iter()
        .enumerate()
        .map(|(rank, &((i, j), ps))| PairRow {
            shot_a: i,
            shot_b: j,
            video_similarity: cosine(video[i].as_ref(), video[j].as_ref()),
            prompt_similarity: ps,
            prompt_rank: rank,
            in_top_k: rank < k,
        })
        .collect();
    rows.sort_by_key(|r| (r.shot_a, r.shot_b));
    rows
}

/// Evaluates a complete story with the given providers.
pub fn evaluate_story(
    story: &StoryResult,
    script: &StoryScript,
    providers: &Providers,
    cfg: &EvalConfig,
) -> Result<MetricsReport, EvalError> {
    cfg.validate()
        .map_err(|_| EvalError::EmptyInput("invalid evaluation config"))?;
    let specs = flatten_shots(script);
    check_len("story shots", specs.len(), story.shots.len())?;
    if story.shots.len() < 2 {
        return Err(EvalError::TooFewShots(story.shots.len()));
    }

    let mut video = Vec::with_capacity(story.shots.len());
    let mut aesthetic = Vec::with_capacity(story.shots.len());
    for (shot, spec) in story.shots.iter().zip(&specs) {
        if shot.frames.is_empty() {
            return Err(EvalError::EmptyInput("shot without frames"));
        }
        let clip: Vec<Frame> = uniform_indices(shot.frames.len(), cfg.shot_sample_frames)
            .into_iter()
            .map(|i| shot.frames[i].clone())
            .collect();
        video.push(providers.embedder.embed_video(&clip)?);
        let sampled: Vec<&Frame> =
            uniform_indices(shot.frames.len(), cfg.aesthetic_frames_per_shot)
                .into_iter()
                .map(|i| &shot.frames[i])
                .collect();
        let scores = providers.score_frames(&sampled, Some(&spec.prompt))?;
        aesthetic.push(
            scores
                .into_iter()
                .map(|s| s / cfg.aesthetic_scale)
                .collect(),
        );
    }

    let prompts: Vec<FrameEmbedding> = specs
        .iter()
        .map(|s| providers.embedder.embed_text(&s.prompt))
        .collect::<Result<_, _>>()?;
    let overview = providers.embedder.embed_text(&script.story_overview)?;

    let timeline: Vec<&Frame> = story.shots.iter().flat_map(|s| s.frames.iter()).collect();
    let full: Vec<Frame> = uniform_indices(timeline.len(), cfg.video_sample_frames)
        .into_iter()
        .map(|i| timeline[i].clone())
        .collect();
    let full_video = providers.embedder.embed_video(&full)?;

    let (global, single) =
        prompt_following(&video, &prompts, overview.as_slice(), full_video.as_slice())?;
    Ok(MetricsReport {
        story_name: script.story_name.clone(),
        shots: story.shots.len(),
        aesthetic_quality: aesthetic_quality(&aesthetic)?,
        prompt_following_global: global,
        prompt_following_single: single,
        consistency_overall: consistency_overall(&video)?,
        consistency_top10: consistency_topk(&video, &prompts, cfg.top_k)?,
        top_k: cfg.top_k,
        embedder: providers.embedder.model_id(),
        scorer: providers.scorer.model_id(),
        pair_table: pair_table(&video, &prompts, cfg.top_k),
    })
}
