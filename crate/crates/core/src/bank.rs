//! Bounded visual memory with a pinned sink and a sliding window.
//!
//! The first `sink_size` frames ever admitted are sinks and are never
//! evicted. Later frames form a window; when the bank exceeds `capacity` the
//! oldest window frame is dropped. A candidate is admitted only if its cosine
//! similarity to every resident frame (including ones admitted earlier in the
//! same update) is strictly below `dup_threshold`.
//!
//! Banks are values: [`MemoryBank::update`] returns a new bank.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedding::FrameEmbedding;
use crate::frame::Frame;
use crate::selection::KeyframeCandidate;

/// `source_shot` of user-provided reference images.
pub const REFERENCE_SHOT: i64 = -1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BankError {
    #[error("invalid bank config: {0}")]
    Config(String),
    #[error("nothing to insert")]
    EmptyInput,
    #[error("length mismatch: {images} images, {embeddings} embeddings")]
    LengthMismatch { images: usize, embeddings: usize },
    #[error("{count} references exceed bank capacity {capacity}")]
    CapacityExceeded { count: usize, capacity: usize },
    #[error("embedding dimension {found} does not match bank dimension {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("bank state violates invariant: {0}")]
    Invariant(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BankConfig {
    pub sink_size: usize,
    pub capacity: usize,
    pub dup_threshold: f64,
}

impl Default for BankConfig {
    fn default() -> Self {
        Self {
            sink_size: 3,
            capacity: 10,
            dup_threshold: 0.9,
        }
    }
}

impl BankConfig {
    pub fn validate(&self) -> Result<(), BankError> {
        if self.capacity == 0 {
            return Err(BankError::Config("capacity must be positive".into()));
        }
        if self.capacity < self.sink_size {
            return Err(BankError::Config(format!(
                "capacity {} is smaller than sink_size {}",
                self.capacity, self.sink_size
            )));
        }
        if !(self.dup_threshold > 0.0 && self.dup_threshold <= 1.0) {
            return Err(BankError::Config("dup_threshold must be in (0, 1]".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MemoryFrame {
    pub frame: Frame,
    pub embedding: FrameEmbedding,
    /// `None` for reference images, which are never scored.
    pub aesthetic_score: Option<f64>,
    /// Shot the frame came from, or [`REFERENCE_SHOT`].
    pub source_shot: i64,
    pub source_frame: usize,
    pub is_sink: bool,
    pub insertion_seq: u64,
}

/// A frame offered to the bank.
#[derive(Debug, Clone, PartialEq)]
pub struct NewMemory {
    pub frame: Frame,
    pub embedding: FrameEmbedding,
    pub aesthetic_score: Option<f64>,
    pub source_shot: i64,
    pub source_frame: usize,
}

impl NewMemory {
    pub fn from_candidate(candidate: &KeyframeCandidate, shot: usize, frames: &[Frame]) -> Self {
        Self {
            frame: frames[candidate.frame_index].clone(),
            embedding: candidate.embedding.clone(),
            aesthetic_score: Some(candidate.aesthetic_score),
            source_shot: shot as i64,
            source_frame: candidate.frame_index,
        }
    }
}

/// What an update did.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct UpdateReport {
    /// Indices into the offered list that were admitted.
    pub admitted: Vec<usize>,
    /// Indices into the offered list rejected as duplicates.
    pub rejected: Vec<usize>,
    pub evicted: Vec<MemoryFrame>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MemoryBank {
    config: BankConfig,
    frames: Vec<MemoryFrame>,
    next_seq: u64,
}

impl MemoryBank {
    pub fn init_empty(config: BankConfig) -> Result<Self, BankError> {
        config.validate()?;
        Ok(Self {
            config,
            frames: Vec::new(),
            next_seq: 0,
        })
    }

    /// Seeds the bank with reference images. Near-duplicate references are
    /// dropped like any other candidate.
    pub fn init_from_references(
        config: BankConfig,
        images: &[Frame],
        embeddings: &[FrameEmbedding],
    ) -> Result<Self, BankError> {
        let bank = Self::init_empty(config)?;
        if images.is_empty() || images.len() != embeddings.len() {
            return Err(BankError::LengthMismatch {
                images: images.len(),
                embeddings: embeddings.len(),
            });
        }
        if images.len() > bank.config.capacity {
            return Err(BankError::CapacityExceeded {
                count: images.len(),
                capacity: bank.config.capacity,
            });
        }
        let offered: Vec<NewMemory> = images
            .iter()
            .zip(embeddings)
            .enumerate()
            .map(|(i, (frame, embedding))| NewMemory {
                frame: frame.clone(),
                embedding: embedding.clone(),
                aesthetic_score: None,
                source_shot: REFERENCE_SHOT,
                source_frame: i,
            })
            .collect();
        bank.update(&offered)
    }

    /// Rebuilds a bank from persisted parts, checking every invariant.
    pub fn from_parts(
        config: BankConfig,
        frames: Vec<MemoryFrame>,
        next_seq: u64,
    ) -> Result<Self, BankError> {
        config.validate()?;
        let bank = Self {
            config,
            frames,
            next_seq,
        };
        bank.check_invariants()?;
        Ok(bank)
    }

    pub fn check_invariants(&self) -> Result<(), BankError> {
        let fail = |m: String| Err(BankError::Invariant(m));
        if self.frames.len() > self.config.capacity {
            return fail(format!(
                "{} frames exceed capacity {}",
                self.frames.len(),
                self.config.capacity
            ));
        }
        let mut prev: Option<u64> = None;
        for f in &self.frames {
            if prev.is_some_and(|p| f.insertion_seq <= p) {
                return fail("insertion_seq not strictly increasing".into());
            }
            prev = Some(f.insertion_seq);
            if f.insertion_seq >= self.next_seq {
                return fail("insertion_seq beyond next_seq".into());
            }
            if f.is_sink != (f.insertion_seq < self.config.sink_size as u64) {
                return fail(format!("frame {} has wrong sink flag", f.insertion_seq));
            }
        }
        let sinks = self.sink_count() as u64;
        if sinks != self.next_seq.min(self.config.sink_size as u64) {
            return fail("sink frames missing".into());
        }
        if let Some(first) = self.frames.first() {
            let d = first.embedding.dim();
            if self.frames.iter().any(|f| f.embedding.dim() != d) {
                return fail("mixed embedding dimensions".into());
            }
        }
        Ok(())
    }

    pub fn update(&self, offered: &[NewMemory]) -> Result<MemoryBank, BankError> {
        self.update_with_report(offered).map(|(bank, _)| bank)
    }

    pub fn update_with_report(
        &self,
        offered: &[NewMemory],
    ) -> Result<(MemoryBank, UpdateReport), BankError> {
        if offered.is_empty() {
            return Err(BankError::EmptyInput);
        }
        let mut dim = self.frames.first().map(|f| f.embedding.dim());
        for m in offered {
            let d = *dim.get_or_insert(m.embedding.dim());
            if m.embedding.dim() != d {
                return Err(BankError::DimensionMismatch {
                    expected: d,
                    found: m.embedding.dim(),
                });
            }
        }

        let mut next = self.clone();
        let mut report = UpdateReport::default();
        for (i, m) in offered.iter().enumerate() {
            if next
                .max_similarity(&m.embedding)
                .is_some_and(|s| s >= next.config.dup_threshold)
            {
                report.rejected.push(i);
                continue;
            }
            let seq = next.next_seq;
            next.next_seq += 1;
            next.frames.push(MemoryFrame {
                frame: m.frame.clone(),
                embedding: m.embedding.clone(),
                aesthetic_score: m.aesthetic_score,
                source_shot: m.source_shot,
                source_frame: m.source_frame,
                is_sink: seq < next.config.sink_size as u64,
                insertion_seq: seq,
            });
            report.admitted.push(i);
            if next.frames.len() > next.config.capacity {
                let oldest_window = next
                    .frames
                    .iter()
                    .position(|f| !f.is_sink)
                    .expect("capacity >= sink_size leaves a window frame to evict");
                report.evicted.push(next.frames.remove(oldest_window));
            }
        }
        Ok((next, report))
    }

    /// Frames in the order fed to conditioning: sinks, then the window from
    /// oldest to newest.
    pub fn snapshot_for_conditioning(&self) -> Vec<MemoryFrame> {
        self.frames.clone()
    }

    /// Highest cosine similarity between `e` and any resident frame.
    pub fn max_similarity(&self, e: &FrameEmbedding) -> Option<f64> {
        self.frames
            .iter()
            .map(|f| f.embedding.cosine(e))
            .fold(None, |acc: Option<f64>, s| {
                Some(acc.map_or(s, |a| a.max(s)))
            })
    }

    pub fn frames(&self) -> &[MemoryFrame] {
        &self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn sink_count(&self) -> usize {
        self.frames.iter().filter(|f| f.is_sink).count()
    }

    pub fn config(&self) -> &BankConfig {
        &self.config
    }

    /// Total number of frames ever admitted.
    pub fn next_seq(&self) -> u64 {
        self.next_seq
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit(dim: usize, axis: usize) -> FrameEmbedding {
        let mut v = vec![0.0; dim];
        v[axis] = 1.0;
        FrameEmbedding::new(v).unwrap()
    }

    fn offer(e: FrameEmbedding, shot: i64) -> NewMemory {
        NewMemory {
            frame: Frame::solid(1, 1, [shot as u8, 0, 0]).unwrap(),
            embedding: e,
            aesthetic_score: Some(5.0),
            source_shot: shot,
            source_frame: 0,
        }
    }

    #[test]
    fn defaults() {
        let b = MemoryBank::init_empty(BankConfig::default()).unwrap();
        assert!(b.is_empty());
        assert_eq!(b.config().sink_size, 3);
        assert_eq!(b.config().capacity, 10);
    }

    #[test]
    fn config_errors() {
        let bad = BankConfig {
            sink_size: 4,
            capacity: 3,
            ..Default::default()
        };
        assert!(matches!(
            MemoryBank::init_empty(bad),
            Err(BankError::Config(_))
        ));
        let pure_window = BankConfig {
            sink_size: 0,
            capacity: 2,
            ..Default::default()
        };
        let b = MemoryBank::init_empty(pure_window).unwrap();
        let b = b
            .update(&[
                offer(unit(4, 0), 0),
                offer(unit(4, 1), 0),
                offer(unit(4, 2), 0),
            ])
            .unwrap();
        assert_eq!(b.sink_count(), 0);
        assert_eq!(
            b.frames()
                .iter()
                .map(|f| f.insertion_seq)
                .collect::<Vec<_>>(),
            vec![1, 2]
        );
    }

    #[test]
    fn first_insertions_are_sinks() {
        let b = MemoryBank::init_empty(BankConfig::default()).unwrap();
        let b = b
            .update(&[offer(unit(4, 0), 0), offer(unit(4, 1), 0)])
            .unwrap();
        assert_eq!(b.len(), 2);
        assert!(b.frames().iter().all(|f| f.is_sink));
    }

    #[test]
    fn full_bank_evicts_oldest_window_frame() {
        let mut b = MemoryBank::init_empty(BankConfig::default()).unwrap();
        for axis in 0..10 {
            b = b.update(&[offer(unit(16, axis), axis as i64)]).unwrap();
        }
        assert_eq!(b.len(), 10);
        let (b2, report) = b.update_with_report(&[offer(unit(16, 10), 10)]).unwrap();
        assert_eq!(b2.len(), 10);
        assert_eq!(report.evicted.len(), 1);
        assert_eq!(report.evicted[0].insertion_seq, 3);
        assert_eq!(
            b2.frames()
                .iter()
                .map(|f| f.insertion_seq)
                .collect::<Vec<_>>(),
            vec![0, 1, 2, 4, 5, 6, 7, 8, 9, 10]
        );
        // input unchanged
        assert_eq!(b.frames()[3].insertion_seq, 3);
    }

    #[test]
    fn near_duplicates_are_rejected() {
        let b = MemoryBank::init_empty(BankConfig::default())
            .unwrap()
            .update(&[offer(unit(2, 0), 0)])
            .unwrap();
        let close = FrameEmbedding::new(vec![0.95, (1.0f64 - 0.95 * 0.95).sqrt()]).unwrap();
        let (b2, report) = b.update_with_report(&[offer(close, 1)]).unwrap();
        assert_eq!(b2, b);
        assert_eq!(report.rejected, vec![0]);
    }

    #[test]
    fn duplicates_within_one_update() {
        let b = MemoryBank::init_empty(BankConfig::default()).unwrap();
        let (b, report) = b
            .update_with_report(&[
                offer(unit(3, 0), 0),
                offer(unit(3, 0), 0),
                offer(unit(3, 1), 0),
            ])
            .unwrap();
        assert_eq!(report.admitted, vec![0, 2]);
        assert_eq!(b.len(), 2);
    }

    #[test]
    fn references() {
        let cfg = BankConfig::default();
        let frames: Vec<Frame> = (0..2)
            .map(|i| Frame::solid(1, 1, [i, 0, 0]).unwrap())
            .collect();
        let b = MemoryBank::init_from_references(cfg.clone(), &frames, &[unit(3, 0), unit(3, 1)])
            .unwrap();
        assert_eq!(b.len(), 2);
        assert!(b
            .frames()
            .iter()
            .all(|f| f.is_sink && f.source_shot == REFERENCE_SHOT));

        assert!(matches!(
            MemoryBank::init_from_references(cfg.clone(), &[], &[]),
            Err(BankError::LengthMismatch { .. })
        ));
        let many: Vec<Frame> = (0..11)
            .map(|i| Frame::solid(1, 1, [i, 0, 0]).unwrap())
            .collect();
        let embs: Vec<FrameEmbedding> = (0..11).map(|i| unit(11, i)).collect();
        assert!(matches!(
            MemoryBank::init_from_references(cfg.clone(), &many, &embs),
            Err(BankError::CapacityExceeded { .. })
        ));

        let dup =
            MemoryBank::init_from_references(cfg, &frames, &[unit(3, 0), unit(3, 0)]).unwrap();
        assert_eq!(dup.len(), 1);
    }

    #[test]
    fn update_rejects_empty_and_mixed_dims() {
        let b = MemoryBank::init_empty(BankConfig::default()).unwrap();
        assert_eq!(b.update(&[]), Err(BankError::EmptyInput));
        assert!(matches!(
            b.update(&[offer(unit(2, 0), 0), offer(unit(3, 1), 0)]),
            Err(BankError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn from_parts_checks_invariants() {
        let b = MemoryBank::init_empty(BankConfig::default())
            .unwrap()
            .update(&[offer(unit(2, 0), 0), offer(unit(2, 1), 0)])
            .unwrap();
        let ok = MemoryBank::from_parts(b.config().clone(), b.frames().to_vec(), b.next_seq());
        assert_eq!(ok.unwrap(), b);
        let mut frames = b.frames().to_vec();
        frames[1].is_sink = false;
        assert!(MemoryBank::from_parts(b.config().clone(), frames, 2).is_err());
        let mut frames = b.frames().to_vec();
        frames.swap(0, 1);
        assert!(MemoryBank::from_parts(b.config().clone(), frames, 2).is_err());
    }
}
