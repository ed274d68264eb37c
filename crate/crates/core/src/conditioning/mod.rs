//! Conditioning inputs for memory-to-video generation.
//!
//! Memory frames are encoded one latent per frame and placed ahead of the
//! shot's latent frames along time. A binary mask marks memory slices with 1
//! and slices to generate with 0. Temporal rotary positions put memory at
//! `-f_m*S, ..., -2S, -S` and keep the shot's own frames at `0..f`, so the
//! shot is encoded exactly as it would be without memory.

pub mod rope;

use ndarray::{s, Array4};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bank::MemoryFrame;
use crate::frame::Frame;
use crate::pipeline::ShotResult;
use crate::script::ShotSpec;

pub use rope::{rope_rotate, RopeConfig, RopeError};

/// Default temporal gap between memory latents.
pub const DEFAULT_ROPE_OFFSET: u32 = 5;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ConditioningError {
    #[error("invalid latent shape: {0}")]
    InvalidShape(String),
    #[error("rope offset must be at least 1, got {0}")]
    InvalidOffset(u32),
    #[error("shot {0} continues from the previous shot but no previous result is available")]
    MissingPredecessor(usize),
}

/// Latent geometry of one shot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatentShape {
    /// Latent channels.
    pub c: usize,
    /// Latent frames of the shot.
    pub f: usize,
    pub h: usize,
    pub w: usize,
    /// Raw frames per latent frame.
    pub s: usize,
}

impl Default for LatentShape {
    fn default() -> Self {
        Self {
            c: 16,
            f: 5,
            h: 32,
            w: 32,
            s: 4,
        }
    }
}

impl LatentShape {
    pub fn validate(&self) -> Result<(), ConditioningError> {
        let dims = [
            ("c", self.c),
            ("f", self.f),
            ("h", self.h),
            ("w", self.w),
            ("s", self.s),
        ];
        for (name, v) in dims {
            if v == 0 {
                return Err(ConditioningError::InvalidShape(format!(
                    "{name} must be positive"
                )));
            }
        }
        // Keep mask allocations sane.
        if self
            .s
            .saturating_mul(self.f)
            .saturating_mul(self.h)
            .saturating_mul(self.w)
            > 1 << 28
        {
            return Err(ConditioningError::InvalidShape("shape too large".into()));
        }
        Ok(())
    }

    /// Raw frames in the decoded shot.
    pub fn raw_frames(&self) -> usize {
        self.s * self.f
    }
}

/// Temporal positions `[-f_m*S, ..., -S, 0, 1, ..., f-1]`.
pub fn temporal_indices(f_m: usize, f: usize, offset: u32) -> Result<Vec<i64>, ConditioningError> {
    if f == 0 {
        return Err(ConditioningError::InvalidShape("f must be positive".into()));
    }
    if offset < 1 {
        return Err(ConditioningError::InvalidOffset(offset));
    }
    let s = offset as i64;
    let memory = (1..=f_m as i64).rev().map(|k| -k * s);
    Ok(memory.chain(0..f as i64).collect())
}

/// Binary mask of shape `s x (f_m + f) x h x w`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GenerationMask {
    data: Array4<u8>,
    f_m: usize,
}

impl GenerationMask {
    pub fn tensor(&self) -> &Array4<u8> {
        &self.data
    }

    pub fn shape(&self) -> [usize; 4] {
        let d = self.data.dim();
        [d.0, d.1, d.2, d.3]
    }

    pub fn memory_frames(&self) -> usize {
        self.f_m
    }

    /// Value of each temporal slice, read from the tensor (first entry of the
    /// slice).
    pub fn temporal_profile(&self) -> Vec<u8> {
        (0..self.data.dim().1)
            .map(|t| self.data[[0, t, 0, 0]])
            .collect()
    }

    pub fn popcount(&self) -> usize {
        self.data.iter().map(|&v| v as usize).sum()
    }
}

pub fn build_mask(shape: &LatentShape, f_m: usize) -> Result<GenerationMask, ConditioningError> {
    shape.validate()?;
    let mut data = Array4::<u8>::zeros((shape.s, f_m + shape.f, shape.h, shape.w));
    data.slice_mut(s![.., ..f_m, .., ..]).fill(1);
    Ok(GenerationMask { data, f_m })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConditioningPlan {
    pub shape: LatentShape,
    /// Memory frames in conditioning order.
    pub memory: Vec<MemoryFrame>,
    pub mask: GenerationMask,
    pub temporal_indices: Vec<i64>,
    /// Last frame of the previous shot when continuing without a cut.
    pub first_frame: Option<Frame>,
    pub rope_offset: u32,
}

impl ConditioningPlan {
    pub fn f_m(&self) -> usize {
        self.memory.len()
    }
}

/// Builds the plan for `shot` from the current bank snapshot.
pub fn assemble_plan(
    bank_snapshot: Vec<MemoryFrame>,
    shot: &ShotSpec,
    prev: Option<&ShotResult>,
    shape: &LatentShape,
    offset: u32,
) -> Result<ConditioningPlan, ConditioningError> {
    let first_frame = if shot.is_cut {
        None
    } else {
        let last = prev
            .and_then(|p| p.frames.last())
            .ok_or(ConditioningError::MissingPredecessor(shot.global_index))?;
        Some(last.clone())
    };
    let f_m = bank_snapshot.len();
    Ok(ConditioningPlan {
        shape: *shape,
        mask: build_mask(shape, f_m)?,
        temporal_indices: temporal_indices(f_m, shape.f, offset)?,
        memory: bank_snapshot,
        first_frame,
        rope_offset: offset,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn negative_shift_indices() {
        assert_eq!(
            temporal_indices(3, 4, 5).unwrap(),
            vec![-15, -10, -5, 0, 1, 2, 3]
        );
        assert_eq!(temporal_indices(0, 2, 5).unwrap(), vec![0, 1]);
        assert_eq!(temporal_indices(1, 1, 1).unwrap(), vec![-1, 0]);
        assert!(matches!(
            temporal_indices(1, 0, 5),
            Err(ConditioningError::InvalidShape(_))
        ));
        assert_eq!(
            temporal_indices(1, 1, 0),
            Err(ConditioningError::InvalidOffset(0))
        );
    }

    #[test]
    fn mask_layout() {
        let shape = LatentShape {
            c: 1,
            f: 3,
            h: 2,
            w: 2,
            s: 4,
        };
        let m = build_mask(&shape, 2).unwrap();
        assert_eq!(m.shape(), [4, 5, 2, 2]);
        assert_eq!(m.temporal_profile(), vec![1, 1, 0, 0, 0]);
        assert_eq!(m.popcount(), 4 * 2 * 2 * 2);

        let empty = build_mask(&shape, 0).unwrap();
        assert_eq!(empty.popcount(), 0);

        let bad = LatentShape { h: 0, ..shape };
        assert!(build_mask(&bad, 1).is_err());
        assert_eq!(build_mask(&shape, 2).unwrap(), m);
    }

    fn shot(i: usize, is_cut: bool) -> ShotSpec {
        ShotSpec {
            global_index: i,
            prompt: "p".into(),
            is_cut,
            scene_num: 1,
        }
    }

    #[test]
    fn first_shot_without_memory_is_plain_generation() {
        let shape = LatentShape::default();
        let plan = assemble_plan(vec![], &shot(0, true), None, &shape, 5).unwrap();
        assert_eq!(plan.f_m(), 0);
        assert_eq!(plan.mask.popcount(), 0);
        assert_eq!(
            plan.temporal_indices,
            (0..shape.f as i64).collect::<Vec<_>>()
        );
        assert!(plan.first_frame.is_none());
    }

    #[test]
    fn continuation_requires_predecessor() {
        let err = assemble_plan(vec![], &shot(2, false), None, &LatentShape::default(), 5);
        assert_eq!(err.unwrap_err(), ConditioningError::MissingPredecessor(2));
    }

    proptest! {
        #[test]
        fn index_spacing(f_m in 0usize..10, f in 1usize..32, s in 1u32..8) {
            let idx = temporal_indices(f_m, f, s).unwrap();
            prop_assert_eq!(idx.len(), f_m + f);
            prop_assert_eq!(idx.iter().filter(|&&i| i < 0).count(), f_m);
            prop_assert!(idx.windows(2).all(|w| w[0] < w[1]));
            for w in idx[..f_m].windows(2) {
                prop_assert_eq!(w[1] - w[0], s as i64);
            }
            if f_m > 0 {
                prop_assert_eq!(idx[f_m - 1], -(s as i64));
            }
            for (k, &v) in idx[f_m..].iter().enumerate() {
                prop_assert_eq!(v, k as i64);
            }
        }

        #[test]
        fn mask_popcount(s in 1usize..5, f in 1usize..6, h in 1usize..5, w in 1usize..5, f_m in 0usize..6) {
            let m = build_mask(&LatentShape { c: 1, f, h, w, s }, f_m).unwrap();
            prop_assert_eq!(m.popcount(), s * f_m * h * w);
        }
    }
}
