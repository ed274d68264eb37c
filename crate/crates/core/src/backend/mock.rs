//! Deterministic desk-scale generator.
//!
//! Frames are procedural patterns keyed by a hash of the prompt, the seed,
//! the memory frame digests and the first-frame digest. The prompt pattern
//! dominates the content, a key-dependent pattern adds per-shot variation,
//! and the whole thing drifts by a key-dependent translation across the shot
//! to imitate motion.
//!
//! `consistency` blends the pixel mean of the memory frames into every
//! generated frame, so shots conditioned on shared memory look alike. With a
//! first frame, frame 0 is that frame verbatim and the shot fades from it
//! into the generated content.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{BackendError, Capabilities, GenerationBackend};
use crate::conditioning::ConditioningPlan;
use crate::frame::Frame;
use crate::synth::{self, Pattern};

const PROMPT_WEIGHT: f64 = 0.7;

#[derive(Debug, Clone, PartialEq)]
pub struct MockBackend {
    /// Weight of the memory mean in generated frames, in [0, 1].
    pub consistency: f64,
    /// Maximum translation over a shot, as a fraction of the frame.
    pub motion: f64,
}

impl Default for MockBackend {
    fn default() -> Self {
        Self {
            consistency: 0.5,
            motion: 0.35,
        }
    }
}

impl MockBackend {
    pub fn with_consistency(consistency: f64) -> Self {
        Self {
            consistency,
            ..Self::default()
        }
    }

    fn key(plan: &ConditioningPlan, prompt: &str, seed: u64) -> [u8; 32] {
        let mut parts: Vec<Vec<u8>> = vec![
            b"mock-backend-v1".to_vec(),
            prompt.as_bytes().to_vec(),
            seed.to_le_bytes().to_vec(),
        ];
        for m in &plan.memory {
            parts.push(m.frame.digest().as_bytes().to_vec());
        }
        match &plan.first_frame {
            Some(f) => parts.push(f.digest().as_bytes().to_vec()),
            None => parts.push(b"no-first-frame".to_vec()),
        }
        let refs: Vec<&[u8]> = parts.iter().map(Vec::as_slice).collect();
        synth::key(&refs)
    }
}

/// Nearest-neighbour resample of `frame` to `width x height`, as floats.
fn sample(frame: &Frame, width: u32, height: u32) -> Vec<f64> {
    if frame.width() == width && frame.height() == height {
        return synth::dequantize(frame.pixels());
    }
    let mut out = Vec::with_capacity(width as usize * height as usize * 3);
    for y in 0..height {
        let sy = (y as u64 * frame.height() as u64 / height as u64) as u32;
        for x in 0..width {
            let sx = (x as u64 * frame.width() as u64 / width as u64) as u32;
            let p = frame.image().get_pixel(sx, sy);
            out.extend(p.0.iter().map(|&v| v as f64 / 255.0));
        }
    }
    out
}

impl GenerationBackend for MockBackend {
    fn id(&self) -> String {
        format!(
            "mock-v1(consistency={},motion={})",
            self.consistency, self.motion
        )
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
        if !(0.0..=1.0).contains(&self.consistency) {
            return Err(BackendError::Rejected(
                "consistency must be in [0, 1]".into(),
            ));
        }
        let (w, h) = (plan.shape.w as u32, plan.shape.h as u32);
        let n = plan.shape.raw_frames();
        let key = Self::key(plan, prompt, seed);
        let mut rng = ChaCha8Rng::from_seed(key);
        let drift = (
            rng.random_range(-self.motion..=self.motion),
            rng.random_range(-self.motion..=self.motion),
        );
        let variant = Pattern::from_seed(rng.random());
        let content = Pattern::for_text(prompt);

        let memory_mean = (!plan.memory.is_empty()).then(|| {
            let mut acc = vec![0.0; (w * h * 3) as usize];
            for m in &plan.memory {
                for (a, v) in acc.iter_mut().zip(sample(&m.frame, w, h)) {
                    *a += v;
                }
            }
            let k = plan.memory.len() as f64;
            acc.iter_mut().for_each(|a| *a /= k);
            acc
        });
        let first = plan.first_frame.as_ref().map(|f| sample(f, w, h));

        let mut frames = Vec::with_capacity(n);
        for k in 0..n {
            let tau = if n > 1 {
                k as f64 / (n - 1) as f64
            } else {
                0.0
            };
            if k == 0 {
                if let Some(f) = &plan.first_frame {
                    if f.width() == w && f.height() == h {
                        frames.push(f.clone());
                        continue;
                    }
                }
            }
            let shift = (tau * drift.0, tau * drift.1);
            let a = content.render(w, h, shift);
            let b = variant.render(w, h, shift);
            let mut px: Vec<f64> = a
                .iter()
                .zip(&b)
                .map(|(a, b)| PROMPT_WEIGHT * a + (1.0 - PROMPT_WEIGHT) * b)
                .collect();
            if let Some(mean) = &memory_mean {
                for (p, m) in px.iter_mut().zip(mean) {
                    *p = (1.0 - self.consistency) * *p + self.consistency * m;
                }
            }
            if let Some(first) = &first {
                for (p, f) in px.iter_mut().zip(first) {
                    *p = (1.0 - tau) * f + tau * *p;
                }
            }
            frames.push(
                Frame::from_rgb(w, h, synth::quantize(&px))
                    .map_err(|e| BackendError::Failed(e.to_string()))?,
            );
        }
        Ok(frames)
    }
}
