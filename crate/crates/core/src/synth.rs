//! Procedural imagery shared by the mock generator and the mock providers.
//!
//! A [`Pattern`] is a sum of a few low-frequency plane waves per color
//! channel around mid-gray. Frequencies are whole cycles per image, so
//! translating a pattern wraps around seamlessly.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

const WAVES_PER_CHANNEL: usize = 3;

#[derive(Debug, Clone, Copy)]
struct Wave {
    amp: f64,
    fx: f64,
    fy: f64,
    phase: f64,
}

#[derive(Debug, Clone)]
pub struct Pattern {
    waves: [[Wave; WAVES_PER_CHANNEL]; 3],
}

impl Pattern {
    pub fn from_seed(seed: [u8; 32]) -> Self {
        let mut rng = ChaCha8Rng::from_seed(seed);
        let mut wave = || {
            let (fx, fy) = loop {
                let fx: i32 = rng.random_range(-2..=2);
                let fy: i32 = rng.random_range(-2..=2);
                if fx != 0 || fy != 0 {
                    break (fx, fy);
                }
            };
            Wave {
                amp: rng.random_range(0.04..0.14),
                fx: fx as f64,
                fy: fy as f64,
                phase: rng.random_range(0.0..std::f64::consts::TAU),
            }
        };
        let mut channel = || [wave(), wave(), wave()];
        Self {
            waves: [channel(), channel(), channel()],
        }
    }

    /// Pattern keyed by a text prompt.
    pub fn for_text(text: &str) -> Self {
        Self::from_seed(key(&[b"text-pattern", text.as_bytes()]))
    }

    /// Value of channel `ch` at normalized coordinates, in [0, 1].
    pub fn value(&self, ch: usize, x: f64, y: f64) -> f64 {
        let v: f64 = self.waves[ch]
            .iter()
            .map(|w| w.amp * (std::f64::consts::TAU * (w.fx * x + w.fy * y) + w.phase).sin())
            .sum();
        (0.5 + v).clamp(0.0, 1.0)
    }

    /// Renders an interleaved RGB buffer translated by `shift` (in image
    /// fractions).
    pub fn render(&self, width: u32, height: u32, shift: (f64, f64)) -> Vec<f64> {
        let mut out = Vec::with_capacity(width as usize * height as usize * 3);
        for py in 0..height {
            let y = (py as f64 + 0.5) / height as f64 - shift.1;
            for px in 0..width {
                let x = (px as f64 + 0.5) / width as f64 - shift.0;
                for ch in 0..3 {
                    out.push(self.value(ch, x, y));
                }
            }
        }
        out
    }
}

/// Hashes length-prefixed parts into a 32-byte key.
pub fn key(parts: &[&[u8]]) -> [u8; 32] {
    let mut hasher = Sha256::new();
    for part in parts {
        hasher.update((part.len() as u64).to_le_bytes());
        hasher.update(part);
    }
    hasher.finalize().into()
}

pub fn quantize(buf: &[f64]) -> Vec<u8> {
    buf.iter()
        .map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect()
}

pub fn dequantize(pixels: &[u8]) -> Vec<f64> {
    pixels.iter().map(|&p| p as f64 / 255.0).collect()
}
