//! Content-addressed RGB frames.
//!
//! A [`Frame`] is an immutable 8-bit RGB image shared behind an `Arc`, keyed
//! by the SHA-256 of its dimensions and pixel bytes. Frames are persisted as
//! PNG so that a reloaded frame is bit-identical to the one generated.

use std::fmt;
use std::io::Cursor;
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use image::{ImageFormat, ImageReader, Limits, RgbImage};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};
use thiserror::Error;

/// Largest width or height accepted when decoding untrusted image bytes.
pub const MAX_DECODE_DIM: u32 = 4096;

#[derive(Debug, Error)]
pub enum FrameError {
    #[error("pixel buffer has {actual} bytes, expected {expected} for {width}x{height} RGB")]
    BufferSize {
        width: u32,
        height: u32,
        expected: usize,
        actual: usize,
    },
    #[error("frame has zero width or height")]
    Empty,
    #[error("image decode failed: {0}")]
    Decode(String),
    #[error("image encode failed: {0}")]
    Encode(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid frame digest: {0}")]
    InvalidDigest(String),
}

/// SHA-256 content digest of a frame.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct FrameDigest([u8; 32]);

impl FrameDigest {
    pub fn as_bytes(&self) -> &[u8; 32] {
        &self.0
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    /// First 12 hex characters, for listings.
    pub fn short(&self) -> String {
        self.to_hex()[..12].to_string()
    }
}

impl fmt::Display for FrameDigest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl fmt::Debug for FrameDigest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "FrameDigest({})", self.short())
    }
}

impl FromStr for FrameDigest {
    type Err = FrameError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut out = [0u8; 32];
        hex::decode_to_slice(s, &mut out).map_err(|_| FrameError::InvalidDigest(s.to_string()))?;
        Ok(Self(out))
    }
}

impl Serialize for FrameDigest {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for FrameDigest {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// An immutable RGB frame. Cloning is cheap.
#[derive(Clone)]
pub struct Frame {
    image: Arc<RgbImage>,
    digest: FrameDigest,
}

impl Frame {
    pub fn from_image(image: RgbImage) -> Result<Self, FrameError> {
        if image.width() == 0 || image.height() == 0 {
            return Err(FrameError::Empty);
        }
        let digest = digest_pixels(image.width(), image.height(), image.as_raw());
        Ok(Self {
            image: Arc::new(image),
            digest,
        })
    }

    pub fn from_rgb(width: u32, height: u32, pixels: Vec<u8>) -> Result<Self, FrameError> {
        let expected = width as usize * height as usize * 3;
        if pixels.len() != expected {
            return Err(FrameError::BufferSize {
                width,
                height,
                expected,
                actual: pixels.len(),
            });
        }
        let image = RgbImage::from_raw(width, height, pixels).ok_or(FrameError::Empty)?;
        Self::from_image(image)
    }

    /// A single-color frame.
    pub fn solid(width: u32, height: u32, rgb: [u8; 3]) -> Result<Self, FrameError> {
        let pixels = rgb
            .iter()
            .copied()
            .cycle()
            .take(width as usize * height as usize * 3)
            .collect();
        Self::from_rgb(width, height, pixels)
    }

    pub fn digest(&self) -> FrameDigest {
        self.digest
    }

    pub fn width(&self) -> u32 {
        self.image.width()
    }

    pub fn height(&self) -> u32 {
        self.image.height()
    }

    pub fn image(&self) -> &RgbImage {
        &self.image
    }

    pub fn pixels(&self) -> &[u8] {
        self.image.as_raw()
    }

    pub fn encode_png(&self) -> Result<Vec<u8>, FrameError> {
        let mut out = Cursor::new(Vec::new());
        self.image
            .write_to(&mut out, ImageFormat::Png)
            .map_err(|e| FrameError::Encode(e.to_string()))?;
        Ok(out.into_inner())
    }

    /// Decodes PNG bytes from an untrusted source.
    pub fn decode_png(bytes: &[u8]) -> Result<Self, FrameError> {
        let mut reader = ImageReader::with_format(Cursor::new(bytes), ImageFormat::Png);
        let mut limits = Limits::default();
        limits.max_image_width = Some(MAX_DECODE_DIM);
        limits.max_image_height = Some(MAX_DECODE_DIM);
        reader.limits(limits);
        let image = reader
            .decode()
            .map_err(|e| FrameError::Decode(e.to_string()))?
            .to_rgb8();
        Self::from_image(image)
    }

    pub fn save_png(&self, path: &Path) -> Result<(), FrameError> {
        let bytes = self.encode_png()?;
        std::fs::write(path, bytes).map_err(|source| FrameError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn load_png(path: &Path) -> Result<Self, FrameError> {
        let bytes = std::fs::read(path).map_err(|source| FrameError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::decode_png(&bytes)
    }
}

impl PartialEq for Frame {
    fn eq(&self, other: &Self) -> bool {
        self.digest == other.digest
            && self.width() == other.width()
            && self.height() == other.height()
            && self.pixels() == other.pixels()
    }
}

impl Eq for Frame {}

impl fmt::Debug for Frame {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "Frame({}x{} {})",
            self.width(),
            self.height(),
            self.digest.short()
        )
    }
}

fn digest_pixels(width: u32, height: u32, pixels: &[u8]) -> FrameDigest {
    let mut hasher = Sha256::new();
    hasher.update(width.to_le_bytes());
    hasher.update(height.to_le_bytes());
    hasher.update(pixels);
    FrameDigest(hasher.finalize().into())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn png_round_trip_is_bit_exact() {
        let pixels: Vec<u8> = (0..(5 * 3 * 3)).map(|i| (i * 37 % 256) as u8).collect();
        let frame = Frame::from_rgb(5, 3, pixels).unwrap();
        let decoded = Frame::decode_png(&frame.encode_png().unwrap()).unwrap();
        assert_eq!(decoded, frame);
        assert_eq!(decoded.digest(), frame.digest());
    }

    #[test]
    fn digest_depends_on_shape_and_content() {
        let a = Frame::solid(2, 4, [1, 2, 3]).unwrap();
        let b = Frame::solid(4, 2, [1, 2, 3]).unwrap();
        let c = Frame::solid(2, 4, [1, 2, 4]).unwrap();
        assert_ne!(a.digest(), b.digest());
        assert_ne!(a.digest(), c.digest());
        assert_eq!(a.digest(), Frame::solid(2, 4, [1, 2, 3]).unwrap().digest());
    }

    #[test]
    fn digest_hex_round_trip() {
        let d = Frame::solid(1, 1, [9, 9, 9]).unwrap().digest();
        assert_eq!(d.to_hex().parse::<FrameDigest>().unwrap(), d);
        assert!("zz".parse::<FrameDigest>().is_err());
    }

    #[test]
    fn rejects_bad_buffers() {
        assert!(matches!(
            Frame::from_rgb(2, 2, vec![0; 5]),
            Err(FrameError::BufferSize { .. })
        ));
        assert!(Frame::from_rgb(0, 2, vec![]).is_err());
        assert!(Frame::decode_png(b"not a png").is_err());
    }
}
