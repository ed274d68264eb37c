//! Minimal `multipart/form-data` codec for ordered frame uploads.

use sha2::{Digest, Sha256};
use thiserror::Error;

/// Upper bound on parts accepted when decoding.
pub const MAX_PARTS: usize = 4096;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MultipartError {
    #[error("content type is not multipart/form-data with a boundary")]
    MissingBoundary,
    #[error("malformed multipart body: {0}")]
    Malformed(&'static str),
    #[error("too many parts")]
    TooManyParts,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Part {
    pub name: String,
    pub content_type: Option<String>,
    pub data: Vec<u8>,
}

impl Part {
    pub fn new(name: impl Into<String>, content_type: &str, data: Vec<u8>) -> Self {
        Self {
            name: name.into(),
            content_type: Some(content_type.to_string()),
            data,
        }
    }
}

/// Encodes parts, returning `(content_type_header, body)`. The boundary is
/// derived from the content hash, so encoding is deterministic.
pub fn encode(parts: &[Part]) -> (String, Vec<u8>) {
    let mut hasher = Sha256::new();
    for p in parts {
        hasher.update((p.data.len() as u64).to_le_bytes());
        hasher.update(&p.data);
    }
    let digest: [u8; 32] = hasher.finalize().into();
    let boundary = format!("shotmem-{}", hex::encode(&digest[..16]));

    let mut body = Vec::new();
    for p in parts {
        body.extend_from_slice(format!("--{boundary}\r\n").as_bytes());
        body.extend_from_slice(
            format!("Content-Disposition: form-data; name=\"{}\"\r\n", p.name).as_bytes(),
        );
        if let Some(ct) = &p.content_type {
            body.extend_from_slice(format!("Content-Type: {ct}\r\n").as_bytes());
        }
        body.extend_from_slice(b"\r\n");
        body.extend_from_slice(&p.data);
        body.extend_from_slice(b"\r\n");
    }
    body.extend_from_slice(format!("--{boundary}--\r\n").as_bytes());
    (format!("multipart/form-data; boundary={boundary}"), body)
}

/// Extracts the boundary parameter from a `Content-Type` header value.
pub fn boundary_from_content_type(content_type: &str) -> Result<String, MultipartError> {
    let mut params = content_type.split(';');
    let mime = params.next().unwrap_or("").trim();
    if !mime.eq_ignore_ascii_case("multipart/form-data") {
        return Err(MultipartError::MissingBoundary);
    }
    for param in params {
        if let Some((k, v)) = param.trim().split_once('=') {
            if k.trim().eq_ignore_ascii_case("boundary") {
                let v = v.trim().trim_matches('"');
                if !v.is_empty() && v.len() <= 200 {
                    return Ok(v.to_string());
                }
            }
        }
    }
    Err(MultipartError::MissingBoundary)
}

pub fn decode(content_type: &str, body: &[u8]) -> Result<Vec<Part>, MultipartError> {
    let boundary = boundary_from_content_type(content_type)?;
    let delim = format!("--{boundary}").into_bytes();
    let inner_delim = format!("\r\n--{boundary}").into_bytes();

    let mut pos = find(body, &delim, 0).ok_or(MultipartError::Malformed("no opening boundary"))?
        + delim.len();
    let mut parts = Vec::new();
    loop {
        let rest = &body[pos..];
        if rest.starts_with(b"--") {
            return Ok(parts);
        }
        if !rest.starts_with(b"\r\n") {
            return Err(MultipartError::Malformed("boundary not followed by CRLF"));
        }
        pos += 2;
        let header_end = find(body, b"\r\n\r\n", pos)
            .ok_or(MultipartError::Malformed("unterminated headers"))?;
        let headers = std::str::from_utf8(&body[pos..header_end])
            .map_err(|_| MultipartError::Malformed("non-UTF-8 headers"))?;
        let (name, content_type) = parse_headers(headers)?;
        let data_start = header_end + 4;
        let data_end = find(body, &inner_delim, data_start)
            .ok_or(MultipartError::Malformed("unterminated part"))?;
        if parts.len() == MAX_PARTS {
            return Err(MultipartError::TooManyParts);
        }
        parts.push(Part {
            name,
            content_type,
            data: body[data_start..data_end].to_vec(),
        });
        pos = data_end + inner_delim.len();
    }
}

fn parse_headers(headers: &str) -> Result<(String, Option<String>), MultipartError> {
    let mut name = None;
    let mut content_type = None;
    for line in headers.split("\r\n") {
        let Some((key, value)) = line.split_once(':') else {
            return Err(MultipartError::Malformed("bad header line"));
        };
        let key = key.trim();
        if key.eq_ignore_ascii_case("content-disposition") {
            for param in value.split(';').skip(1) {
                if let Some((k, v)) = param.trim().split_once('=') {
                    if k.trim() == "name" {
                        name = Some(v.trim().trim_matches('"').to_string());
                    }
                }
            }
        } else if key.eq_ignore_ascii_case("content-type") {
            content_type = Some(value.trim().to_string());
        }
    }
    let name = name.ok_or(MultipartError::Malformed("part without a name"))?;
    Ok((name, content_type))
}

fn find(haystack: &[u8], needle: &[u8], from: usize) -> Option<usize> {
    if from > haystack.len() || needle.is_empty() {
        return None;
    }
    haystack[from..]
        .windows(needle.len())
        .position(|w| w == needle)
        .map(|p| p + from)
}
