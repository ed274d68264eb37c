//! On-disk run directory.
//!
//! ```text
//! <run>/
//!   script.json               copy of the story script
//!   config.toml               effective run configuration
//!   story.json                run index (status, fingerprint, shot list)
//!   refs/ref_NNN.png          reference images admitted to memory
//!   bank/initial.json         memory before the first shot
//!   bank/after_shot_NNN.json  memory after each shot
//!   shots/shot_NNN/frame_NNN.png
//!   shots/shot_NNN/shot.json  per-shot record
//! ```
//!
//! Frames are PNG, so reloading a run reproduces every frame bit for bit.
//! All paths inside manifests are relative to the run root and may not
//! escape it.

use std::collections::HashMap;
use std::path::{Component, Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bank::{BankConfig, BankError, MemoryBank, MemoryFrame, REFERENCE_SHOT};
use crate::embedding::FrameEmbedding;
use crate::frame::{Frame, FrameDigest, FrameError};
use crate::pipeline::{PlanRecord, ShotResult, StoryResult};
use crate::script::{parse_script, ScriptError, StoryScript};

pub const FORMAT_VERSION: u32 = 1;
pub const INDEX_FILE: &str = "story.json";
pub const SCRIPT_FILE: &str = "script.json";
pub const CONFIG_FILE: &str = "config.toml";
pub const ERROR_FILE: &str = "error.json";

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("corrupt manifest: {0}")]
    Corrupt(String),
    #[error("run is incomplete: {completed} of {total} shots")]
    Incomplete { completed: usize, total: usize },
    #[error(transparent)]
    Frame(#[from] FrameError),
    #[error(transparent)]
    Bank(#[from] BankError),
    #[error(transparent)]
    Script(#[from] ScriptError),
}

fn corrupt(msg: impl Into<String>) -> ManifestError {
    ManifestError::Corrupt(msg.into())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Partial,
    Complete,
    Failed,
}

/// Machine-readable failure record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorRecord {
    pub kind: String,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shot: Option<usize>,
    pub exit_code: i32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StoryIndex {
    pub format_version: u32,
    pub config_fingerprint: String,
    pub total_shots: usize,
    pub completed_shots: usize,
    pub status: RunStatus,
    pub reference_digests: Vec<FrameDigest>,
    pub initial_bank: String,
    pub shots: Vec<ShotEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<ErrorRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShotEntry {
    pub shot_index: usize,
    pub record: String,
    pub bank_after: String,
}

impl StoryIndex {
    pub fn decode(bytes: &[u8]) -> Result<Self, ManifestError> {
        let index: Self = serde_json::from_slice(bytes).map_err(|e| corrupt(e.to_string()))?;
        if index.format_version != FORMAT_VERSION {
            return Err(corrupt(format!(
                "unsupported format_version {}",
                index.format_version
            )));
        }
        if index.completed_shots != index.shots.len() || index.completed_shots > index.total_shots {
            return Err(corrupt("shot counts are inconsistent"));
        }
        if index.status == RunStatus::Complete && index.completed_shots != index.total_shots {
            return Err(corrupt("complete run with missing shots"));
        }
        check_relative(&index.initial_bank)?;
        for (k, entry) in index.shots.iter().enumerate() {
            if entry.shot_index != k {
                return Err(corrupt(format!(
                    "shot entry {k} has index {}",
                    entry.shot_index
                )));
            }
            check_relative(&entry.record)?;
            check_relative(&entry.bank_after)?;
        }
        Ok(index)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameFile {
    pub path: String,
    pub digest: FrameDigest,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShotRecord {
    pub shot_index: usize,
    pub seed_used: u64,
    pub frames: Vec<FrameFile>,
    pub frame_embeddings: Vec<FrameEmbedding>,
    pub video_embedding: FrameEmbedding,
    pub semantic_keyframes: Vec<usize>,
    pub keyframe_scores: Vec<f64>,
    pub keyframes_selected: Vec<usize>,
    pub plan: PlanRecord,
}

impl ShotRecord {
    pub fn decode(bytes: &[u8]) -> Result<Self, ManifestError> {
        let r: Self = serde_json::from_slice(bytes).map_err(|e| corrupt(e.to_string()))?;
        if r.frames.is_empty() || r.frames.len() != r.frame_embeddings.len() {
            return Err(corrupt("frame and embedding counts differ"));
        }
        if r.semantic_keyframes.len() != r.keyframe_scores.len() {
            return Err(corrupt("keyframe scores do not match selection"));
        }
        if r.semantic_keyframes
            .iter()
            .chain(&r.keyframes_selected)
            .any(|&i| i >= r.frames.len())
        {
            return Err(corrupt("keyframe index out of range"));
        }
        for f in &r.frames {
            check_relative(&f.path)?;
        }
        Ok(r)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BankRecord {
    pub path: String,
    pub digest: FrameDigest,
    pub embedding: FrameEmbedding,
    #[serde(default)]
    pub aesthetic_score: Option<f64>,
    pub source_shot: i64,
    pub source_frame: usize,
    pub is_sink: bool,
    pub insertion_seq: u64,
}

/// Serialized memory bank.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BankManifest {
    pub format_version: u32,
    pub config: BankConfig,
    pub next_seq: u64,
    pub frames: Vec<BankRecord>,
}

impl BankManifest {
    pub fn from_bank(bank: &MemoryBank) -> Self {
        Self {
            format_version: FORMAT_VERSION,
            config: bank.config().clone(),
            next_seq: bank.next_seq(),
            frames: bank
                .frames()
                .iter()
                .map(|f| BankRecord {
                    path: memory_frame_path(f.source_shot, f.source_frame),
                    digest: f.frame.digest(),
                    embedding: f.embedding.clone(),
                    aesthetic_score: f.aesthetic_score,
                    source_shot: f.source_shot,
                    source_frame: f.source_frame,
                    is_sink: f.is_sink,
                    insertion_seq: f.insertion_seq,
                })
                .collect(),
        }
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, ManifestError> {
        let m: Self = serde_json::from_slice(bytes).map_err(|e| corrupt(e.to_string()))?;
        if m.format_version != FORMAT_VERSION {
            return Err(corrupt(format!(
                "unsupported format_version {}",
                m.format_version
            )));
        }
        m.config.validate()?;
        if m.frames.len() > m.config.capacity {
            return Err(corrupt("more frames than capacity"));
        }
        for r in &m.frames {
            check_relative(&r.path)?;
            if r.source_shot < REFERENCE_SHOT {
                return Err(corrupt(format!("invalid source_shot {}", r.source_shot)));
            }
        }
        Ok(m)
    }

    /// Rebuilds the bank, fetching each frame through `resolve` and checking
    /// its digest.
    pub fn into_bank(
        self,
        mut resolve: impl FnMut(&str, FrameDigest) -> Result<Frame, ManifestError>,
    ) -> Result<MemoryBank, ManifestError> {
        let mut frames = Vec::with_capacity(self.frames.len());
        for r in self.frames {
            let frame = resolve(&r.path, r.digest)?;
            if frame.digest() != r.digest {
                return Err(corrupt(format!(
                    "frame {} does not match its digest",
                    r.path
                )));
            }
            frames.push(MemoryFrame {
                frame,
                embedding: r.embedding,
                aesthetic_score: r.aesthetic_score,
                source_shot: r.source_shot,
                source_frame: r.source_frame,
                is_sink: r.is_sink,
                insertion_seq: r.insertion_seq,
            });
        }
        Ok(MemoryBank::from_parts(self.config, frames, self.next_seq)?)
    }
}

/// Rejects absolute paths and parent-directory components.
pub fn check_relative(path: &str) -> Result<(), ManifestError> {
    let p = Path::new(path);
    if path.is_empty()
        || !p
            .components()
            .all(|c| matches!(c, Component::Normal(_) | Component::CurDir))
    {
        return Err(corrupt(format!("path {path:?} escapes the run directory")));
    }
    Ok(())
}

pub fn shot_dir(shot: usize) -> String {
    format!("shots/shot_{shot:03}")
}

pub fn frame_path(shot: usize, frame: usize) -> String {
    format!("shots/shot_{shot:03}/frame_{frame:03}.png")
}

pub fn reference_path(index: usize) -> String {
    format!("refs/ref_{index:03}.png")
}

pub fn memory_frame_path(source_shot: i64, source_frame: usize) -> String {
    if source_shot == REFERENCE_SHOT {
        reference_path(source_frame)
    } else {
        frame_path(source_shot as usize, source_frame)
    }
}

fn shot_record_path(shot: usize) -> String {
    format!("{}/shot.json", shot_dir(shot))
}

fn bank_after_path(shot: usize) -> String {
    format!("bank/after_shot_{shot:03}.json")
}

const INITIAL_BANK: &str = "bank/initial.json";

/// A run directory on disk.
#[derive(Debug, Clone)]
pub struct RunDir {
    root: PathBuf,
}

impl RunDir {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path(&self, relative: &str) -> PathBuf {
        self.root.join(relative)
    }

    fn io<T>(&self, path: &Path, r: std::io::Result<T>) -> Result<T, ManifestError> {
        r.map_err(|source| ManifestError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn read(&self, relative: &str) -> Result<Vec<u8>, ManifestError> {
        check_relative(relative)?;
        let p = self.path(relative);
        self.io(&p, std::fs::read(&p))
    }

    /// Writes via a temporary file and rename.
    pub fn write(&self, relative: &str, bytes: &[u8]) -> Result<(), ManifestError> {
        let p = self.path(relative);
        if let Some(parent) = p.parent() {
            self.io(parent, std::fs::create_dir_all(parent))?;
        }
        let tmp = p.with_extension("tmp");
        self.io(&tmp, std::fs::write(&tmp, bytes))?;
        self.io(&p, std::fs::rename(&tmp, &p))
    }

    fn write_json<T: Serialize>(&self, relative: &str, value: &T) -> Result<(), ManifestError> {
        let mut bytes = serde_json::to_vec_pretty(value).expect("manifest serialization");
        bytes.push(b'\n');
        self.write(relative, &bytes)
    }

    fn write_frame(&self, relative: &str, frame: &Frame) -> Result<(), ManifestError> {
        self.write(relative, &frame.encode_png()?)
    }

    pub fn exists(&self) -> bool {
        self.path(INDEX_FILE).exists()
    }

    pub fn write_script(&self, script: &StoryScript) -> Result<(), ManifestError> {
        self.write(SCRIPT_FILE, script.to_json_string().as_bytes())
    }

    pub fn load_script(&self) -> Result<StoryScript, ManifestError> {
        let bytes = self.read(SCRIPT_FILE)?;
        let text = String::from_utf8(bytes).map_err(|_| corrupt("script is not UTF-8"))?;
        Ok(parse_script(&text)?)
    }

    pub fn write_config(&self, toml_text: &str) -> Result<(), ManifestError> {
        self.write(CONFIG_FILE, toml_text.as_bytes())
    }

    /// Writes everything in `story` not yet on disk and refreshes the index.
    pub fn persist(&self, story: &StoryResult) -> Result<(), ManifestError> {
        self.persist_with_status(story, None)
    }

    pub fn persist_with_status(
        &self,
        story: &StoryResult,
        error: Option<ErrorRecord>,
    ) -> Result<(), ManifestError> {
        for f in story.initial_bank.frames() {
            let rel = memory_frame_path(f.source_shot, f.source_frame);
            if !self.path(&rel).exists() {
                self.write_frame(&rel, &f.frame)?;
            }
        }
        if !self.path(INITIAL_BANK).exists() {
            self.write_json(INITIAL_BANK, &BankManifest::from_bank(&story.initial_bank))?;
        }
        let mut entries = Vec::with_capacity(story.shots.len());
        for (shot, bank) in story.shots.iter().zip(&story.bank_history) {
            let i = shot.shot_index;
            let record_path = shot_record_path(i);
            if !self.path(&record_path).exists() {
                let mut files = Vec::with_capacity(shot.frames.len());
                for (k, frame) in shot.frames.iter().enumerate() {
                    let rel = frame_path(i, k);
                    self.write_frame(&rel, frame)?;
                    files.push(FrameFile {
                        path: rel,
                        digest: frame.digest(),
                    });
                }
                self.write_json(&bank_after_path(i), &BankManifest::from_bank(bank))?;
                let record = ShotRecord {
                    shot_index: i,
                    seed_used: shot.seed_used,
                    frames: files,
                    frame_embeddings: shot.frame_embeddings.clone(),
                    video_embedding: shot.video_embedding.clone(),
                    semantic_keyframes: shot.semantic_keyframes.clone(),
                    keyframe_scores: shot.keyframe_scores.clone(),
                    keyframes_selected: shot.keyframes_selected.clone(),
                    plan: shot.plan.clone(),
                };
                // Record last: its presence marks the shot as fully written.
                self.write_json(&record_path, &record)?;
            }
            entries.push(ShotEntry {
                shot_index: i,
                record: record_path,
                bank_after: bank_after_path(i),
            });
        }
        let status = if error.is_some() {
            RunStatus::Failed
        } else if story.is_complete() {
            RunStatus::Complete
        } else {
            RunStatus::Partial
        };
        let index = StoryIndex {
            format_version: FORMAT_VERSION,
            config_fingerprint: story.config_fingerprint.clone(),
            total_shots: story.total_shots,
            completed_shots: story.shots.len(),
            status,
            reference_digests: story.reference_digests.clone(),
            initial_bank: INITIAL_BANK.to_string(),
            shots: entries,
            error: error.clone(),
        };
        self.write_json(INDEX_FILE, &index)?;
        match error {
            Some(e) => self.write_json(ERROR_FILE, &e),
            None => {
                let p = self.path(ERROR_FILE);
                if p.exists() {
                    self.io(&p, std::fs::remove_file(&p))?;
                }
                Ok(())
            }
        }
    }

    pub fn load_index(&self) -> Result<StoryIndex, ManifestError> {
        StoryIndex::decode(&self.read(INDEX_FILE)?)
    }

    fn load_frame(&self, relative: &str, digest: FrameDigest) -> Result<Frame, ManifestError> {
        let frame = Frame::decode_png(&self.read(relative)?)?;
        if frame.digest() != digest {
            return Err(corrupt(format!(
                "frame {relative} does not match its digest"
            )));
        }
        Ok(frame)
    }

    fn load_bank(
        &self,
        relative: &str,
        cache: &mut HashMap<FrameDigest, Frame>,
    ) -> Result<MemoryBank, ManifestError> {
        let manifest = BankManifest::decode(&self.read(relative)?)?;
        manifest.into_bank(|path, digest| {
            if let Some(f) = cache.get(&digest) {
                return Ok(f.clone());
            }
            let f = self.load_frame(path, digest)?;
            cache.insert(digest, f.clone());
            Ok(f)
        })
    }

    /// Bank state after `shot`.
    pub fn bank_after(&self, shot: usize) -> Result<MemoryBank, ManifestError> {
        let index = self.load_index()?;
        let entry = index.shots.get(shot).ok_or_else(|| {
            corrupt(format!(
                "shot {shot} not recorded ({} shots)",
                index.shots.len()
            ))
        })?;
        self.load_bank(&entry.bank_after, &mut HashMap::new())
    }

    /// Loads the (possibly partial) run.
    pub fn load(&self) -> Result<StoryResult, ManifestError> {
        let index = self.load_index()?;
        let mut cache = HashMap::new();
        let initial_bank = self.load_bank(&index.initial_bank, &mut cache)?;
        let mut shots = Vec::with_capacity(index.shots.len());
        let mut bank_history = Vec::with_capacity(index.shots.len());
        for entry in &index.shots {
            let record = ShotRecord::decode(&self.read(&entry.record)?)?;
            if record.shot_index != entry.shot_index {
                return Err(corrupt(format!(
                    "{} has the wrong shot index",
                    entry.record
                )));
            }
            let mut frames = Vec::with_capacity(record.frames.len());
            for f in &record.frames {
                let frame = self.load_frame(&f.path, f.digest)?;
                cache.insert(frame.digest(), frame.clone());
                frames.push(frame);
            }
            shots.push(ShotResult {
                shot_index: record.shot_index,
                frames,
                frame_embeddings: record.frame_embeddings,
                video_embedding: record.video_embedding,
                semantic_keyframes: record.semantic_keyframes,
                keyframe_scores: record.keyframe_scores,
                keyframes_selected: record.keyframes_selected,
                seed_used: record.seed_used,
                plan: record.plan,
            });
            bank_history.push(self.load_bank(&entry.bank_after, &mut cache)?);
        }
        Ok(StoryResult {
            final_bank: bank_history
                .last()
                .cloned()
                .unwrap_or_else(|| initial_bank.clone()),
            initial_bank,
            shots,
            bank_history,
            config_fingerprint: index.config_fingerprint,
            reference_digests: index.reference_digests,
            total_shots: index.total_shots,
        })
    }

    /// Loads a run that must be complete.
    pub fn load_complete(&self) -> Result<StoryResult, ManifestError> {
        let story = self.load()?;
        if !story.is_complete() {
            return Err(ManifestError::Incomplete {
                completed: story.shots.len(),
                total: story.total_shots,
            });
        }
        Ok(story)
    }
}
