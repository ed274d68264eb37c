//! Story scripts: parsing, validation and flattening into shots.
//!
//! The document format is JSON with the fields `story_name`,
//! `story_overview` and `scenes`; each scene carries `scene_num`,
//! `video_prompts` and a parallel `cut` array. Unknown fields (for example
//! `first_frame_prompts`) are kept as opaque metadata and written back out on
//! serialization, but nothing downstream reads them.

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

/// Shot counts outside this range produce a warning.
pub const TYPICAL_SHOT_RANGE: std::ops::RangeInclusive<usize> = 8..=12;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ScriptError {
    #[error("malformed document: {0}")]
    MalformedDocument(String),
    #[error("schema violation: {0}")]
    SchemaViolation(String),
    #[error("the first shot of the story must have cut == true")]
    CutFirstShotFalse,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoryScript {
    pub story_name: String,
    pub story_overview: String,
    pub scenes: Vec<Scene>,
    #[serde(flatten)]
    pub extra: Map<String, Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub scene_num: u32,
    pub video_prompts: Vec<String>,
    pub cut: Vec<bool>,
    #[serde(flatten)]
    pub extra: Map<String, Value>,
}

/// One shot of the flattened story.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShotSpec {
    pub global_index: usize,
    pub prompt: String,
    /// `true` for a hard cut, `false` to continue from the previous shot's
    /// last frame.
    pub is_cut: bool,
    pub scene_num: u32,
}

/// Parses and validates a story script from raw bytes.
pub fn parse_script_bytes(raw: &[u8]) -> Result<StoryScript, ScriptError> {
    let text = std::str::from_utf8(raw)
        .map_err(|e| ScriptError::MalformedDocument(format!("invalid UTF-8: {e}")))?;
    parse_script(text)
}

/// Parses and validates a story script.
pub fn parse_script(raw: &str) -> Result<StoryScript, ScriptError> {
    let value: Value =
        serde_json::from_str(raw).map_err(|e| ScriptError::MalformedDocument(e.to_string()))?;
    let script: StoryScript =
        serde_json::from_value(value).map_err(|e| ScriptError::SchemaViolation(e.to_string()))?;
    script.validate()?;
    for warning in script.warnings() {
        log::warn!("{warning}");
    }
    Ok(script)
}

impl StoryScript {
    pub fn validate(&self) -> Result<(), ScriptError> {
        if self.scenes.is_empty() {
            return Err(ScriptError::SchemaViolation("script has no scenes".into()));
        }
        let mut last_num = 0u32;
        for (i, scene) in self.scenes.iter().enumerate() {
            if scene.scene_num == 0 {
                return Err(ScriptError::SchemaViolation(format!(
                    "scene {i}: scene_num must be positive"
                )));
            }
            if scene.scene_num <= last_num {
                return Err(ScriptError::SchemaViolation(format!(
                    "scene {i}: scene_num {} does not increase (previous {last_num})",
                    scene.scene_num
                )));
            }
            last_num = scene.scene_num;
            if scene.video_prompts.is_empty() {
                return Err(ScriptError::SchemaViolation(format!(
                    "scene {} has no video prompts",
                    scene.scene_num
                )));
            }
            if scene.cut.len() != scene.video_prompts.len() {
                return Err(ScriptError::SchemaViolation(format!(
                    "scene {}: {} cut flags for {} prompts",
                    scene.scene_num,
                    scene.cut.len(),
                    scene.video_prompts.len()
                )));
            }
        }
        if !self.scenes[0].cut[0] {
            return Err(ScriptError::CutFirstShotFalse);
        }
        Ok(())
    }

    /// Non-fatal observations about the script.
    pub fn warnings(&self) -> Vec<String> {
        let n = self.shot_count();
        if TYPICAL_SHOT_RANGE.contains(&n) {
            Vec::new()
        } else {
            vec![format!(
                "story '{}' has {n} shots; benchmark stories have {}-{}",
                self.story_name,
                TYPICAL_SHOT_RANGE.start(),
                TYPICAL_SHOT_RANGE.end()
            )]
        }
    }

    pub fn shot_count(&self) -> usize {
        self.scenes.iter().map(|s| s.video_prompts.len()).sum()
    }

    /// Concatenates every scene's prompts in order.
    pub fn flatten_shots(&self) -> Vec<ShotSpec> {
        self.scenes
            .iter()
            .flat_map(|scene| {
                scene
                    .video_prompts
                    .iter()
                    .zip(&scene.cut)
                    .map(move |(prompt, &is_cut)| (scene.scene_num, prompt, is_cut))
            })
            .enumerate()
            .map(|(global_index, (scene_num, prompt, is_cut))| ShotSpec {
                global_index,
                prompt: prompt.clone(),
                is_cut,
                scene_num,
            })
            .collect()
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("script serialization is infallible")
    }
}

/// Free-function form of [`StoryScript::flatten_shots`].
pub fn flatten_shots(script: &StoryScript) -> Vec<ShotSpec> {
    script.flatten_shots()
}
