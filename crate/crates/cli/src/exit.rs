//! Mapping from library errors to exit codes.

use std::fmt;

use shotmem::config::ConfigError;
use shotmem::eval::EvalError;
use shotmem::manifest::{ErrorRecord, ManifestError};
use shotmem::pipeline::PipelineError;
use shotmem::script::ScriptError;
use shotmem::selection::SelectionError;

pub const OTHER: i32 = 1;
pub const CONFIG: i32 = 3;
pub const SCRIPT: i32 = 4;
pub const BACKEND: i32 = 5;
pub const PROVIDER: i32 = 6;
pub const MANIFEST: i32 = 7;
pub const INDEX: i32 = 8;

/// Requested shot does not exist in the run.
#[derive(Debug)]
pub struct IndexOutOfRange {
    pub index: usize,
    pub len: usize,
}

impl fmt::Display for IndexOutOfRange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "shot index {} out of range (run has {} shots)",
            self.index, self.len
        )
    }
}

impl std::error::Error for IndexOutOfRange {}

/// A configuration problem detected by the CLI itself.
#[derive(Debug)]
pub struct UsageConfig(pub String);

impl fmt::Display for UsageConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageConfig {}

pub struct Class {
    pub code: i32,
    pub kind: &'static str,
    pub shot: Option<usize>,
}

fn class(code: i32, kind: &'static str, shot: Option<usize>) -> Class {
    Class { code, kind, shot }
}

fn pipeline(e: &PipelineError) -> Class {
    match e {
        PipelineError::Config(_) | PipelineError::Conditioning(_) | PipelineError::Bank(_) => {
            class(CONFIG, "config", None)
        }
        PipelineError::FingerprintMismatch { .. } => class(CONFIG, "fingerprint_mismatch", None),
        PipelineError::Backend { shot, .. } => class(BACKEND, "backend", Some(*shot)),
        PipelineError::Provider { shot, .. } => class(PROVIDER, "provider", *shot),
        PipelineError::Selection {
            shot,
            source: SelectionError::Provider(_),
        } => class(PROVIDER, "provider", Some(*shot)),
        PipelineError::Selection { shot, .. } => class(OTHER, "selection", Some(*shot)),
        PipelineError::Persist(_) => class(MANIFEST, "persist", None),
    }
}

/// Finds the most specific known error in the chain.
pub fn classify(err: &anyhow::Error) -> Class {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<PipelineError>() {
            return pipeline(e);
        }
        if cause.downcast_ref::<ConfigError>().is_some()
            || cause.downcast_ref::<UsageConfig>().is_some()
        {
            return class(CONFIG, "config", None);
        }
        if cause.downcast_ref::<ScriptError>().is_some() {
            return class(SCRIPT, "script", None);
        }
        if let Some(e) = cause.downcast_ref::<ManifestError>() {
            let kind = match e {
                ManifestError::Incomplete { .. } => "incomplete_manifest",
                _ => "manifest",
            };
            return class(MANIFEST, kind, None);
        }
        if let Some(e) = cause.downcast_ref::<EvalError>() {
            return match e {
                EvalError::Provider(_) => class(PROVIDER, "provider", None),
                _ => class(OTHER, "evaluation", None),
            };
        }
        if cause.downcast_ref::<IndexOutOfRange>().is_some() {
            return class(INDEX, "index_out_of_range", None);
        }
    }
    class(OTHER, "other", None)
}

/// The error chain joined with `: `, skipping causes whose text the previous
/// message already includes.
pub fn describe(err: &anyhow::Error) -> String {
    let mut out = String::new();
    for cause in err.chain() {
        let text = cause.to_string();
        if out.contains(&text) {
            continue;
        }
        if !out.is_empty() {
            out.push_str(": ");
        }
        out.push_str(&text);
    }
    out
}

pub fn record(err: &anyhow::Error) -> ErrorRecord {
    let c = classify(err);
    ErrorRecord {
        kind: c.kind.to_string(),
        message: describe(err),
        shot: c.shot,
        exit_code: c.code,
    }
}
