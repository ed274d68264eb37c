//! Run configuration, read from TOML.
//!
//! ```toml
//! script = "story.json"
//! out = "runs/street"
//! references = ["refs/hero.png"]
//!
//! [backend]
//! kind = "mock"          # or "remote", with url = "http://host:port"
//! consistency = 0.5
//!
//! [providers]
//! kind = "mock"          # or "sidecar", with url = "http://host:port"
//!
//! [pipeline]
//! seed = 42
//! use_memory = true
//! shape = { c = 16, f = 5, h = 32, w = 32, s = 4 }
//!
//! [pipeline.bank]
//! sink_size = 3
//! capacity = 10
//!
//! [evaluation]
//! top_k = 10
//! ```
//!
//! Relative paths are resolved against the directory of the config file.
//! Endpoint URLs left out of the file fall back to `SHOTMEM_BACKEND_URL`
//! and `SHOTMEM_PROVIDER_URL`.

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{GenerationBackend, MockBackend, RemoteBackend};
use crate::eval::EvalConfig;
use crate::pipeline::PipelineConfig;
use crate::provider::http::SidecarClient;
use crate::provider::Providers;

pub const BACKEND_URL_ENV: &str = "SHOTMEM_BACKEND_URL";
pub const PROVIDER_URL_ENV: &str = "SHOTMEM_PROVIDER_URL";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error("{0} endpoint URL not set (config file or {1})")]
    MissingEndpoint(&'static str, &'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    Mock,
    Remote,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackendConfig {
    pub kind: BackendKind,
    pub url: Option<String>,
    pub timeout_secs: u64,
    /// Mock only: weight of memory statistics in generated frames.
    pub consistency: f64,
    /// Mock only: maximum in-shot translation.
    pub motion: f64,
}

impl Default for BackendConfig {
    fn default() -> Self {
        let mock = MockBackend::default();
        Self {
            kind: BackendKind::Mock,
            url: None,
            timeout_secs: 600,
            consistency: mock.consistency,
            motion: mock.motion,
        }
    }
}

impl BackendConfig {
    /// Applies a command-line value: `mock`, `remote`, or an endpoint URL.
    pub fn apply_flag(&mut self, value: &str) -> Result<(), ConfigError> {
        match value {
            "mock" => self.kind = BackendKind::Mock,
            "remote" => self.kind = BackendKind::Remote,
            url if is_url(url) => {
                self.kind = BackendKind::Remote;
                self.url = Some(url.to_string());
            }
            other => return Err(ConfigError::Invalid(format!("unknown backend {other:?}"))),
        }
        Ok(())
    }

    pub fn build(&self) -> Result<Arc<dyn GenerationBackend>, ConfigError> {
        Ok(match self.kind {
            BackendKind::Mock => Arc::new(MockBackend {
                consistency: self.consistency,
                motion: self.motion,
            }),
            BackendKind::Remote => {
                let url = endpoint(&self.url, "backend", BACKEND_URL_ENV)?;
                Arc::new(RemoteBackend::with_timeout(
                    &url,
                    Duration::from_secs(self.timeout_secs),
                ))
            }
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProviderKind {
    Mock,
    Sidecar,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProviderConfig {
    pub kind: ProviderKind,
    pub url: Option<String>,
    pub timeout_secs: u64,
}

impl Default for ProviderConfig {
    fn default() -> Self {
        Self {
            kind: ProviderKind::Mock,
            url: None,
            timeout_secs: 120,
        }
    }
}

impl ProviderConfig {
    /// Applies a command-line value: `mock`, `sidecar`, or an endpoint URL.
    pub fn apply_flag(&mut self, value: &str) -> Result<(), ConfigError> {
        match value {
            "mock" => self.kind = ProviderKind::Mock,
            "sidecar" => self.kind = ProviderKind::Sidecar,
            url if is_url(url) => {
                self.kind = ProviderKind::Sidecar;
                self.url = Some(url.to_string());
            }
            other => return Err(ConfigError::Invalid(format!("unknown providers {other:?}"))),
        }
        Ok(())
    }

    pub fn build(&self) -> Result<Providers, ConfigError> {
        Ok(match self.kind {
            ProviderKind::Mock => Providers::mock(),
            ProviderKind::Sidecar => {
                let url = endpoint(&self.url, "provider", PROVIDER_URL_ENV)?;
                let c = Arc::new(SidecarClient::with_timeout(
                    &url,
                    Duration::from_secs(self.timeout_secs),
                ));
                Providers::new(c.clone(), c)
            }
        })
    }
}

fn is_url(s: &str) -> bool {
    s.starts_with("http://") || s.starts_with("https://")
}

fn endpoint(
    url: &Option<String>,
    what: &'static str,
    var: &'static str,
) -> Result<String, ConfigError> {
    if let Some(u) = url {
        return Ok(u.clone());
    }
    match std::env::var(var) {
        Ok(u) if !u.is_empty() => Ok(u),
        _ => Err(ConfigError::MissingEndpoint(what, var)),
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub script: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub references: Vec<PathBuf>,
    pub backend: BackendConfig,
    pub providers: ProviderConfig,
    pub pipeline: PipelineConfig,
    pub evaluation: EvalConfig,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: Self = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config file and resolves its relative paths against the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let mut cfg = Self::from_toml(&text)?;
        if let Some(dir) = path.parent() {
            cfg.rebase(dir);
        }
        Ok(cfg)
    }

    pub fn rebase(&mut self, dir: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = dir.join(&*p);
            }
        };
        self.script.as_mut().map(fix);
        self.out.as_mut().map(fix);
        self.references.iter_mut().for_each(fix);
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serialization")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.pipeline
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.evaluation.validate().map_err(ConfigError::Invalid)?;
        let b = &self.backend;
        if !(0.0..=1.0).contains(&b.consistency) || !(0.0..=1.0).contains(&b.motion) {
            return Err(ConfigError::Invalid(
                "backend consistency and motion must lie in [0, 1]".into(),
            ));
        }
        if b.timeout_secs == 0 || self.providers.timeout_secs == 0 {
            return Err(ConfigError::Invalid("timeouts must be positive".into()));
        }
        for url in [&b.url, &self.providers.url].into_iter().flatten() {
            if !is_url(url) {
                return Err(ConfigError::Invalid(format!("not an http(s) URL: {url}")));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_gives_defaults() {
        let cfg = RunConfig::from_toml("").unwrap();
        assert_eq!(cfg, RunConfig::default());
        assert_eq!(cfg.pipeline.bank.capacity, 10);
        assert_eq!(cfg.pipeline.bank.sink_size, 3);
    }

    #[test]
    fn round_trip() {
        let mut cfg = RunConfig {
            script: Some("s.json".into()),
            ..RunConfig::default()
        };
        cfg.pipeline.seed = 7;
        cfg.pipeline.shot_frames.insert(2, 9);
        cfg.backend.url = Some("http://localhost:9000".into());
        let back = RunConfig::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn rejects_unknown_and_invalid() {
        assert!(matches!(
            RunConfig::from_toml("bogus = 1"),
            Err(ConfigError::Parse(_))
        ));
        assert!(matches!(
            RunConfig::from_toml("[pipeline.bank]\ncapacity = 2"),
            Err(ConfigError::Invalid(_))
        ));
        assert!(RunConfig::from_toml("[backend]\nconsistency = 1.5").is_err());
        assert!(RunConfig::from_toml("[providers]\nurl = \"ftp://x\"").is_err());
    }

    #[test]
    fn flags() {
        let mut b = BackendConfig::default();
        b.apply_flag("http://h:1").unwrap();
        assert_eq!(b.kind, BackendKind::Remote);
        assert_eq!(b.url.as_deref(), Some("http://h:1"));
        assert!(b.apply_flag("gpu").is_err());
        let mut p = ProviderConfig::default();
        p.apply_flag("sidecar").unwrap();
        assert_eq!(p.kind, ProviderKind::Sidecar);
    }

    #[test]
    fn relative_paths_follow_config_file() {
        let mut cfg =
            RunConfig::from_toml("script = \"a.json\"\nreferences = [\"/abs.png\", \"r.png\"]")
                .unwrap();
        cfg.rebase(Path::new("/cfg"));
        assert_eq!(cfg.script.unwrap(), PathBuf::from("/cfg/a.json"));
        assert_eq!(
            cfg.references,
            vec![PathBuf::from("/abs.png"), PathBuf::from("/cfg/r.png")]
        );
    }
}
