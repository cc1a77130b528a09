//! Tool configuration with layered precedence:
//! CLI flag > environment variable > config file > default.

use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::simplify::llm::{HttpLlm, LlmClient, LlmEndpointConfig, StubDirLlm, TransportError};
use crate::verify::builtin::{BuiltinBackend, Limits};
use crate::verify::external::{ExternalBackend, ExternalBackendConfig};
use crate::verify::OracleBackend;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendChoice {
    Builtin,
    External,
}

impl std::str::FromStr for BackendChoice {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "builtin" => Ok(BackendChoice::Builtin),
            "external" => Ok(BackendChoice::External),
            other => Err(format!("unknown backend `{other}` (builtin|external)")),
        }
    }
}

/// LLM transport selection.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum LlmSettings {
    /// Chat-completions endpoint.
    Http(LlmEndpointConfig),
    /// Canned responses from a directory keyed by prompt hash.
    Stub { dir: PathBuf },
    /// No LLM: simplification falls back to grading the normalized
    /// invariant itself.
    Off,
}

/// All pipeline knobs. Serialized verbatim into output manifests.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ToolConfig {
    pub backend: BackendChoice,
    /// Required when `backend` is `external`.
    pub external: Option<ExternalBackendConfig>,
    pub llm: LlmSettings,
    /// Verbosity threshold eta in characters.
    pub eta: usize,
    /// Simplification candidates per invariant (N).
    pub n_candidates: usize,
    /// Per-query verification timeout in seconds.
    pub timeout_secs: f64,
    /// Baseline timing runs (median taken).
    pub k_runs: usize,
    /// Split-check repetitions per grading (median t_v).
    pub grading_runs: usize,
    /// Easy/hard partition threshold on baseline seconds.
    pub hard_threshold_secs: f64,
    /// Worker pool size for instance-level parallelism.
    pub workers: usize,
    /// Seed for the train/validation split shuffle.
    pub seed: u64,
    /// Built-in backend limits.
    pub max_states: u64,
    pub max_steps: u64,
    /// Keep annotated query files (external backend).
    pub keep_artifacts: bool,
}

impl Default for ToolConfig {
    fn default() -> Self {
        ToolConfig {
            backend: BackendChoice::Builtin,
            external: None,
            llm: LlmSettings::Off,
            eta: 64,
            n_candidates: 4,
            timeout_secs: 600.0,
            k_runs: 3,
            grading_runs: 1,
            hard_threshold_secs: 15.0,
            workers: 4,
            seed: 20250809,
            max_states: 1_000_000,
            max_steps: 1_000_000,
            keep_artifacts: false,
        }
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("cannot parse config {path}: {source}")]
    Parse {
        path: PathBuf,
        source: serde_json::Error,
    },
    #[error("bad environment value for {var}: {value}")]
    BadEnv { var: String, value: String },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

impl ToolConfig {
    /// Load from a JSON file over the defaults.
    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        serde_json::from_str(&text).map_err(|source| ConfigError::Parse {
            path: path.to_path_buf(),
            source,
        })
    }

    /// Apply `INVKIT_*` environment overrides.
    pub fn apply_env(&mut self) -> Result<(), ConfigError> {
        fn set<T: std::str::FromStr>(var: &str, slot: &mut T) -> Result<(), ConfigError> {
            if let Ok(value) = std::env::var(var) {
                *slot = value.parse().map_err(|_| ConfigError::BadEnv {
                    var: var.to_string(),
                    value,
                })?;
            }
            Ok(())
        }
        set("INVKIT_BACKEND", &mut self.backend)?;
        set("INVKIT_ETA", &mut self.eta)?;
        set("INVKIT_N_CANDIDATES", &mut self.n_candidates)?;
        set("INVKIT_TIMEOUT_SECS", &mut self.timeout_secs)?;
        set("INVKIT_K_RUNS", &mut self.k_runs)?;
        set("INVKIT_GRADING_RUNS", &mut self.grading_runs)?;
        set("INVKIT_HARD_THRESHOLD_SECS", &mut self.hard_threshold_secs)?;
        set("INVKIT_WORKERS", &mut self.workers)?;
        set("INVKIT_SEED", &mut self.seed)?;
        set("INVKIT_MAX_STATES", &mut self.max_states)?;
        set("INVKIT_MAX_STEPS", &mut self.max_steps)?;
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let positive = [
            ("eta", self.eta as f64),
            ("n_candidates", self.n_candidates as f64),
            ("timeout_secs", self.timeout_secs),
            ("k_runs", self.k_runs as f64),
            ("grading_runs", self.grading_runs as f64),
            ("hard_threshold_secs", self.hard_threshold_secs),
            ("workers", self.workers as f64),
            ("max_states", self.max_states as f64),
            ("max_steps", self.max_steps as f64),
        ];
        for (name, value) in positive {
            if value <= 0.0 {
                return Err(ConfigError::Invalid(format!("{name} must be positive")));
            }
        }
        if self.backend == BackendChoice::External && self.external.is_none() {
            return Err(ConfigError::Invalid(
                "backend `external` needs an `external` config section".to_string(),
            ));
        }
        Ok(())
    }

    pub fn timeout(&self) -> Duration {
        Duration::from_secs_f64(self.timeout_secs)
    }

    /// Instantiate the configured verification backend.
    pub fn make_backend(&self) -> Result<Box<dyn OracleBackend>, ConfigError> {
        match self.backend {
            BackendChoice::Builtin => Ok(Box::new(BuiltinBackend {
                limits: Limits {
                    max_states: self.max_states,
                    max_steps: self.max_steps,
                },
            })),
            BackendChoice::External => {
                let mut cfg = self
                    .external
                    .clone()
                    .ok_or_else(|| ConfigError::Invalid("missing external config".to_string()))?;
                cfg.keep_artifacts |= self.keep_artifacts;
                ExternalBackend::new(cfg)
                    .map(|b| Box::new(b) as Box<dyn OracleBackend>)
                    .map_err(ConfigError::Invalid)
            }
        }
    }

    /// Instantiate the configured LLM client.
    pub fn make_llm(&self) -> Result<Box<dyn LlmClient>, ConfigError> {
        match &self.llm {
            LlmSettings::Http(cfg) => HttpLlm::new(cfg.clone())
                .map(|c| Box::new(c) as Box<dyn LlmClient>)
                .map_err(|e| ConfigError::Invalid(e.to_string())),
            LlmSettings::Stub { dir } => Ok(Box::new(StubDirLlm { dir: dir.clone() })),
            LlmSettings::Off => Ok(Box::new(OffLlm)),
        }
    }
}

/// Placeholder client for runs without an LLM; every call fails, which
/// the simplification step treats as an empty candidate set.
struct OffLlm;

impl LlmClient for OffLlm {
    fn complete(&self, _: &str, _: &str, _: usize) -> Result<Vec<String>, TransportError> {
        Err(TransportError(
            "no LLM configured (llm.mode = off)".to_string(),
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_reflect_protocol_constants() {
        let cfg = ToolConfig::default();
        assert_eq!(cfg.n_candidates, 4);
        assert_eq!(cfg.timeout_secs, 600.0);
        assert_eq!(cfg.k_runs, 3);
        assert_eq!(cfg.hard_threshold_secs, 15.0);
        assert_eq!(cfg.eta, 64);
        assert!(cfg.validate().is_ok());
    }

    #[test]
    fn json_round_trip_with_partial_file() {
        let parsed: ToolConfig =
            serde_json::from_str(r#"{"eta": 80, "llm": {"mode": "stub", "dir": "/tmp/x"}}"#)
                .unwrap();
        assert_eq!(parsed.eta, 80);
        assert!(matches!(parsed.llm, LlmSettings::Stub { .. }));
        assert_eq!(parsed.n_candidates, 4);
    }

    #[test]
    fn external_backend_requires_section() {
        let cfg = ToolConfig {
            backend: BackendChoice::External,
            ..ToolConfig::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn zero_knobs_are_rejected() {
        let cfg = ToolConfig {
            workers: 0,
            ..ToolConfig::default()
        };
        assert!(cfg.validate().is_err());
    }
}
