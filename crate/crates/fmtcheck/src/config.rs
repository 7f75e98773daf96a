//! Run configuration shared by the command-line subcommands, and the run
//! manifest written next to every output.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use fmtcheck_core::annotate::DpoMode;
use fmtcheck_core::VerifyOptions;
use serde::{Deserialize, Serialize};

use crate::endpoint::EndpointConfig;
use crate::export::ExportSchema;
use crate::external::ExternalCommand;
use crate::io::{self, IoError, QuestionFormat};
use crate::orchestrate::SamplingConfig;
use crate::pipeline::{PipelineConfig, TrainerOverrides};
use crate::stub::StubConfig;

pub const MANIFEST_FILE: &str = "manifest.json";

/// Settings read from a JSON configuration file. Command-line flags take
/// precedence over every field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub library: Option<PathBuf>,
    pub questions: Option<PathBuf>,
    pub question_format: QuestionFormat,
    /// Generated and recorded in the manifest when unset.
    pub seed: Option<u64>,
    pub train_count: usize,
    pub test_count: usize,
    pub workers: usize,
    pub endpoint: Option<EndpointConfig>,
    pub sampling: SamplingConfig,
    pub eval_samples: u32,
    pub dpo_mode: DpoMode,
    pub schema: ExportSchema,
    pub trainer: TrainerOverrides,
    pub verify: VerifyOptions,
    pub external: BTreeMap<String, ExternalCommand>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let p = PipelineConfig::default();
        RunConfig {
            library: None,
            questions: None,
            question_format: p.question_format,
            seed: None,
            train_count: p.train_count,
            test_count: p.test_count,
            workers: p.workers,
            endpoint: None,
            sampling: p.sampling,
            eval_samples: 1,
            dpo_mode: p.dpo_mode,
            schema: p.schema,
            trainer: p.trainer,
            verify: p.verify,
            external: p.external,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig, IoError> {
        io::read_json(path)
    }

    /// The explicit seed, or a fresh random one written back into the config.
    pub fn resolve_seed(&mut self) -> u64 {
        *self.seed.get_or_insert_with(rand::random)
    }

    /// The configured endpoint, or a stub that passes half the time.
    pub fn endpoint_or_stub(&self) -> EndpointConfig {
        self.endpoint
            .clone()
            .unwrap_or_else(|| EndpointConfig::Stub(StubConfig::new(0, 0.5)))
    }

    pub fn pipeline(&self, seed: u64) -> PipelineConfig {
        PipelineConfig {
            library: self.library.clone(),
            questions: self.questions.clone(),
            question_format: self.question_format,
            seed,
            train_count: self.train_count,
            test_count: self.test_count,
            workers: self.workers,
            endpoint: self.endpoint_or_stub(),
            sampling: self.sampling.clone(),
            dpo_mode: self.dpo_mode,
            schema: self.schema,
            trainer: self.trainer.clone(),
            verify: self.verify,
            external: self.external.clone(),
        }
    }
}

/// Everything needed to repeat a run. Holds no timestamps, so repeating a
/// stub run reproduces every file byte for byte.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: Vec<String>,
    pub seed: Option<u64>,
    pub library_sha256: String,
    pub questions_sha256: Option<String>,
    pub endpoint: Option<String>,
    pub config: RunConfig,
}

impl RunManifest {
    pub fn new(command: Vec<String>, config: &RunConfig, library_sha256: String) -> Self {
        RunManifest {
            tool: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command,
            seed: config.seed,
            library_sha256,
            questions_sha256: None,
            endpoint: None,
            config: config.clone(),
        }
    }

    pub fn write(&self, dir: &Path) -> Result<(), IoError> {
        io::write_json(&dir.join(MANIFEST_FILE), self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seed_is_generated_once() {
        let mut c = RunConfig::default();
        let s = c.resolve_seed();
        assert_eq!(c.seed, Some(s));
        assert_eq!(c.resolve_seed(), s);
    }

    #[test]
    fn partial_file_uses_defaults() {
        let c: RunConfig = serde_json::from_str(r#"{"seed": 3, "sampling": {"k": 2}}"#).unwrap();
        assert_eq!(c.seed, Some(3));
        assert_eq!(c.sampling.k, 2);
        assert_eq!(c.sampling.rounds, 4);
        assert!(serde_json::from_str::<RunConfig>(r#"{"sede": 3}"#).is_err());
    }

    #[test]
    fn credential_is_never_in_config() {
        let c: RunConfig = serde_json::from_str(
            r#"{"endpoint": {"kind": "openai", "base_url": "http://x", "model": "m", "api_key_env": "MY_KEY"}}"#,
        )
        .unwrap();
        let text = serde_json::to_string(&c).unwrap();
        assert!(text.contains("MY_KEY"));
        assert!(serde_json::from_str::<RunConfig>(r#"{"endpoint": {"kind": "openai", "base_url": "x", "model": "m", "api_key": "secret"}}"#).is_err());
    }
}
