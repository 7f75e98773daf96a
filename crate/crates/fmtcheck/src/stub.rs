//! Deterministic offline endpoint with a planted per-call success rate.
//!
//! Each call for `(instruction, round)` succeeds with probability
//! `pass_rate`, drawn from a generator seeded by the stub seed, the
//! instruction id and the round. A successful call returns at least one
//! compliant completion (the first) and each further completion is compliant
//! with probability 1/2; a failed call returns only non-compliant ones.

use fmtcheck_core::{MetaConstraint, Verifier};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::endpoint::{BackendError, ChatBackend, ChatRequest};
use crate::witness::ResponseWriter;

fn default_pass_rate() -> f64 {
    0.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StubConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_pass_rate")]
    pub pass_rate: f64,
    /// Return this text for every completion.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixed_response: Option<String>,
    /// Fail every call with this HTTP status.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fail_status: Option<u16>,
}

impl StubConfig {
    pub fn new(seed: u64, pass_rate: f64) -> Self {
        StubConfig {
            name: None,
            seed,
            pass_rate,
            fixed_response: None,
            fail_status: None,
        }
    }

    pub fn identity(&self) -> String {
        format!(
            "stub:{}(seed={},pass_rate={})",
            self.name.as_deref().unwrap_or("stub"),
            self.seed,
            self.pass_rate
        )
    }
}

pub struct StubBackend {
    config: StubConfig,
    writer: ResponseWriter,
}

impl StubBackend {
    pub fn new(config: StubConfig, library: &[MetaConstraint]) -> Self {
        StubBackend {
            writer: ResponseWriter::new(library, Verifier::new(library)),
            config,
        }
    }

    fn rng(&self, instruction_id: &str, round: u32) -> ChaCha8Rng {
        let mut h = Sha256::new();
        h.update(self.config.seed.to_le_bytes());
        h.update(instruction_id.as_bytes());
        h.update(round.to_le_bytes());
        let digest = h.finalize();
        let mut seed = [0u8; 32];
        seed.copy_from_slice(&digest);
        ChaCha8Rng::from_seed(seed)
    }
}

impl ChatBackend for StubBackend {
    fn complete(&self, request: &ChatRequest<'_>) -> Result<Vec<String>, BackendError> {
        if let Some(status) = self.config.fail_status {
            return Err(BackendError::from_status(status, "stub configured to fail"));
        }
        if let Some(text) = &self.config.fixed_response {
            return Ok(vec![text.clone(); request.n as usize]);
        }
        let ins = request.instruction;
        let mut rng = self.rng(&ins.id, request.round);
        let success = rng.random_bool(self.config.pass_rate);
        let level = ins.instances.len().max(1);
        Ok((0..request.n as usize)
            .map(|i| {
                let compliant = success && (i == 0 || rng.random_bool(0.5));
                let variant = rng.random_range(0..level * 5);
                if compliant {
                    self.writer
                        .compliant(ins, variant)
                        .unwrap_or_else(|| self.writer.violating(ins, variant))
                } else {
                    self.writer.violating(ins, variant)
                }
            })
            .collect())
    }

    fn identity(&self) -> String {
        self.config.identity()
    }
}
