//! Built-in verification procedures and the registry that binds them to
//! constraint instances.

mod checks;
pub mod lang;
pub mod text;

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::sync::Arc;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::constraint::{ConstraintInstance, FormatInstruction, MetaConstraint, ParamValue, Params};

pub use checks::{is_passive_sentence, strip_fence, word_limit_soft, CaseStyle, Check, NumberPattern, Voice};
pub use lang::Language;

/// Outcome of one checker on one response.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintVerdict {
    pub pass: bool,
    pub soft: f64,
    pub detail: String,
}

impl ConstraintVerdict {
    pub fn passed(detail: impl Into<String>) -> Self {
        ConstraintVerdict {
            pass: true,
            soft: 1.0,
            detail: detail.into(),
        }
    }

    /// A failing verdict; `soft` is clamped into `[0, 1)`.
    pub fn failed(soft: f64, detail: impl Into<String>) -> Self {
        let soft = if soft.is_nan() { 0.0 } else { soft.clamp(0.0, 1.0) };
        ConstraintVerdict {
            pass: false,
            soft: if soft >= 1.0 { 0.0 } else { soft },
            detail: detail.into(),
        }
    }

    pub fn binary(pass: bool, detail: impl Into<String>) -> Self {
        if pass {
            Self::passed(detail)
        } else {
            Self::failed(0.0, detail)
        }
    }
}

/// Per-constraint verdicts of one response plus the aggregate indicator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub per_constraint: Vec<ConstraintVerdict>,
    /// The indicator `I`: true iff every constraint passed.
    pub aggregate: bool,
    pub aggregate_soft: f64,
}

impl VerificationReport {
    pub fn from_verdicts(per_constraint: Vec<ConstraintVerdict>) -> Self {
        let aggregate = per_constraint.iter().all(|v| v.pass);
        let aggregate_soft = if per_constraint.is_empty() {
            1.0
        } else {
            per_constraint.iter().map(|v| v.soft).sum::<f64>() / per_constraint.len() as f64
        };
        VerificationReport {
            per_constraint,
            aggregate,
            aggregate_soft,
        }
    }

    pub fn indicator(&self) -> u8 {
        u8::from(self.aggregate)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum VerifyError {
    #[error("constraint {0} is not in the library")]
    UnknownMeta(String),
    #[error("unknown verifier {0}")]
    UnknownVerifier(String),
    #[error("verifier {verifier}: parameter {param}: {problem}")]
    Param {
        verifier: String,
        param: String,
        problem: String,
    },
    #[error("external verifier: {0}")]
    External(String),
    #[error("verifier {0} is unavailable in this build")]
    Unsupported(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamKind {
    Int,
    Text,
    TextList,
}

#[derive(Debug, Clone, Copy)]
pub struct ParamSpec {
    pub name: &'static str,
    pub kind: ParamKind,
    pub required: bool,
}

const fn req(name: &'static str, kind: ParamKind) -> ParamSpec {
    ParamSpec {
        name,
        kind,
        required: true,
    }
}

const fn opt(name: &'static str, kind: ParamKind) -> ParamSpec {
    ParamSpec {
        name,
        kind,
        required: false,
    }
}

use ParamKind::{Int, Text, TextList};

/// Every registered verifier id with its parameter schema.
pub const REGISTRY: &[(&str, &[ParamSpec])] = &[
    ("word-count-max", &[req("limit", Int)]),
    ("word-count-range", &[req("lo", Int), req("hi", Int)]),
    ("json-wellformed", &[]),
    ("yaml-wellformed", &[]),
    ("paragraph-count-exact", &[req("n", Int)]),
    ("paragraph-count-max", &[req("n", Int)]),
    ("paragraph-structure", &[req("paragraphs", Int), req("max_sentences", Int)]),
    ("sentences-per-paragraph-max", &[req("n", Int)]),
    ("sentence-count-exact", &[req("n", Int)]),
    ("sentence-starts-with-letter", &[req("letter", Text)]),
    ("paragraph-ends-with-punct", &[req("mark", Text)]),
    ("language-is", &[req("lang", Text)]),
    ("keyword-include", &[req("keywords", TextList)]),
    ("keyword-exclude", &[req("keywords", TextList)]),
    ("number-format", &[req("pattern", Text)]),
    ("voice-heuristic", &[req("voice", Text)]),
    ("case-style", &[req("style", Text)]),
    ("punctuation-absent", &[req("mark", Text)]),
    ("external", &[req("command", Text), opt("args", TextList)]),
];

pub fn param_schema(verifier_id: &str) -> Option<&'static [ParamSpec]> {
    REGISTRY.iter().find(|(id, _)| *id == verifier_id).map(|(_, s)| *s)
}

pub fn verifier_ids() -> impl Iterator<Item = &'static str> {
    REGISTRY.iter().map(|(id, _)| *id)
}

/// Hook for the `external` verifier; the std companion implements it with a
/// whitelisted child process.
pub trait ExternalVerifier: Send + Sync {
    fn run(&self, command: &str, args: &[String], response: &str) -> Result<ConstraintVerdict, VerifyError>;
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerifyOptions {
    /// Strip one surrounding Markdown code fence before JSON/YAML parsing.
    #[serde(default)]
    pub lenient_fences: bool,
}

/// Resolves constraint instances to checkers and runs them.
#[derive(Clone)]
pub struct Verifier {
    bindings: BTreeMap<String, String>,
    options: VerifyOptions,
    patterns: checks::Patterns,
    external: Option<Arc<dyn ExternalVerifier>>,
}

impl core::fmt::Debug for Verifier {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("Verifier")
            .field("constraints", &self.bindings.len())
            .field("options", &self.options)
            .field("external", &self.external.is_some())
            .finish()
    }
}

impl Verifier {
    pub fn new(library: &[MetaConstraint]) -> Self {
        Verifier {
            bindings: library
                .iter()
                .map(|m| (m.id.clone(), m.verifier.id.clone()))
                .collect(),
            options: VerifyOptions::default(),
            patterns: checks::Patterns::new(),
            external: None,
        }
    }

    pub fn with_options(mut self, options: VerifyOptions) -> Self {
        self.options = options;
        self
    }

    pub fn with_external(mut self, external: Arc<dyn ExternalVerifier>) -> Self {
        self.external = Some(external);
        self
    }

    pub fn options(&self) -> VerifyOptions {
        self.options
    }

    /// Runs a checker by verifier id with already-bound parameters.
    pub fn check(&self, verifier_id: &str, params: &Params, response: &str) -> Result<ConstraintVerdict, VerifyError> {
        let check = Check::from_params(verifier_id, params)?;
        check.run(response, &checks::Context {
            options: self.options,
            patterns: &self.patterns,
            external: self.external.as_deref(),
        })
    }

    pub fn verify(&self, instance: &ConstraintInstance, response: &str) -> Result<ConstraintVerdict, VerifyError> {
        let verifier_id = self
            .bindings
            .get(&instance.meta_id)
            .ok_or_else(|| VerifyError::UnknownMeta(instance.meta_id.clone()))?;
        self.check(verifier_id, &instance.bound_params, response)
    }

    pub fn verify_all(&self, instruction: &FormatInstruction, response: &str) -> Result<VerificationReport, VerifyError> {
        let verdicts = instruction
            .instances
            .iter()
            .map(|inst| self.verify(inst, response))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(VerificationReport::from_verdicts(verdicts))
    }
}

pub(crate) fn param_error(verifier: &str, param: &str, problem: impl ToString) -> VerifyError {
    VerifyError::Param {
        verifier: verifier.to_string(),
        param: param.to_string(),
        problem: problem.to_string(),
    }
}

pub(crate) fn get<'p>(verifier: &str, params: &'p Params, name: &str) -> Result<&'p ParamValue, VerifyError> {
    params.get(name).ok_or_else(|| param_error(verifier, name, "missing"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn v(pass: bool, soft: f64) -> ConstraintVerdict {
        if pass {
            ConstraintVerdict::passed("")
        } else {
            ConstraintVerdict::failed(soft, "")
        }
    }

    #[test]
    fn report_aggregates() {
        let all = VerificationReport::from_verdicts(vec![v(true, 1.0), v(true, 1.0), v(true, 1.0)]);
        assert!(all.aggregate);
        assert_eq!(all.aggregate_soft, 1.0);

        let one_bad = VerificationReport::from_verdicts(vec![v(true, 1.0), v(false, 0.0), v(true, 1.0)]);
        assert!(!one_bad.aggregate);
        assert!((one_bad.aggregate_soft - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(one_bad.indicator(), 0);
    }

    #[test]
    fn failed_verdict_never_claims_full_score() {
        assert_eq!(ConstraintVerdict::failed(1.0, "").soft, 0.0);
        assert_eq!(ConstraintVerdict::failed(-3.0, "").soft, 0.0);
        assert_eq!(ConstraintVerdict::failed(f64::NAN, "").soft, 0.0);
    }

    #[test]
    fn registry_lookup() {
        assert!(param_schema("word-count-max").is_some());
        assert!(param_schema("nope").is_none());
        assert_eq!(verifier_ids().count(), REGISTRY.len());
    }
}
