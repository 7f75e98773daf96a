#![allow(dead_code)]

use fmtcheck::core::constraint::Params;
use fmtcheck::core::{VerificationReport, Verifier};
use serde::Deserialize;

pub const CORPUS: &str = include_str!("../data/verifier_corpus.json");

#[derive(Debug, Deserialize)]
pub struct Case {
    pub verifier: String,
    pub params: Params,
    pub response: String,
    pub expect: bool,
}

#[derive(Debug, Deserialize)]
pub struct CheckSpec {
    pub verifier: String,
    pub params: Params,
}

#[derive(Debug, Deserialize)]
pub struct LabeledResponse {
    pub label: String,
    pub expect: bool,
    pub text: String,
}

#[derive(Debug, Deserialize)]
pub struct InstructionCase {
    pub name: String,
    pub question: String,
    pub checks: Vec<CheckSpec>,
    pub responses: Vec<LabeledResponse>,
}

#[derive(Debug, Deserialize)]
pub struct Corpus {
    pub cases: Vec<Case>,
    pub instructions: Vec<InstructionCase>,
}

pub fn corpus() -> Corpus {
    serde_json::from_str(CORPUS).expect("corpus parses")
}

/// Labels the verifier disagrees with, one line each.
pub fn disagreements(corpus: &Corpus, verifier: &Verifier) -> Vec<String> {
    let mut out = Vec::new();
    for c in &corpus.cases {
        match verifier.check(&c.verifier, &c.params, &c.response) {
            Ok(v) if v.pass == c.expect => {}
            Ok(v) => out.push(format!("{} {:?} on {:?}: got {} ({})", c.verifier, c.params, c.response, v.pass, v.detail)),
            Err(e) => out.push(format!("{} {:?}: {e}", c.verifier, c.params)),
        }
    }
    for ins in &corpus.instructions {
        for r in &ins.responses {
            let verdicts = ins
                .checks
                .iter()
                .map(|c| verifier.check(&c.verifier, &c.params, &r.text))
                .collect::<Result<Vec<_>, _>>();
            match verdicts.map(VerificationReport::from_verdicts) {
                Ok(rep) if rep.aggregate == r.expect => {}
                Ok(rep) => out.push(format!(
                    "{} / {}: got {} ({:?})",
                    ins.name,
                    r.label,
                    rep.aggregate,
                    rep.per_constraint.iter().map(|v| v.detail.as_str()).collect::<Vec<_>>()
                )),
                Err(e) => out.push(format!("{} / {}: {e}", ins.name, r.label)),
            }
        }
    }
    out
}
