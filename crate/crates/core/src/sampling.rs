//! Sampled responses, the wrong-response demonstration prompt, and the
//! per-round bookkeeping of repeated sampling.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::verify::VerificationReport;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseRecord {
    pub instruction_id: String,
    pub round: u32,
    pub sample_index: u32,
    pub response: String,
    pub demo_used: bool,
    /// Transport gave up on this sample; `response` is empty.
    #[serde(default)]
    pub failed: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub report: Option<VerificationReport>,
}

impl ResponseRecord {
    pub fn key(&self) -> (&str, u32, u32) {
        (&self.instruction_id, self.round, self.sample_index)
    }

    pub fn passed(&self) -> bool {
        self.report.as_ref().is_some_and(|r| r.aggregate)
    }

    /// Annotated, delivered and non-compliant.
    pub fn is_wrong(&self) -> bool {
        !self.failed && self.report.as_ref().is_some_and(|r| !r.aggregate)
    }

    pub fn soft(&self) -> f64 {
        self.report.as_ref().map_or(0.0, |r| r.aggregate_soft)
    }
}

/// Orders records by `(instruction_id, round, sample_index)`.
pub fn sort_records(records: &mut [ResponseRecord]) {
    records.sort_by(|a, b| a.key().cmp(&b.key()));
}

/// Versioned wording of the one-shot wrong-response demonstration.
/// `{prompt}` and `{wrong_response}` are substituted.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DemoTemplate {
    pub version: String,
    pub text: String,
}

impl Default for DemoTemplate {
    fn default() -> Self {
        DemoTemplate {
            version: String::from("demo-v1"),
            text: String::from(
                "{prompt}\n\n\
                 Below is an earlier response to this instruction. It FAILED to satisfy the constraints above:\n\
                 <failed_response>\n{wrong_response}\n</failed_response>\n\n\
                 Do not repeat its mistakes. Answer the original instruction again and make sure the new \
                 response obeys every CONSTRAINT exactly.",
            ),
        }
    }
}

impl DemoTemplate {
    pub fn render(&self, prompt: &str, wrong_response: &str) -> String {
        // Single pass so that a response containing "{prompt}" stays verbatim.
        let mut out = String::with_capacity(self.text.len() + prompt.len() + wrong_response.len());
        let mut rest = self.text.as_str();
        loop {
            let next = [("{prompt}", prompt), ("{wrong_response}", wrong_response)]
                .into_iter()
                .filter_map(|(pat, val)| rest.find(pat).map(|i| (i, pat, val)))
                .min_by_key(|(i, _, _)| *i);
            match next {
                Some((i, pat, val)) => {
                    out.push_str(&rest[..i]);
                    out.push_str(val);
                    rest = &rest[i + pat.len()..];
                }
                None => {
                    out.push_str(rest);
                    return out;
                }
            }
        }
    }
}

pub fn build_demo_prompt(template: &DemoTemplate, prompt: &str, wrong_response: &str) -> String {
    template.render(prompt, wrong_response)
}

/// How later rounds re-ask unsolved instructions.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    /// Show one failing response from the previous round.
    #[default]
    Demo,
    /// Re-ask the original prompt.
    Direct,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundStat {
    pub round: u32,
    /// Instructions sampled in this round.
    pub attempted: usize,
    pub responses: usize,
    pub correct_responses: usize,
    /// Instructions solved for the first time in this round.
    pub solved: usize,
    pub cumulative_solved: usize,
    pub remaining: usize,
    pub cumulative_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundStats {
    pub total_instructions: usize,
    pub strategy: Strategy,
    pub rounds: Vec<RoundStat>,
    pub requests: usize,
    pub samples: usize,
}

/// Per-round accounting over annotated records.
pub fn round_stats(records: &[ResponseRecord], total_instructions: usize) -> Vec<RoundStat> {
    let max_round = records.iter().map(|r| r.round).max().unwrap_or(0);
    let mut solved: BTreeSet<&str> = BTreeSet::new();
    let mut out = Vec::new();
    for round in 1..=max_round {
        let in_round: Vec<&ResponseRecord> = records.iter().filter(|r| r.round == round).collect();
        let attempted: BTreeSet<&str> = in_round.iter().map(|r| r.instruction_id.as_str()).collect();
        let before = solved.len();
        for r in in_round.iter().filter(|r| r.passed()) {
            solved.insert(&r.instruction_id);
        }
        out.push(RoundStat {
            round,
            attempted: attempted.len(),
            responses: in_round.len(),
            correct_responses: in_round.iter().filter(|r| r.passed()).count(),
            solved: solved.len() - before,
            cumulative_solved: solved.len(),
            remaining: total_instructions - solved.len(),
            cumulative_fraction: if total_instructions == 0 {
                0.0
            } else {
                solved.len() as f64 / total_instructions as f64
            },
        });
    }
    out
}

/// Instructions among `ids` with no passing record.
pub fn unsolved<'a>(records: &[ResponseRecord], ids: impl IntoIterator<Item = &'a str>) -> Vec<&'a str> {
    let solved: BTreeSet<&str> = records
        .iter()
        .filter(|r| r.passed())
        .map(|r| r.instruction_id.as_str())
        .collect();
    ids.into_iter().filter(|id| !solved.contains(id)).collect()
}

/// The failing response used as the demonstration: the delivered, non-compliant
/// record of `round` with the lowest sample index.
pub fn pick_wrong<'r>(records: &'r [ResponseRecord], instruction_id: &str, round: u32) -> Option<&'r ResponseRecord> {
    records
        .iter()
        .filter(|r| r.instruction_id == instruction_id && r.round == round && r.is_wrong())
        .min_by_key(|r| r.sample_index)
}

/// Records grouped by instruction id.
pub fn by_instruction(records: &[ResponseRecord]) -> BTreeMap<&str, Vec<&ResponseRecord>> {
    let mut map: BTreeMap<&str, Vec<&ResponseRecord>> = BTreeMap::new();
    for r in records {
        map.entry(r.instruction_id.as_str()).or_default().push(r);
    }
    map
}
