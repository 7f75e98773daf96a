//! Verification of sampled records and construction of SFT examples and
//! DPO preference pairs.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::constraint::FormatInstruction;
use crate::sampling::{by_instruction, ResponseRecord};
use crate::verify::{ConstraintVerdict, VerificationReport, Verifier, VerifyError};

#[derive(Debug, thiserror::Error)]
pub enum AnnotateError {
    #[error("record refers to unknown instruction {0}")]
    UnknownInstruction(String),
    #[error("record {instruction_id} is not annotated")]
    NotAnnotated { instruction_id: String },
    #[error(transparent)]
    Verify(#[from] VerifyError),
    #[error("re-verification failed for instruction {instruction_id}: {problem}")]
    Guard { instruction_id: String, problem: String },
}

pub type InstructionIndex<'a> = BTreeMap<&'a str, &'a FormatInstruction>;

pub fn index_instructions<'a>(instructions: impl IntoIterator<Item = &'a FormatInstruction>) -> InstructionIndex<'a> {
    instructions.into_iter().map(|i| (i.id.as_str(), i)).collect()
}

fn lookup<'a>(index: &InstructionIndex<'a>, id: &str) -> Result<&'a FormatInstruction, AnnotateError> {
    index
        .get(id)
        .copied()
        .ok_or_else(|| AnnotateError::UnknownInstruction(id.to_string()))
}

/// Report for a record whose transport failed: every constraint fails.
pub fn no_response_report(instruction: &FormatInstruction) -> VerificationReport {
    VerificationReport::from_verdicts(
        instruction
            .instances
            .iter()
            .map(|_| ConstraintVerdict::failed(0.0, "no response"))
            .collect(),
    )
}

pub fn annotate_record(
    record: &mut ResponseRecord,
    instruction: &FormatInstruction,
    verifier: &Verifier,
) -> Result<(), AnnotateError> {
    record.report = Some(if record.failed {
        no_response_report(instruction)
    } else {
        verifier.verify_all(instruction, &record.response)?
    });
    Ok(())
}

/// Attaches a verification report to every record.
pub fn annotate(records: &mut [ResponseRecord], index: &InstructionIndex<'_>, verifier: &Verifier) -> Result<(), AnnotateError> {
    for record in records.iter_mut() {
        let instruction = lookup(index, &record.instruction_id)?;
        annotate_record(record, instruction, verifier)?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SftExample {
    pub instruction_id: String,
    pub prompt: String,
    pub chosen: String,
    pub round: u32,
    pub sample_index: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreferencePair {
    pub instruction_id: String,
    pub prompt: String,
    pub chosen: String,
    pub rejected: String,
    pub chosen_soft: f64,
    pub rejected_soft: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DpoMode {
    #[default]
    Single,
    AllPairs,
}

fn ensure_annotated(records: &[ResponseRecord]) -> Result<(), AnnotateError> {
    match records.iter().find(|r| r.report.is_none()) {
        Some(r) => Err(AnnotateError::NotAnnotated {
            instruction_id: r.instruction_id.clone(),
        }),
        None => Ok(()),
    }
}

fn earlier(a: &ResponseRecord, b: &ResponseRecord) -> Ordering {
    (a.round, a.sample_index).cmp(&(b.round, b.sample_index))
}

/// One example per instruction with a passing record: the earliest round,
/// then the lowest sample index.
pub fn build_sft(records: &[ResponseRecord], index: &InstructionIndex<'_>) -> Result<Vec<SftExample>, AnnotateError> {
    ensure_annotated(records)?;
    let mut out = Vec::new();
    for (id, group) in by_instruction(records) {
        let Some(best) = group.iter().filter(|r| r.passed()).min_by(|a, b| earlier(a, b)) else {
            continue;
        };
        let instruction = lookup(index, id)?;
        out.push(SftExample {
            instruction_id: id.to_string(),
            prompt: instruction.prompt.clone(),
            chosen: best.response.clone(),
            round: best.round,
            sample_index: best.sample_index,
        });
    }
    Ok(out)
}

/// Preference pairs of passing (chosen) and failing (rejected) responses of
/// the same instruction. Transport failures never serve as rejected.
///
/// Single mode keeps one pair per instruction: the highest-soft pass with the
/// lowest-soft failure, earlier records winning ties.
pub fn build_dpo(
    records: &[ResponseRecord],
    index: &InstructionIndex<'_>,
    mode: DpoMode,
) -> Result<Vec<PreferencePair>, AnnotateError> {
    ensure_annotated(records)?;
    let mut out = Vec::new();
    for (id, group) in by_instruction(records) {
        let mut passes: Vec<&ResponseRecord> = group.iter().copied().filter(|r| r.passed()).collect();
        let mut fails: Vec<&ResponseRecord> = group.iter().copied().filter(|r| r.is_wrong()).collect();
        if passes.is_empty() || fails.is_empty() {
            continue;
        }
        let instruction = lookup(index, id)?;
        passes.sort_by(|a, b| b.soft().total_cmp(&a.soft()).then_with(|| earlier(a, b)));
        fails.sort_by(|a, b| a.soft().total_cmp(&b.soft()).then_with(|| earlier(a, b)));
        let make = |c: &ResponseRecord, r: &ResponseRecord| PreferencePair {
            instruction_id: id.to_string(),
            prompt: instruction.prompt.clone(),
            chosen: c.response.clone(),
            rejected: r.response.clone(),
            chosen_soft: c.soft(),
            rejected_soft: r.soft(),
        };
        match mode {
            DpoMode::Single => {
                if let Some((c, r)) = passes
                    .iter()
                    .flat_map(|c| fails.iter().map(move |r| (c, r)))
                    .find(|(c, r)| c.response != r.response)
                {
                    out.push(make(c, r));
                }
            }
            DpoMode::AllPairs => {
                for c in &passes {
                    for r in &fails {
                        if c.response != r.response {
                            out.push(make(c, r));
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Confirms every SFT chosen response still verifies with `I = 1`.
pub fn reverify_sft(examples: &[SftExample], index: &InstructionIndex<'_>, verifier: &Verifier) -> Result<(), AnnotateError> {
    for ex in examples {
        let instruction = lookup(index, &ex.instruction_id)?;
        if !verifier.verify_all(instruction, &ex.chosen)?.aggregate {
            return Err(AnnotateError::Guard {
                instruction_id: ex.instruction_id.clone(),
                problem: "chosen response does not pass".to_string(),
            });
        }
    }
    Ok(())
}

/// Confirms every pair's chosen verifies with `I = 1` and rejected with `I = 0`.
pub fn reverify_dpo(pairs: &[PreferencePair], index: &InstructionIndex<'_>, verifier: &Verifier) -> Result<(), AnnotateError> {
    for p in pairs {
        let instruction = lookup(index, &p.instruction_id)?;
        if !verifier.verify_all(instruction, &p.chosen)?.aggregate {
            return Err(AnnotateError::Guard {
                instruction_id: p.instruction_id.clone(),
                problem: "chosen response does not pass".to_string(),
            });
        }
        if verifier.verify_all(instruction, &p.rejected)?.aggregate {
            return Err(AnnotateError::Guard {
                instruction_id: p.instruction_id.clone(),
                problem: "rejected response passes".to_string(),
            });
        }
        if p.chosen == p.rejected {
            return Err(AnnotateError::Guard {
                instruction_id: p.instruction_id.clone(),
                problem: "chosen and rejected are identical".to_string(),
            });
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constraint::{ConstraintInstance, ParamValue};
    use alloc::format;
    use alloc::vec;

    fn instruction(id: &str) -> FormatInstruction {
        FormatInstruction {
            id: id.into(),
            level: 1,
            question: "Q?".into(),
            question_source_id: "q".into(),
            instances: vec![ConstraintInstance {
                meta_id: "range".into(),
                rendered_text: "Your response must contain between 50 and 110 words.".into(),
                bound_params: [("lo".into(), ParamValue::Int(50)), ("hi".into(), ParamValue::Int(110))].into(),
            }],
            prompt: "Q?\nCONSTRAINT: Your response must contain between 50 and 110 words.".into(),
        }
    }

    fn rec(id: &str, round: u32, idx: u32, pass: bool, soft: f64) -> ResponseRecord {
        ResponseRecord {
            instruction_id: id.into(),
            round,
            sample_index: idx,
            response: format!("{id} r{round} s{idx}"),
            demo_used: round > 1,
            failed: false,
            report: Some(VerificationReport::from_verdicts(vec![if pass {
                ConstraintVerdict::passed("")
            } else {
                ConstraintVerdict::failed(soft, "")
            }])),
        }
    }

    #[test]
    fn sft_prefers_earliest_round() {
        let ins = [instruction("a"), instruction("b")];
        let index = index_instructions(&ins);
        let records = vec![
            rec("a", 2, 0, true, 1.0),
            rec("a", 1, 2, true, 1.0),
            rec("a", 1, 3, true, 1.0),
            rec("b", 1, 0, false, 0.2),
        ];
        let sft = build_sft(&records, &index).unwrap();
        assert_eq!(sft.len(), 1);
        assert_eq!((sft[0].round, sft[0].sample_index), (1, 2));
        assert_eq!(sft[0].prompt, ins[0].prompt);
    }

    #[test]
    fn dpo_modes() {
        let ins = [instruction("a"), instruction("b")];
        let index = index_instructions(&ins);
        let one_pass = vec![
            rec("a", 1, 0, true, 1.0),
            rec("a", 1, 1, false, 0.5),
            rec("a", 1, 2, false, 0.4),
            rec("a", 1, 3, false, 0.6),
        ];
        assert_eq!(build_dpo(&one_pass, &index, DpoMode::Single).unwrap().len(), 1);
        assert_eq!(build_dpo(&one_pass, &index, DpoMode::AllPairs).unwrap().len(), 3);

        let all_pass: Vec<_> = (0..4).map(|i| rec("b", 1, i, true, 1.0)).collect();
        assert!(build_dpo(&all_pass, &index, DpoMode::Single).unwrap().is_empty());

        let mixed = vec![
            rec("a", 1, 0, true, 1.0),
            rec("a", 1, 1, true, 1.0),
            rec("a", 1, 2, false, 0.3),
            rec("a", 1, 3, false, 0.8),
        ];
        let pairs = build_dpo(&mixed, &index, DpoMode::Single).unwrap();
        assert_eq!(pairs.len(), 1);
        assert_eq!(pairs[0].rejected_soft, 0.3);
        assert_eq!(pairs[0].chosen, "a r1 s0");
    }

    #[test]
    fn failed_transport_is_never_rejected() {
        let ins = [instruction("a")];
        let index = index_instructions(&ins);
        let mut failed = rec("a", 1, 1, false, 0.0);
        failed.failed = true;
        failed.response.clear();
        let records = vec![rec("a", 1, 0, true, 1.0), failed];
        assert!(build_dpo(&records, &index, DpoMode::AllPairs).unwrap().is_empty());
    }

    #[test]
    fn unannotated_records_are_rejected() {
        let ins = [instruction("a")];
        let index = index_instructions(&ins);
        let mut r = rec("a", 1, 0, true, 1.0);
        r.report = None;
        assert!(matches!(build_sft(&[r], &index), Err(AnnotateError::NotAnnotated { .. })));
    }

    #[test]
    fn annotate_marks_empty_and_failed() {
        let ins = [instruction("a")];
        let index = index_instructions(&ins);
        let verifier = Verifier::new(&[]);
        let mut records = vec![rec("a", 1, 0, true, 1.0)];
        records[0].report = None;
        records[0].failed = true;
        annotate(&mut records, &index, &verifier).unwrap();
        let report = records[0].report.as_ref().unwrap();
        assert!(!report.aggregate);
        assert_eq!(report.per_constraint[0].detail, "no response");

        let mut unknown = vec![rec("zzz", 1, 0, true, 1.0)];
        assert!(matches!(
            annotate(&mut unknown, &index, &verifier),
            Err(AnnotateError::UnknownInstruction(_))
        ));
    }
}
