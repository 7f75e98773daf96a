//! Training-data files for external trainers, with a re-verification guard
//! and a sidecar manifest.

use std::path::{Path, PathBuf};

use fmtcheck_core::annotate::{reverify_dpo, reverify_sft, AnnotateError, DpoMode, InstructionIndex, PreferencePair, SftExample};
use fmtcheck_core::verify::text::word_count;
use fmtcheck_core::Verifier;
use serde::{Deserialize, Serialize};

use crate::endpoint::Message;
use crate::io::{self, IoError};

pub const SFT_FILE: &str = "sft.jsonl";
pub const DPO_FILE: &str = "dpo.jsonl";
pub const MANIFEST_FILE: &str = "export_manifest.json";
/// Chosen responses shorter than this at the 5th percentile raise a warning.
pub const SHORT_RESPONSE_WORDS: usize = 5;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum ExportSchema {
    #[default]
    PromptCompletion,
    ChatMessages,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PromptCompletionRow {
    pub prompt: String,
    pub chosen: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rejected: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChatRow {
    pub messages: Vec<Message>,
    pub chosen: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rejected: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(untagged)]
pub enum TrainingRow {
    PromptCompletion(PromptCompletionRow),
    Chat(ChatRow),
}

impl TrainingRow {
    fn new(schema: ExportSchema, prompt: &str, chosen: &str, rejected: Option<&str>) -> Self {
        match schema {
            ExportSchema::PromptCompletion => TrainingRow::PromptCompletion(PromptCompletionRow {
                prompt: prompt.to_string(),
                chosen: chosen.to_string(),
                rejected: rejected.map(str::to_string),
            }),
            ExportSchema::ChatMessages => TrainingRow::Chat(ChatRow {
                messages: vec![Message::user(prompt)],
                chosen: chosen.to_string(),
                rejected: rejected.map(str::to_string),
            }),
        }
    }
}

pub fn sft_rows(examples: &[SftExample], schema: ExportSchema) -> Vec<TrainingRow> {
    examples
        .iter()
        .map(|e| TrainingRow::new(schema, &e.prompt, &e.chosen, None))
        .collect()
}

pub fn dpo_rows(pairs: &[PreferencePair], schema: ExportSchema) -> Vec<TrainingRow> {
    pairs
        .iter()
        .map(|p| TrainingRow::new(schema, &p.prompt, &p.chosen, Some(&p.rejected)))
        .collect()
}

/// Reads an exported file back, checking every line against `schema`.
pub fn load_rows(path: &Path, schema: ExportSchema) -> Result<Vec<TrainingRow>, IoError> {
    Ok(match schema {
        ExportSchema::PromptCompletion => io::read_jsonl::<PromptCompletionRow>(path)?
            .into_iter()
            .map(TrainingRow::PromptCompletion)
            .collect(),
        ExportSchema::ChatMessages => io::read_jsonl::<ChatRow>(path)?
            .into_iter()
            .map(TrainingRow::Chat)
            .collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileEntry {
    pub path: String,
    pub count: usize,
    pub sha256: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LengthPercentiles {
    pub p5: usize,
    pub p50: usize,
    pub p95: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExportManifest {
    pub schema: ExportSchema,
    pub dpo_mode: DpoMode,
    pub sft: FileEntry,
    pub dpo: FileEntry,
    pub seed: u64,
    pub library_sha256: String,
    pub endpoint: String,
    /// Word counts of SFT chosen responses.
    pub chosen_words: Option<LengthPercentiles>,
    pub warnings: Vec<String>,
}

/// Who produced the data, recorded in the manifest.
#[derive(Debug, Clone)]
pub struct ExportContext {
    pub schema: ExportSchema,
    pub dpo_mode: DpoMode,
    pub seed: u64,
    pub library_sha256: String,
    pub endpoint: String,
}

#[derive(Debug, thiserror::Error)]
pub enum ExportError {
    #[error(transparent)]
    Io(#[from] IoError),
    #[error(transparent)]
    Guard(#[from] AnnotateError),
}

fn nearest_rank(sorted: &[usize], p: f64) -> usize {
    let rank = ((p / 100.0) * sorted.len() as f64).ceil().max(1.0) as usize;
    sorted[rank.min(sorted.len()) - 1]
}

pub fn length_percentiles(texts: impl IntoIterator<Item = impl AsRef<str>>) -> Option<LengthPercentiles> {
    let mut counts: Vec<usize> = texts.into_iter().map(|t| word_count(t.as_ref())).collect();
    if counts.is_empty() {
        return None;
    }
    counts.sort_unstable();
    Some(LengthPercentiles {
        p5: nearest_rank(&counts, 5.0),
        p50: nearest_rank(&counts, 50.0),
        p95: nearest_rank(&counts, 95.0),
    })
}

/// Re-verifies, then writes `sft.jsonl`, `dpo.jsonl` and the manifest into
/// `dir`. Nothing is written when the guard fails.
pub fn export_training_data(
    examples: &[SftExample],
    pairs: &[PreferencePair],
    dir: &Path,
    index: &InstructionIndex<'_>,
    verifier: &Verifier,
    ctx: &ExportContext,
) -> Result<ExportManifest, ExportError> {
    reverify_sft(examples, index, verifier)?;
    reverify_dpo(pairs, index, verifier)?;
    let sft_path = dir.join(SFT_FILE);
    let dpo_path = dir.join(DPO_FILE);
    io::write_jsonl(&sft_path, &sft_rows(examples, ctx.schema))?;
    io::write_jsonl(&dpo_path, &dpo_rows(pairs, ctx.schema))?;
    let chosen_words = length_percentiles(examples.iter().map(|e| &e.chosen));
    let mut warnings = Vec::new();
    if let Some(p) = chosen_words.filter(|p| p.p5 < SHORT_RESPONSE_WORDS) {
        warnings.push(format!(
            "5th percentile of chosen response length is {} words; short answers may satisfy the constraints while ignoring the question",
            p.p5
        ));
    }
    let manifest = ExportManifest {
        schema: ctx.schema,
        dpo_mode: ctx.dpo_mode,
        sft: FileEntry {
            path: SFT_FILE.into(),
            count: examples.len(),
            sha256: io::sha256_file(&sft_path)?,
        },
        dpo: FileEntry {
            path: DPO_FILE.into(),
            count: pairs.len(),
            sha256: io::sha256_file(&dpo_path)?,
        },
        seed: ctx.seed,
        library_sha256: ctx.library_sha256.clone(),
        endpoint: ctx.endpoint.clone(),
        chosen_words,
        warnings,
    };
    io::write_json(&dir.join(MANIFEST_FILE), &manifest)?;
    Ok(manifest)
}

pub fn export_paths(dir: &Path) -> (PathBuf, PathBuf) {
    (dir.join(SFT_FILE), dir.join(DPO_FILE))
}

#[cfg(test)]
mod tests {
    use super::*;
    use fmtcheck_core::annotate::index_instructions;
    use fmtcheck_core::FormatInstruction;

    fn lib_and_instruction() -> (Vec<fmtcheck_core::MetaConstraint>, FormatInstruction) {
        let (lib, _) = io::load_library(None).unwrap();
        let m = lib.iter().find(|m| m.id == "word-limit").unwrap();
        let inst = m.instances().unwrap().remove(0);
        let ins = FormatInstruction {
            id: "L1-train-000000".into(),
            level: 1,
            question: "Q".into(),
            question_source_id: "q:1".into(),
            prompt: fmtcheck_core::render_prompt("Q", std::slice::from_ref(&inst)).unwrap(),
            instances: vec![inst],
        };
        (lib, ins)
    }

    fn ctx(schema: ExportSchema) -> ExportContext {
        ExportContext {
            schema,
            dpo_mode: DpoMode::Single,
            seed: 1,
            library_sha256: "h".into(),
            endpoint: "stub".into(),
        }
    }

    #[test]
    fn empty_export_creates_empty_files() {
        let (lib, ins) = lib_and_instruction();
        let dir = tempfile::tempdir().unwrap();
        let index = index_instructions([&ins]);
        let m = export_training_data(&[], &[], dir.path(), &index, &Verifier::new(&lib), &ctx(ExportSchema::PromptCompletion)).unwrap();
        assert_eq!(std::fs::read(dir.path().join(SFT_FILE)).unwrap().len(), 0);
        assert_eq!(m.sft.count, 0);
        assert!(m.chosen_words.is_none());
    }

    #[test]
    fn round_trip_both_schemas() {
        let (lib, ins) = lib_and_instruction();
        let index = index_instructions([&ins]);
        let ex = SftExample {
            instruction_id: ins.id.clone(),
            prompt: ins.prompt.clone(),
            chosen: "two words".into(),
            round: 1,
            sample_index: 0,
        };
        let pair = PreferencePair {
            instruction_id: ins.id.clone(),
            prompt: ins.prompt.clone(),
            chosen: "two words".into(),
            rejected: vec!["w"; 40].join(" "),
            chosen_soft: 1.0,
            rejected_soft: 0.666,
        };
        for schema in [ExportSchema::PromptCompletion, ExportSchema::ChatMessages] {
            let dir = tempfile::tempdir().unwrap();
            let m = export_training_data(
                std::slice::from_ref(&ex),
                std::slice::from_ref(&pair),
                dir.path(),
                &index,
                &Verifier::new(&lib),
                &ctx(schema),
            )
            .unwrap();
            let (s, d) = export_paths(dir.path());
            assert_eq!(load_rows(&s, schema).unwrap(), sft_rows(std::slice::from_ref(&ex), schema));
            assert_eq!(load_rows(&d, schema).unwrap(), dpo_rows(std::slice::from_ref(&pair), schema));
            assert_eq!(m.warnings.len(), 1);
            let line = std::fs::read_to_string(&s).unwrap();
            let v: serde_json::Value = serde_json::from_str(line.trim()).unwrap();
            match schema {
                ExportSchema::PromptCompletion => assert_eq!(v["prompt"], ins.prompt.as_str()),
                ExportSchema::ChatMessages => assert_eq!(v["messages"][0]["content"], ins.prompt.as_str()),
            }
        }
    }

    #[test]
    fn guard_blocks_bad_chosen() {
        let (lib, ins) = lib_and_instruction();
        let index = index_instructions([&ins]);
        let bad = SftExample {
            instruction_id: ins.id.clone(),
            prompt: ins.prompt.clone(),
            chosen: vec!["w"; 31].join(" "),
            round: 1,
            sample_index: 0,
        };
        let dir = tempfile::tempdir().unwrap();
        let r = export_training_data(&[bad], &[], dir.path(), &index, &Verifier::new(&lib), &ctx(ExportSchema::PromptCompletion));
        assert!(matches!(r, Err(ExportError::Guard(_))));
        assert!(!dir.path().join(SFT_FILE).exists());
    }

    #[test]
    fn percentiles() {
        let p = length_percentiles(["a", "a b", "a b c", "a b c d"]).unwrap();
        assert_eq!((p.p5, p.p50, p.p95), (1, 2, 4));
    }
}
