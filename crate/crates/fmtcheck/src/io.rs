//! File formats: JSON Lines, constraint libraries, question pools, datasets,
//! hashing and atomic writes.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use fmtcheck_core::constraint::{parse_library, LibraryError};
use fmtcheck_core::forge::{parse_alpaca, parse_plain_lines, ForgeError, QuestionPool};
use fmtcheck_core::{FormatInstruction, MetaConstraint};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// The constraint library shipped with the tool.
pub const SHIPPED_LIBRARY: &str = include_str!("../data/constraints.json");
/// A small general-purpose question pool, one question per line.
pub const SHIPPED_QUESTIONS: &str = include_str!("../data/questions.txt");

#[derive(Debug, thiserror::Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Fs { path: PathBuf, source: std::io::Error },
    #[error("{path}:{line}: {message}")]
    Json { path: PathBuf, line: usize, message: String },
    #[error("{path}: {source}")]
    Library { path: PathBuf, source: LibraryError },
    #[error("{path}: {source}")]
    Questions { path: PathBuf, source: ForgeError },
}

fn fs_err(path: &Path) -> impl FnOnce(std::io::Error) -> IoError + '_ {
    move |source| IoError::Fs {
        path: path.to_path_buf(),
        source,
    }
}

pub fn read_to_string(path: &Path) -> Result<String, IoError> {
    fs::read_to_string(path).map_err(fs_err(path))
}

/// Writes through a temporary sibling file and renames it into place, so a
/// killed process never leaves a truncated file under the final name.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), IoError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(fs_err(dir))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(format!(".tmp{}", std::process::id()));
    let tmp = PathBuf::from(tmp);
    {
        let mut f = fs::File::create(&tmp).map_err(fs_err(&tmp))?;
        f.write_all(bytes).map_err(fs_err(&tmp))?;
        f.sync_all().map_err(fs_err(&tmp))?;
    }
    fs::rename(&tmp, path).map_err(fs_err(path))
}

pub fn to_jsonl<T: Serialize>(items: &[T]) -> String {
    let mut out = String::new();
    for item in items {
        out.push_str(&serde_json::to_string(item).expect("serializable record"));
        out.push('\n');
    }
    out
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<(), IoError> {
    write_atomic(path, to_jsonl(items).as_bytes())
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, IoError> {
    let f = fs::File::open(path).map_err(fs_err(path))?;
    let mut out = Vec::new();
    for (n, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(fs_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| IoError::Json {
            path: path.to_path_buf(),
            line: n + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<(), IoError> {
    let mut s = serde_json::to_string_pretty(value).expect("serializable value");
    s.push('\n');
    write_atomic(path, s.as_bytes())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, IoError> {
    let s = read_to_string(path)?;
    serde_json::from_str(&s).map_err(|e| IoError::Json {
        path: path.to_path_buf(),
        line: e.line(),
        message: e.to_string(),
    })
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn sha256_file(path: &Path) -> Result<String, IoError> {
    Ok(sha256_hex(&fs::read(path).map_err(fs_err(path))?))
}

/// Loads and validates a constraint library; `None` selects the shipped one.
pub fn load_library(path: Option<&Path>) -> Result<(Vec<MetaConstraint>, String), IoError> {
    let (src, path) = match path {
        Some(p) => (read_to_string(p)?, p.to_path_buf()),
        None => (SHIPPED_LIBRARY.to_string(), PathBuf::from("<shipped>")),
    };
    let lib = parse_library(&src).map_err(|source| IoError::Library { path, source })?;
    Ok((lib, sha256_hex(src.as_bytes())))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum QuestionFormat {
    Alpaca,
    #[default]
    PlainLines,
}

/// Reads a question pool; `None` selects the shipped sample questions.
pub fn ingest_questions(path: Option<&Path>, format: QuestionFormat) -> Result<(QuestionPool, String), IoError> {
    let (src, name, path) = match path {
        Some(p) => {
            let name = p
                .file_stem()
                .map_or_else(|| "questions".to_string(), |s| s.to_string_lossy().into_owned());
            (read_to_string(p)?, name, p.to_path_buf())
        }
        None => (SHIPPED_QUESTIONS.to_string(), "sample".to_string(), PathBuf::from("<shipped>")),
    };
    let pool = match format {
        QuestionFormat::Alpaca => parse_alpaca(&src, &name),
        QuestionFormat::PlainLines => parse_plain_lines(&src, &name),
    }
    .map_err(|source| IoError::Questions { path, source })?;
    Ok((pool, sha256_hex(src.as_bytes())))
}

pub fn save_dataset(path: &Path, instructions: &[FormatInstruction]) -> Result<(), IoError> {
    write_jsonl(path, instructions)
}

pub fn load_dataset(path: &Path) -> Result<Vec<FormatInstruction>, IoError> {
    read_jsonl(path)
}

/// Identity of a split: the hash of its canonical JSON Lines serialization.
pub fn split_hash(instructions: &[FormatInstruction]) -> String {
    sha256_hex(to_jsonl(instructions).as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shipped_inputs_load() {
        let (lib, hash) = load_library(None).unwrap();
        assert!(lib.len() >= 20);
        assert_eq!(hash.len(), 64);
        let (pool, _) = ingest_questions(None, QuestionFormat::PlainLines).unwrap();
        assert_eq!(pool.len(), 60);
    }

    #[test]
    fn jsonl_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a/b.jsonl");
        let items = vec![serde_json::json!({"x": 1}), serde_json::json!({"y": "z"})];
        write_jsonl(&p, &items).unwrap();
        let back: Vec<serde_json::Value> = read_jsonl(&p).unwrap();
        assert_eq!(back, items);
        write_jsonl::<serde_json::Value>(&p, &[]).unwrap();
        assert_eq!(fs::read(&p).unwrap().len(), 0);
    }

    #[test]
    fn sha256_known_value() {
        assert_eq!(sha256_hex(b"abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    }

    #[test]
    fn bad_jsonl_reports_line() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.jsonl");
        fs::write(&p, "{}\n{oops\n").unwrap();
        let err = read_jsonl::<serde_json::Value>(&p).unwrap_err();
        assert!(matches!(err, IoError::Json { line: 2, .. }));
    }
}
