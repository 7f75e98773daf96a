//! Benchmarking an endpoint on a test split, and comparing reports.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::time::Instant;

use fmtcheck_core::annotate::AnnotateError;
use fmtcheck_core::sampling::{sort_records, ResponseRecord};
use fmtcheck_core::verify::VerificationReport;
use fmtcheck_core::{Category, FormatInstruction, MetaConstraint, Verifier};
use serde::{Deserialize, Serialize};

use crate::endpoint::ChatBackend;
use crate::io;
use crate::orchestrate::{annotate_parallel, sample_batch, strip_reports, SampleError, SamplingConfig};

/// An instruction counts as solved when any of its samples passes.
pub const POLICY: &str = "any-of-k";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelScore {
    pub n: usize,
    /// Strict accuracy: fraction of instructions with every constraint met.
    pub acc: f64,
    /// Mean aggregate soft score.
    pub soft: f64,
    /// Fraction of individual constraints met.
    pub constraint_acc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryScore {
    /// Constraint instances of this category in the split.
    pub n: usize,
    pub acc: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub sampling_s: f64,
    pub verify_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub split_hash: String,
    pub endpoint: String,
    pub policy: String,
    pub samples_per_instruction: u32,
    pub levels: BTreeMap<String, LevelScore>,
    pub categories: BTreeMap<String, CategoryScore>,
    pub overall: LevelScore,
    pub timing: Timing,
}

impl EvalReport {
    /// The report with timings zeroed, for comparing re-scored runs.
    pub fn without_timing(&self) -> EvalReport {
        EvalReport {
            timing: Timing::default(),
            ..self.clone()
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("the split is empty")]
    EmptySplit,
    #[error(transparent)]
    Sample(#[from] SampleError),
    #[error(transparent)]
    Annotate(#[from] AnnotateError),
    #[error("instruction {0} has no cached response")]
    MissingResponse(String),
    #[error("constraint {0} is not in the library")]
    UnknownConstraint(String),
    #[error("need at least two reports to compare")]
    TooFewReports,
    #[error("report {index} was computed on split {found}, expected {expected}")]
    SplitMismatch { index: usize, expected: String, found: String },
}

#[derive(Default)]
struct Tally {
    n: usize,
    passed: usize,
    soft: f64,
    constraints: usize,
    constraints_passed: usize,
}

impl Tally {
    fn add(&mut self, report: &VerificationReport) {
        self.n += 1;
        self.passed += usize::from(report.aggregate);
        self.soft += report.aggregate_soft;
        self.constraints += report.per_constraint.len();
        self.constraints_passed += report.per_constraint.iter().filter(|v| v.pass).count();
    }

    fn score(&self) -> LevelScore {
        let frac = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        LevelScore {
            n: self.n,
            acc: frac(self.passed, self.n),
            soft: if self.n == 0 { 0.0 } else { self.soft / self.n as f64 },
            constraint_acc: frac(self.constraints_passed, self.constraints),
        }
    }
}

/// The sample that stands for an instruction: the first passing one, else
/// the one with the highest soft score.
fn representative<'a>(samples: &[&'a ResponseRecord]) -> Option<&'a VerificationReport> {
    let reports = samples.iter().filter_map(|r| r.report.as_ref());
    let mut best: Option<&VerificationReport> = None;
    for r in reports {
        if r.aggregate {
            return Some(r);
        }
        if best.is_none_or(|b| r.aggregate_soft > b.aggregate_soft) {
            best = Some(r);
        }
    }
    best
}

/// Verifies cached `records` against `split` and builds the report.
pub fn score(
    split: &[FormatInstruction],
    records: &[ResponseRecord],
    library: &[MetaConstraint],
    verifier: &Verifier,
    endpoint: &str,
    samples_per_instruction: u32,
) -> Result<EvalReport, EvalError> {
    if split.is_empty() {
        return Err(EvalError::EmptySplit);
    }
    let started = Instant::now();
    let mut records = strip_reports(records);
    annotate_parallel(&mut records, split, verifier)?;
    sort_records(&mut records);
    let verify_s = started.elapsed().as_secs_f64();

    let categories: BTreeMap<&str, Category> = library.iter().map(|m| (m.id.as_str(), m.category)).collect();
    let mut by_instruction: BTreeMap<&str, Vec<&ResponseRecord>> = BTreeMap::new();
    for r in &records {
        by_instruction.entry(r.instruction_id.as_str()).or_default().push(r);
    }
    let mut levels: BTreeMap<u8, Tally> = BTreeMap::new();
    let mut overall = Tally::default();
    let mut per_category: BTreeMap<Category, (usize, usize)> = BTreeMap::new();
    for ins in split {
        let samples = by_instruction.get(ins.id.as_str()).map(Vec::as_slice).unwrap_or(&[]);
        let report = representative(samples).ok_or_else(|| EvalError::MissingResponse(ins.id.clone()))?;
        levels.entry(ins.level).or_default().add(report);
        overall.add(report);
        for (inst, verdict) in ins.instances.iter().zip(&report.per_constraint) {
            let cat = categories
                .get(inst.meta_id.as_str())
                .ok_or_else(|| EvalError::UnknownConstraint(inst.meta_id.clone()))?;
            let e = per_category.entry(*cat).or_default();
            e.0 += 1;
            e.1 += usize::from(verdict.pass);
        }
    }
    Ok(EvalReport {
        split_hash: io::split_hash(split),
        endpoint: endpoint.to_string(),
        policy: POLICY.into(),
        samples_per_instruction,
        levels: levels.iter().map(|(l, t)| (l.to_string(), t.score())).collect(),
        categories: per_category
            .into_iter()
            .map(|(c, (n, p))| (c.as_str().to_string(), CategoryScore { n, acc: p as f64 / n as f64 }))
            .collect(),
        overall: overall.score(),
        timing: Timing { sampling_s: 0.0, verify_s },
    })
}

/// Samples `samples` responses per instruction and scores them. Returns the
/// report and the unannotated responses for caching.
pub fn evaluate(
    split: &[FormatInstruction],
    backend: &dyn ChatBackend,
    library: &[MetaConstraint],
    verifier: &Verifier,
    samples: u32,
    cfg: &SamplingConfig,
) -> Result<(EvalReport, Vec<ResponseRecord>), EvalError> {
    if split.is_empty() {
        return Err(EvalError::EmptySplit);
    }
    let started = Instant::now();
    let records = sample_batch(split, backend, samples, cfg)?;
    let sampling_s = started.elapsed().as_secs_f64();
    let mut report = score(split, &records, library, verifier, &backend.identity(), samples)?;
    report.timing.sampling_s = sampling_s;
    Ok((report, records))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub endpoint: String,
    /// Metric name to value minus the baseline's value.
    pub deltas: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub split_hash: String,
    pub baseline: String,
    pub rows: Vec<ComparisonRow>,
}

fn metrics(r: &EvalReport) -> BTreeMap<String, f64> {
    let mut m = BTreeMap::new();
    for (level, s) in &r.levels {
        m.insert(format!("level-{level}.acc"), s.acc);
        m.insert(format!("level-{level}.soft"), s.soft);
        m.insert(format!("level-{level}.constraint_acc"), s.constraint_acc);
    }
    for (cat, s) in &r.categories {
        m.insert(format!("{cat}.acc"), s.acc);
    }
    m.insert("overall.acc".into(), r.overall.acc);
    m.insert("overall.soft".into(), r.overall.soft);
    m
}

/// Deltas of every report against the first.
pub fn compare(reports: &[EvalReport]) -> Result<Comparison, EvalError> {
    let (base, rest) = reports.split_first().ok_or(EvalError::TooFewReports)?;
    if rest.is_empty() {
        return Err(EvalError::TooFewReports);
    }
    for (i, r) in reports.iter().enumerate() {
        if r.split_hash != base.split_hash {
            return Err(EvalError::SplitMismatch {
                index: i,
                expected: base.split_hash.clone(),
                found: r.split_hash.clone(),
            });
        }
    }
    let base_metrics = metrics(base);
    let rows = rest
        .iter()
        .map(|r| ComparisonRow {
            endpoint: r.endpoint.clone(),
            deltas: metrics(r)
                .into_iter()
                .filter_map(|(k, v)| base_metrics.get(&k).map(|b| (k, v - b)))
                .collect(),
        })
        .collect();
    Ok(Comparison {
        split_hash: base.split_hash.clone(),
        baseline: base.endpoint.clone(),
        rows,
    })
}

fn pct(x: f64) -> String {
    format!("{:.1}", x * 100.0)
}

/// One row per report, strict accuracy per level in percent.
pub fn render_table(reports: &[EvalReport]) -> String {
    let levels: std::collections::BTreeSet<&String> = reports.iter().flat_map(|r| r.levels.keys()).collect();
    let width = reports.iter().map(|r| r.endpoint.len()).max().unwrap_or(0).max(8);
    let mut out = format!("{:<width$}", "endpoint");
    for l in &levels {
        let _ = write!(out, "  {:>8}", format!("level-{l}"));
    }
    let _ = writeln!(out, "  {:>8}  {:>8}", "overall", "soft");
    for r in reports {
        let _ = write!(out, "{:<width$}", r.endpoint);
        for l in &levels {
            let cell = r.levels.get(*l).map(|s| pct(s.acc)).unwrap_or_else(|| "-".into());
            let _ = write!(out, "  {cell:>8}");
        }
        let _ = writeln!(out, "  {:>8}  {:>8.3}", pct(r.overall.acc), r.overall.soft);
    }
    out
}

pub fn render_categories(report: &EvalReport) -> String {
    let mut out = String::new();
    for (cat, s) in &report.categories {
        let _ = writeln!(out, "{cat:<24}  {:>6}  n={}", pct(s.acc), s.n);
    }
    out
}

pub fn render_comparison(c: &Comparison) -> String {
    let mut out = format!("baseline: {}\n", c.baseline);
    for row in &c.rows {
        let _ = writeln!(out, "{}", row.endpoint);
        for (k, d) in &row.deltas {
            let _ = writeln!(out, "  {k:<36} {d:+.4}");
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::endpoint::EndpointConfig;
    use crate::forge::forge_parallel;
    use crate::io::{ingest_questions, load_library, QuestionFormat};
    use crate::stub::StubConfig;
    use fmtcheck_core::forge::DatasetSpec;

    fn split(level: u8, n: usize) -> (Vec<MetaConstraint>, Vec<FormatInstruction>) {
        let (lib, _) = load_library(None).unwrap();
        let (pool, _) = ingest_questions(None, QuestionFormat::PlainLines).unwrap();
        let spec = DatasetSpec { level, train_count: 0, test_count: n, seed: 3 };
        let s = forge_parallel(&pool, &lib, spec, 4).unwrap();
        (lib, s.test)
    }

    fn run(lib: &[MetaConstraint], split: &[FormatInstruction], rate: f64) -> (EvalReport, Vec<ResponseRecord>) {
        let backend = EndpointConfig::Stub(StubConfig::new(9, rate)).connect(lib).unwrap();
        let cfg = SamplingConfig { concurrency: 4, ..SamplingConfig::default() };
        evaluate(split, backend.as_ref(), lib, &Verifier::new(lib), 1, &cfg).unwrap()
    }

    #[test]
    fn perfect_stub_scores_one() {
        let (lib, s) = split(2, 50);
        let (r, _) = run(&lib, &s, 1.0);
        assert_eq!(r.levels["2"].acc, 1.0);
        assert_eq!(r.overall.constraint_acc, 1.0);
        assert!(r.categories.values().all(|c| c.acc == 1.0));
        assert_eq!(r.levels["2"].n, 50);
    }

    #[test]
    fn empty_split_is_rejected() {
        let (lib, _) = load_library(None).unwrap();
        assert!(matches!(score(&[], &[], &lib, &Verifier::new(&lib), "x", 1), Err(EvalError::EmptySplit)));
    }

    #[test]
    fn rescoring_cache_is_deterministic() {
        let (lib, s) = split(1, 40);
        let (r, cache) = run(&lib, &s, 0.5);
        let again = score(&s, &cache, &lib, &Verifier::new(&lib), &r.endpoint, 1).unwrap();
        assert_eq!(again.without_timing(), score(&s, &cache, &lib, &Verifier::new(&lib), &r.endpoint, 1).unwrap().without_timing());
        assert_eq!(again.levels, r.levels);
    }

    #[test]
    fn compare_self_and_mismatch() {
        let (lib, s) = split(1, 20);
        let (r, _) = run(&lib, &s, 0.5);
        let c = compare(&[r.clone(), r.clone()]).unwrap();
        assert!(c.rows[0].deltas.values().all(|d| *d == 0.0));
        let mut other = r.clone();
        other.split_hash = "different".into();
        assert!(matches!(compare(&[r.clone(), other]), Err(EvalError::SplitMismatch { .. })));
        assert!(matches!(compare(&[r]), Err(EvalError::TooFewReports)));
    }

    #[test]
    fn table_has_a_row_per_report() {
        let (lib, s) = split(1, 10);
        let (r, _) = run(&lib, &s, 0.5);
        let t = render_table(&[r.clone(), r]);
        assert_eq!(t.lines().count(), 3);
        assert!(t.contains("level-1"));
    }
}
