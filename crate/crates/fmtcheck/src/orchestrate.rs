//! Concurrent sampling against a chat backend, and the retry rounds that
//! re-ask unsolved instructions with a failing response as demonstration.

use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::time::Duration;

use fmtcheck_core::annotate::{annotate_record, index_instructions, AnnotateError};
use fmtcheck_core::sampling::{pick_wrong, round_stats, sort_records, DemoTemplate, ResponseRecord, RoundStats, Strategy};
use fmtcheck_core::{FormatInstruction, Verifier};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::endpoint::{BackendError, ChatBackend, ChatRequest, Message};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetryPolicy {
    /// Attempts after the first for transient failures.
    pub max_retries: u32,
    pub base_delay_ms: u64,
    pub max_delay_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_retries: 3,
            base_delay_ms: 500,
            max_delay_ms: 8000,
        }
    }
}

impl RetryPolicy {
    fn delay(&self, attempt: u32) -> Duration {
        let ms = self.base_delay_ms.saturating_mul(1u64 << attempt.min(20));
        Duration::from_millis(ms.min(self.max_delay_ms))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplingConfig {
    /// Responses per instruction in round 1.
    pub k: u32,
    pub rounds: u32,
    /// Responses per unsolved instruction in rounds after the first.
    pub retry_samples: u32,
    pub strategy: Strategy,
    pub concurrency: usize,
    pub retry: RetryPolicy,
    pub demo: DemoTemplate,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        SamplingConfig {
            k: 4,
            rounds: 4,
            retry_samples: 1,
            strategy: Strategy::Demo,
            concurrency: 8,
            retry: RetryPolicy::default(),
            demo: DemoTemplate::default(),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum SampleError {
    #[error("run aborted: {0}")]
    Auth(String),
    #[error("invalid sampling configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Annotate(#[from] AnnotateError),
}

impl SamplingConfig {
    pub fn validate(&self) -> Result<(), SampleError> {
        if self.k == 0 || self.rounds == 0 || self.retry_samples == 0 || self.concurrency == 0 {
            return Err(SampleError::Config("k, rounds, retry_samples and concurrency must be >= 1".into()));
        }
        Ok(())
    }
}

struct Job<'a> {
    instruction: &'a FormatInstruction,
    round: u32,
    prompt: String,
    demo_used: bool,
    n: u32,
}

fn call_with_retry(backend: &dyn ChatBackend, req: &ChatRequest<'_>, retry: &RetryPolicy, calls: &AtomicUsize) -> Result<Vec<String>, BackendError> {
    let mut attempt = 0;
    loop {
        calls.fetch_add(1, Ordering::Relaxed);
        match backend.complete(req) {
            Ok(v) => return Ok(v),
            Err(e) if e.is_transient() && attempt < retry.max_retries => {
                std::thread::sleep(retry.delay(attempt));
                attempt += 1;
            }
            Err(e) => return Err(e),
        }
    }
}

fn run_jobs(jobs: Vec<Job<'_>>, backend: &dyn ChatBackend, cfg: &SamplingConfig, calls: &AtomicUsize) -> Result<Vec<ResponseRecord>, SampleError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.concurrency)
        .build()
        .map_err(|e| SampleError::Config(e.to_string()))?;
    let abort = AtomicBool::new(false);
    let results: Vec<Result<Vec<ResponseRecord>, SampleError>> = pool.install(|| {
        jobs.par_iter()
            .with_max_len(1)
            .map(|job| {
                if abort.load(Ordering::Relaxed) {
                    return Ok(Vec::new());
                }
                let req = ChatRequest {
                    instruction: job.instruction,
                    round: job.round,
                    messages: vec![Message::user(job.prompt.clone())],
                    n: job.n,
                };
                let outcome = match call_with_retry(backend, &req, &cfg.retry, calls) {
                    Err(BackendError::Auth(m)) => {
                        abort.store(true, Ordering::Relaxed);
                        return Err(SampleError::Auth(m));
                    }
                    Err(_) => Vec::new(),
                    Ok(v) => v,
                };
                Ok((0..job.n)
                    .map(|i| {
                        let text = outcome.get(i as usize);
                        ResponseRecord {
                            instruction_id: job.instruction.id.clone(),
                            round: job.round,
                            sample_index: i,
                            response: text.cloned().unwrap_or_default(),
                            demo_used: job.demo_used,
                            failed: text.is_none(),
                            report: None,
                        }
                    })
                    .collect())
            })
            .collect()
    });
    let mut out = Vec::new();
    for r in results {
        out.extend(r?);
    }
    sort_records(&mut out);
    Ok(out)
}

/// Round-1 sampling: `k` records per instruction, ordered by key. Transport
/// failures that persist past the retry policy become `failed` records; a
/// credential failure aborts the whole batch.
pub fn sample_batch(
    instructions: &[FormatInstruction],
    backend: &dyn ChatBackend,
    k: u32,
    cfg: &SamplingConfig,
) -> Result<Vec<ResponseRecord>, SampleError> {
    let cfg = SamplingConfig { k, ..cfg.clone() };
    cfg.validate()?;
    let calls = AtomicUsize::new(0);
    let jobs = instructions
        .iter()
        .map(|ins| Job {
            instruction: ins,
            round: 1,
            prompt: ins.prompt.clone(),
            demo_used: false,
            n: k,
        })
        .collect();
    run_jobs(jobs, backend, &cfg, &calls)
}

/// Verifies every record in parallel.
pub fn annotate_parallel(records: &mut [ResponseRecord], instructions: &[FormatInstruction], verifier: &Verifier) -> Result<(), AnnotateError> {
    let index = index_instructions(instructions);
    records.par_iter_mut().try_for_each(|r| {
        let ins = index
            .get(r.instruction_id.as_str())
            .ok_or_else(|| AnnotateError::UnknownInstruction(r.instruction_id.clone()))?;
        annotate_record(r, ins, verifier)
    })
}

/// Round 1 samples every instruction `k` times; each later round re-asks
/// only the instructions still lacking a passing record. Returned records are
/// annotated and ordered by key.
pub fn run_rounds(
    instructions: &[FormatInstruction],
    backend: &dyn ChatBackend,
    verifier: &Verifier,
    cfg: &SamplingConfig,
) -> Result<(Vec<ResponseRecord>, RoundStats), SampleError> {
    cfg.validate()?;
    let calls = AtomicUsize::new(0);
    let mut records: Vec<ResponseRecord> = Vec::new();
    for round in 1..=cfg.rounds {
        let solved: std::collections::BTreeSet<&str> = records
            .iter()
            .filter(|r| r.passed())
            .map(|r| r.instruction_id.as_str())
            .collect();
        let mut jobs = Vec::new();
        for ins in instructions.iter().filter(|i| !solved.contains(i.id.as_str())) {
            let (prompt, demo_used) = if round == 1 || cfg.strategy == Strategy::Direct {
                (ins.prompt.clone(), false)
            } else {
                match pick_wrong(&records, &ins.id, round - 1) {
                    Some(w) => (cfg.demo.render(&ins.prompt, &w.response), true),
                    None => (ins.prompt.clone(), false),
                }
            };
            jobs.push(Job {
                instruction: ins,
                round,
                prompt,
                demo_used,
                n: if round == 1 { cfg.k } else { cfg.retry_samples },
            });
        }
        if jobs.is_empty() {
            break;
        }
        let mut fresh = run_jobs(jobs, backend, cfg, &calls)?;
        annotate_parallel(&mut fresh, instructions, verifier)?;
        records.extend(fresh);
    }
    sort_records(&mut records);
    let stats = RoundStats {
        total_instructions: instructions.len(),
        strategy: cfg.strategy,
        rounds: round_stats(&records, instructions.len()),
        requests: calls.load(Ordering::Relaxed),
        samples: records.len(),
    };
    Ok((records, stats))
}

/// Records without their reports, as persisted by the sampling stage.
pub fn strip_reports(records: &[ResponseRecord]) -> Vec<ResponseRecord> {
    records
        .iter()
        .map(|r| ResponseRecord {
            report: None,
            ..r.clone()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::endpoint::EndpointConfig;
    use crate::io::{ingest_questions, load_library, QuestionFormat};
    use crate::stub::StubConfig;
    use fmtcheck_core::forge::{synthesize_split, DatasetSpec};
    use std::sync::Mutex;

    fn dataset(n: usize, level: u8) -> (Vec<fmtcheck_core::MetaConstraint>, Vec<FormatInstruction>) {
        let (lib, _) = load_library(None).unwrap();
        let (pool, _) = ingest_questions(None, QuestionFormat::PlainLines).unwrap();
        let split = synthesize_split(&pool, &lib, DatasetSpec { level, train_count: n, test_count: 0, seed: 1 }).unwrap();
        (lib, split.train)
    }

    fn fast() -> SamplingConfig {
        SamplingConfig {
            retry: RetryPolicy {
                max_retries: 2,
                base_delay_ms: 1,
                max_delay_ms: 2,
            },
            ..SamplingConfig::default()
        }
    }

    #[test]
    fn batch_cardinality_and_order() {
        let (lib, ins) = dataset(2, 1);
        let backend = EndpointConfig::Stub(StubConfig::new(1, 0.5)).connect(&lib).unwrap();
        let recs = sample_batch(&ins, backend.as_ref(), 4, &fast()).unwrap();
        assert_eq!(recs.len(), 8);
        let keys: Vec<_> = recs.iter().map(|r| (r.instruction_id.clone(), r.sample_index)).collect();
        let mut sorted = keys.clone();
        sorted.sort();
        assert_eq!(keys, sorted);
    }

    #[test]
    fn auth_failure_aborts() {
        let (lib, ins) = dataset(3, 1);
        let mut c = StubConfig::new(1, 0.5);
        c.fail_status = Some(401);
        let backend = EndpointConfig::Stub(c).connect(&lib).unwrap();
        assert!(matches!(sample_batch(&ins, backend.as_ref(), 4, &fast()), Err(SampleError::Auth(_))));
    }

    struct Flaky {
        calls: Mutex<u32>,
        fail_first: u32,
    }

    impl ChatBackend for Flaky {
        fn complete(&self, req: &ChatRequest<'_>) -> Result<Vec<String>, BackendError> {
            let mut c = self.calls.lock().unwrap();
            *c += 1;
            if *c <= self.fail_first {
                Err(BackendError::Timeout)
            } else {
                Ok(vec!["ok".into(); req.n as usize])
            }
        }
        fn identity(&self) -> String {
            "flaky".into()
        }
    }

    #[test]
    fn transient_failures_retry_then_flag() {
        let (_, ins) = dataset(1, 1);
        let cfg = SamplingConfig { concurrency: 1, ..fast() };
        let ok = Flaky { calls: Mutex::new(0), fail_first: 2 };
        let recs = sample_batch(&ins, &ok, 2, &cfg).unwrap();
        assert!(recs.iter().all(|r| !r.failed && r.response == "ok"));
        let dead = Flaky { calls: Mutex::new(0), fail_first: 100 };
        let recs = sample_batch(&ins, &dead, 2, &cfg).unwrap();
        assert_eq!(recs.len(), 2);
        assert!(recs.iter().all(|r| r.failed && r.response.is_empty()));
        assert_eq!(*dead.calls.lock().unwrap(), 3);
    }

    #[test]
    fn always_failing_stub_gets_all_rounds() {
        let (lib, ins) = dataset(5, 1);
        let backend = EndpointConfig::Stub(StubConfig::new(1, 0.0)).connect(&lib).unwrap();
        let verifier = Verifier::new(&lib);
        let (recs, stats) = run_rounds(&ins, backend.as_ref(), &verifier, &fast()).unwrap();
        assert_eq!(recs.len(), 5 * (4 + 3));
        assert_eq!(stats.rounds.len(), 4);
        assert!(stats.rounds.iter().all(|r| r.cumulative_solved == 0 && r.remaining == 5));
        assert!(recs.iter().filter(|r| r.round > 1).all(|r| r.demo_used));
        assert!(recs.iter().filter(|r| r.round == 1).all(|r| !r.demo_used));
    }

    #[test]
    fn solved_instructions_are_not_resampled() {
        let (lib, ins) = dataset(40, 1);
        let backend = EndpointConfig::Stub(StubConfig::new(3, 0.5)).connect(&lib).unwrap();
        let verifier = Verifier::new(&lib);
        let (recs, stats) = run_rounds(&ins, backend.as_ref(), &verifier, &fast()).unwrap();
        for r in recs.iter().filter(|r| r.round > 1) {
            let earlier_pass = recs
                .iter()
                .any(|p| p.instruction_id == r.instruction_id && p.round < r.round && p.passed());
            assert!(!earlier_pass);
        }
        let mut prev = 0.0;
        for s in &stats.rounds {
            assert_eq!(s.cumulative_solved + s.remaining, 40);
            assert!(s.cumulative_fraction >= prev);
            prev = s.cumulative_fraction;
        }
        let one = SamplingConfig { rounds: 1, ..fast() };
        let (r1, s1) = run_rounds(&ins, backend.as_ref(), &verifier, &one).unwrap();
        let batch = sample_batch(&ins, backend.as_ref(), 4, &fast()).unwrap();
        assert_eq!(strip_reports(&r1), batch);
        assert_eq!(s1.rounds.len(), 1);
    }

    #[test]
    fn fixed_stub_answer_passes_word_limit() {
        let (lib, _) = dataset(1, 1);
        let m = lib.iter().find(|m| m.id == "word-limit").unwrap();
        let inst = m.instances().unwrap().remove(0);
        assert_eq!(inst.bound_params["limit"].as_int(), Some(30));
        let ins = vec![FormatInstruction {
            id: "a".into(),
            level: 1,
            question: "Q".into(),
            question_source_id: "q:1".into(),
            prompt: fmtcheck_core::render_prompt("Q", std::slice::from_ref(&inst)).unwrap(),
            instances: vec![inst],
        }];
        let mut c = StubConfig::new(0, 0.0);
        c.fixed_response = Some(vec!["word"; 25].join(" "));
        let backend = EndpointConfig::Stub(c).connect(&lib).unwrap();
        let verifier = Verifier::new(&lib);
        let (recs, _) = run_rounds(&ins, backend.as_ref(), &verifier, &fast()).unwrap();
        assert_eq!(recs.len(), 4);
        assert!(recs.iter().all(|r| r.passed()));
    }
}
