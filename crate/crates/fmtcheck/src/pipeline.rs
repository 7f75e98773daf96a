//! The level-by-level self-improvement loop: sample, annotate, export, hand
//! off to an external trainer, register the trained endpoint, advance.
//!
//! State lives in one JSON document in the run directory. Each stage writes
//! its artifacts before the state is saved, and artifacts are deterministic,
//! so a run killed at any point resumes to the same final files.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use fmtcheck_core::annotate::{build_dpo, build_sft, index_instructions, DpoMode};
use fmtcheck_core::forge::{DatasetSpec, ForgeError};
use fmtcheck_core::loss::DEFAULT_BETA;
use fmtcheck_core::sampling::ResponseRecord;
use fmtcheck_core::{FormatInstruction, MetaConstraint, Verifier, VerifyOptions};
use serde::{Deserialize, Serialize};

use crate::endpoint::{EndpointConfig, EndpointError};
use crate::export::{export_training_data, ExportContext, ExportError, ExportSchema, DPO_FILE, SFT_FILE};
use crate::external::{build_verifier, ExternalCommand};
use crate::forge::{forge_parallel, write_split, TEST_FILE, TRAIN_FILE};
use crate::io::{self, IoError, QuestionFormat};
use crate::orchestrate::{annotate_parallel, run_rounds, strip_reports, SampleError, SamplingConfig};

pub const CONFIG_FILE: &str = "config.json";
pub const STATE_FILE: &str = "state.json";
pub const LOCK_FILE: &str = ".lock";
pub const RECORDS_FILE: &str = "records.jsonl";
pub const ANNOTATED_FILE: &str = "annotated.jsonl";
pub const ROUND_STATS_FILE: &str = "round_stats.json";
pub const TRAINER_CONFIG_FILE: &str = "trainer_config.json";
pub const LEVELS: u8 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    Sampling,
    Annotating,
    Exporting,
    AwaitingTrainer,
    Advancing,
    Done,
}

impl Stage {
    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Sampling => "sampling",
            Stage::Annotating => "annotating",
            Stage::Exporting => "exporting",
            Stage::AwaitingTrainer => "awaiting-trainer",
            Stage::Advancing => "advancing",
            Stage::Done => "done",
        }
    }
}

/// Settings for one level's fine-tuning: SFT on `sft_path`, then DPO on
/// `dpo_path`. The DPO reference model is left to the trainer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainerConfig {
    pub level: u8,
    pub rank: u32,
    pub alpha: u32,
    pub learning_rate: f64,
    pub epochs: u32,
    pub batch_size: u32,
    pub schedule: String,
    pub beta: f64,
    pub stage_order: Vec<String>,
    pub sft_path: String,
    pub dpo_path: String,
}

/// Optional replacements for the trainer defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainerOverrides {
    pub rank: Option<u32>,
    pub alpha: Option<u32>,
    pub learning_rate: Option<f64>,
    pub epochs: Option<u32>,
    pub batch_size: Option<u32>,
    pub schedule: Option<String>,
    pub beta: Option<f64>,
}

impl TrainerConfig {
    pub fn defaults(level: u8, sft_path: impl Into<String>, dpo_path: impl Into<String>) -> Self {
        TrainerConfig {
            level,
            rank: 64,
            alpha: 128,
            learning_rate: 5e-6,
            epochs: 8,
            batch_size: 4,
            schedule: "cosine".into(),
            beta: DEFAULT_BETA,
            stage_order: vec!["sft".into(), "dpo".into()],
            sft_path: sft_path.into(),
            dpo_path: dpo_path.into(),
        }
    }

    pub fn with_overrides(mut self, o: &TrainerOverrides) -> Self {
        self.rank = o.rank.unwrap_or(self.rank);
        self.alpha = o.alpha.unwrap_or(self.alpha);
        self.learning_rate = o.learning_rate.unwrap_or(self.learning_rate);
        self.epochs = o.epochs.unwrap_or(self.epochs);
        self.batch_size = o.batch_size.unwrap_or(self.batch_size);
        self.schedule = o.schedule.clone().unwrap_or(self.schedule);
        self.beta = o.beta.unwrap_or(self.beta);
        self
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let positive_ints = [self.rank, self.alpha, self.epochs, self.batch_size].iter().all(|&x| x > 0);
        let positive_reals = [self.learning_rate, self.beta].iter().all(|&x| x > 0.0 && x.is_finite());
        if !positive_ints || !positive_reals {
            return Err(PipelineError::Config("trainer numeric fields must be positive".into()));
        }
        if self.stage_order != ["sft", "dpo"] {
            return Err(PipelineError::Config("trainer stage order must be sft then dpo".into()));
        }
        Ok(())
    }
}

/// Writes the trainer configuration for `level`. Paths are relative to
/// `root` and must name existing files.
pub fn emit_trainer_config(
    root: &Path,
    level: u8,
    sft_path: &str,
    dpo_path: &str,
    overrides: &TrainerOverrides,
    out: &Path,
) -> Result<TrainerConfig, PipelineError> {
    for p in [sft_path, dpo_path] {
        if !root.join(p).is_file() {
            return Err(PipelineError::MissingArtifact(root.join(p)));
        }
    }
    let cfg = TrainerConfig::defaults(level, sft_path, dpo_path).with_overrides(overrides);
    cfg.validate()?;
    io::write_json(out, &cfg)?;
    Ok(cfg)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Constraint library file; the shipped library when unset.
    pub library: Option<PathBuf>,
    /// Question pool file; the shipped sample questions when unset.
    pub questions: Option<PathBuf>,
    pub question_format: QuestionFormat,
    pub seed: u64,
    pub train_count: usize,
    pub test_count: usize,
    pub workers: usize,
    pub endpoint: EndpointConfig,
    pub sampling: SamplingConfig,
    pub dpo_mode: DpoMode,
    pub schema: ExportSchema,
    pub trainer: TrainerOverrides,
    pub verify: VerifyOptions,
    /// Whitelist for `external` constraints.
    pub external: BTreeMap<String, ExternalCommand>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let spec = DatasetSpec::default();
        PipelineConfig {
            library: None,
            questions: None,
            question_format: QuestionFormat::PlainLines,
            seed: spec.seed,
            train_count: spec.train_count,
            test_count: spec.test_count,
            workers: 8,
            endpoint: EndpointConfig::Stub(crate::stub::StubConfig::new(0, 0.5)),
            sampling: SamplingConfig::default(),
            dpo_mode: DpoMode::Single,
            schema: ExportSchema::PromptCompletion,
            trainer: TrainerOverrides::default(),
            verify: VerifyOptions::default(),
            external: BTreeMap::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Artifact {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineState {
    pub current_level: u8,
    pub stage: Stage,
    pub seed: u64,
    pub config_sha256: String,
    pub library_sha256: String,
    pub questions_sha256: String,
    pub base_endpoint: EndpointConfig,
    /// Endpoint trained on each completed level's data, keyed by level.
    pub trained_endpoints: BTreeMap<String, EndpointConfig>,
    /// Artifacts per level, keyed by level then by name.
    pub artifacts: BTreeMap<String, BTreeMap<String, Artifact>>,
}

impl PipelineState {
    /// The endpoint that samples `level`: the base model for level 1,
    /// otherwise the model trained through the previous level.
    pub fn endpoint_for(&self, level: u8) -> Option<&EndpointConfig> {
        if level <= 1 {
            Some(&self.base_endpoint)
        } else {
            self.trained_endpoints.get(&(level - 1).to_string())
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error(transparent)]
    Io(#[from] IoError),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Endpoint(#[from] EndpointError),
    #[error(transparent)]
    Forge(#[from] ForgeError),
    #[error(transparent)]
    Sample(#[from] SampleError),
    #[error(transparent)]
    Export(#[from] ExportError),
    #[error(transparent)]
    Annotate(#[from] fmtcheck_core::annotate::AnnotateError),
    #[error("run directory {0} is locked by process {1}")]
    Locked(PathBuf, String),
    #[error("run directory {0} is already initialized with a different configuration")]
    AlreadyInitialized(PathBuf),
    #[error("no trained endpoint registered for level {0}; use `pipeline register-endpoint`")]
    MissingEndpoint(u8),
    #[error("cannot register an endpoint for level {level}: the run is at level {current}, stage {stage}")]
    WrongStage { level: u8, current: u8, stage: &'static str },
    #[error("missing artifact {0}")]
    MissingArtifact(PathBuf),
    #[error("artifact {0} changed since it was recorded")]
    ArtifactChanged(PathBuf),
    #[error("input {0} changed since the run started")]
    InputChanged(&'static str),
}

/// Exclusive hold on a run directory, released on drop.
#[derive(Debug)]
pub struct RunLock {
    path: PathBuf,
}

fn pid_alive(pid: &str) -> bool {
    if cfg!(target_os = "linux") {
        Path::new("/proc").join(pid.trim()).exists()
    } else {
        true
    }
}

impl RunLock {
    pub fn acquire(dir: &Path) -> Result<RunLock, PipelineError> {
        fs::create_dir_all(dir).map_err(|source| IoError::Fs {
            path: dir.to_path_buf(),
            source,
        })?;
        let path = dir.join(LOCK_FILE);
        let me = std::process::id().to_string();
        loop {
            match fs::OpenOptions::new().write(true).create_new(true).open(&path) {
                Ok(mut f) => {
                    use std::io::Write;
                    f.write_all(me.as_bytes())
                        .map_err(|source| IoError::Fs { path: path.clone(), source })?;
                    return Ok(RunLock { path });
                }
                Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                    let holder = fs::read_to_string(&path).unwrap_or_default();
                    if holder.trim() == me || !pid_alive(&holder) {
                        let _ = fs::remove_file(&path);
                        continue;
                    }
                    return Err(PipelineError::Locked(dir.to_path_buf(), holder.trim().to_string()));
                }
                Err(source) => return Err(IoError::Fs { path, source }.into()),
            }
        }
    }
}

impl Drop for RunLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

pub struct Pipeline {
    dir: PathBuf,
    config: PipelineConfig,
    state: PipelineState,
    library: Vec<MetaConstraint>,
    pool: fmtcheck_core::forge::QuestionPool,
    _lock: RunLock,
}

fn level_dir(level: u8) -> String {
    format!("level-{level}")
}

impl Pipeline {
    /// Starts a run in `dir`, or reopens it when it was started with the same
    /// configuration.
    pub fn init(dir: &Path, config: PipelineConfig) -> Result<Pipeline, PipelineError> {
        config.endpoint.validate()?;
        config.sampling.validate()?;
        let lock = RunLock::acquire(dir)?;
        let config_path = dir.join(CONFIG_FILE);
        if config_path.exists() {
            let existing: PipelineConfig = io::read_json(&config_path)?;
            if existing != config {
                return Err(PipelineError::AlreadyInitialized(dir.to_path_buf()));
            }
            drop(lock);
            return Pipeline::open(dir);
        }
        let (library, library_sha256) = io::load_library(config.library.as_deref())?;
        let (pool, questions_sha256) = io::ingest_questions(config.questions.as_deref(), config.question_format)?;
        io::write_json(&config_path, &config)?;
        let state = PipelineState {
            current_level: 1,
            stage: Stage::Sampling,
            seed: config.seed,
            config_sha256: io::sha256_file(&config_path)?,
            library_sha256,
            questions_sha256,
            base_endpoint: config.endpoint.clone(),
            trained_endpoints: BTreeMap::new(),
            artifacts: BTreeMap::new(),
        };
        io::write_json(&dir.join(STATE_FILE), &state)?;
        Ok(Pipeline {
            dir: dir.to_path_buf(),
            config,
            state,
            library,
            pool,
            _lock: lock,
        })
    }

    /// Reopens an existing run, checking that its inputs are unchanged.
    pub fn open(dir: &Path) -> Result<Pipeline, PipelineError> {
        let lock = RunLock::acquire(dir)?;
        let config_path = dir.join(CONFIG_FILE);
        let config: PipelineConfig = io::read_json(&config_path)?;
        let state: PipelineState = io::read_json(&dir.join(STATE_FILE))?;
        if io::sha256_file(&config_path)? != state.config_sha256 {
            return Err(PipelineError::InputChanged("config"));
        }
        let (library, library_sha256) = io::load_library(config.library.as_deref())?;
        if library_sha256 != state.library_sha256 {
            return Err(PipelineError::InputChanged("constraint library"));
        }
        let (pool, questions_sha256) = io::ingest_questions(config.questions.as_deref(), config.question_format)?;
        if questions_sha256 != state.questions_sha256 {
            return Err(PipelineError::InputChanged("question pool"));
        }
        Ok(Pipeline {
            dir: dir.to_path_buf(),
            config,
            state,
            library,
            pool,
            _lock: lock,
        })
    }

    pub fn state(&self) -> &PipelineState {
        &self.state
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn save_state(&self) -> Result<(), PipelineError> {
        io::write_json(&self.dir.join(STATE_FILE), &self.state)?;
        Ok(())
    }

    fn verifier(&self) -> Verifier {
        build_verifier(&self.library, self.config.verify, &self.config.external)
    }

    fn rel(&self, level: u8, name: &str) -> String {
        format!("{}/{name}", level_dir(level))
    }

    fn record(&mut self, level: u8, name: &str) -> Result<(), PipelineError> {
        let path = self.rel(level, name);
        let sha256 = io::sha256_file(&self.dir.join(&path))?;
        self.state
            .artifacts
            .entry(level.to_string())
            .or_default()
            .insert(name.to_string(), Artifact { path, sha256 });
        Ok(())
    }

    /// Path of a recorded artifact after checking its hash.
    fn checked(&self, level: u8, name: &str) -> Result<PathBuf, PipelineError> {
        let artifact = self
            .state
            .artifacts
            .get(&level.to_string())
            .and_then(|a| a.get(name))
            .ok_or_else(|| PipelineError::MissingArtifact(self.dir.join(self.rel(level, name))))?;
        let path = self.dir.join(&artifact.path);
        if !path.is_file() {
            return Err(PipelineError::MissingArtifact(path));
        }
        if io::sha256_file(&path)? != artifact.sha256 {
            return Err(PipelineError::ArtifactChanged(path));
        }
        Ok(path)
    }

    fn sample(&mut self, level: u8) -> Result<(), PipelineError> {
        let endpoint = self
            .state
            .endpoint_for(level)
            .cloned()
            .ok_or(PipelineError::MissingEndpoint(level - 1))?;
        let spec = DatasetSpec {
            level,
            train_count: self.config.train_count,
            test_count: self.config.test_count,
            seed: self.state.seed,
        };
        let split = forge_parallel(&self.pool, &self.library, spec, self.config.workers)?;
        let dir = self.dir.join(level_dir(level));
        write_split(&dir, &split)?;
        let backend = endpoint.connect(&self.library)?;
        let (records, stats) = run_rounds(&split.train, backend.as_ref(), &self.verifier(), &self.config.sampling)?;
        io::write_jsonl(&dir.join(RECORDS_FILE), &strip_reports(&records))?;
        io::write_json(&dir.join(ROUND_STATS_FILE), &stats)?;
        for name in [TRAIN_FILE, TEST_FILE, RECORDS_FILE, ROUND_STATS_FILE] {
            self.record(level, name)?;
        }
        Ok(())
    }

    fn annotate(&mut self, level: u8) -> Result<(), PipelineError> {
        let train: Vec<FormatInstruction> = io::load_dataset(&self.checked(level, TRAIN_FILE)?)?;
        let mut records: Vec<ResponseRecord> = io::read_jsonl(&self.checked(level, RECORDS_FILE)?)?;
        annotate_parallel(&mut records, &train, &self.verifier())?;
        io::write_jsonl(&self.dir.join(self.rel(level, ANNOTATED_FILE)), &records)?;
        self.record(level, ANNOTATED_FILE)
    }

    fn export(&mut self, level: u8) -> Result<(), PipelineError> {
        let train: Vec<FormatInstruction> = io::load_dataset(&self.checked(level, TRAIN_FILE)?)?;
        let records: Vec<ResponseRecord> = io::read_jsonl(&self.checked(level, ANNOTATED_FILE)?)?;
        let index = index_instructions(&train);
        let sft = build_sft(&records, &index)?;
        let dpo = build_dpo(&records, &index, self.config.dpo_mode)?;
        let endpoint = self
            .state
            .endpoint_for(level)
            .map(EndpointConfig::identity)
            .unwrap_or_default();
        let ctx = ExportContext {
            schema: self.config.schema,
            dpo_mode: self.config.dpo_mode,
            seed: self.state.seed,
            library_sha256: self.state.library_sha256.clone(),
            endpoint,
        };
        let dir = self.dir.join(level_dir(level));
        export_training_data(&sft, &dpo, &dir, &index, &self.verifier(), &ctx)?;
        emit_trainer_config(
            &self.dir,
            level,
            &self.rel(level, SFT_FILE),
            &self.rel(level, DPO_FILE),
            &self.config.trainer,
            &dir.join(TRAINER_CONFIG_FILE),
        )?;
        for name in [SFT_FILE, DPO_FILE, crate::export::MANIFEST_FILE, TRAINER_CONFIG_FILE] {
            self.record(level, name)?;
        }
        Ok(())
    }

    /// Performs the current stage and moves to the next one.
    pub fn step(&mut self) -> Result<Stage, PipelineError> {
        let level = self.state.current_level;
        let next = match self.state.stage {
            Stage::Sampling => {
                self.sample(level)?;
                Stage::Annotating
            }
            Stage::Annotating => {
                self.annotate(level)?;
                Stage::Exporting
            }
            Stage::Exporting => {
                self.export(level)?;
                Stage::AwaitingTrainer
            }
            Stage::AwaitingTrainer => {
                for name in [SFT_FILE, DPO_FILE, TRAINER_CONFIG_FILE] {
                    self.checked(level, name)?;
                }
                if !self.state.trained_endpoints.contains_key(&level.to_string()) {
                    return Err(PipelineError::MissingEndpoint(level));
                }
                Stage::Advancing
            }
            Stage::Advancing => {
                if level >= LEVELS {
                    Stage::Done
                } else {
                    self.state.current_level = level + 1;
                    Stage::Sampling
                }
            }
            Stage::Done => return Ok(Stage::Done),
        };
        self.state.stage = next;
        self.save_state()?;
        Ok(next)
    }

    /// Steps until the run needs a trained endpoint or is done.
    pub fn run(&mut self) -> Result<Stage, PipelineError> {
        loop {
            let stage = self.state.stage;
            let waiting = stage == Stage::AwaitingTrainer
                && !self
                    .state
                    .trained_endpoints
                    .contains_key(&self.state.current_level.to_string());
            if stage == Stage::Done || waiting {
                return Ok(stage);
            }
            self.step()?;
        }
    }

    /// Records the endpoint trained on `level`'s data. Registering the same
    /// endpoint again is a no-op.
    pub fn register_trained_endpoint(&mut self, level: u8, endpoint: EndpointConfig) -> Result<(), PipelineError> {
        endpoint.validate()?;
        if self.state.trained_endpoints.get(&level.to_string()) == Some(&endpoint) {
            return Ok(());
        }
        if self.state.stage != Stage::AwaitingTrainer || self.state.current_level != level {
            return Err(PipelineError::WrongStage {
                level,
                current: self.state.current_level,
                stage: self.state.stage.as_str(),
            });
        }
        self.state.trained_endpoints.insert(level.to_string(), endpoint);
        self.state.stage = Stage::Advancing;
        self.save_state()
    }

    /// Every recorded artifact with its hash, keyed by relative path.
    pub fn artifact_hashes(&self) -> BTreeMap<String, String> {
        self.state
            .artifacts
            .values()
            .flat_map(|a| a.values())
            .map(|a| (a.path.clone(), a.sha256.clone()))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stub::StubConfig;

    fn small_config() -> PipelineConfig {
        PipelineConfig {
            train_count: 20,
            test_count: 5,
            seed: 5,
            workers: 2,
            endpoint: EndpointConfig::Stub(StubConfig::new(1, 0.6)),
            sampling: SamplingConfig {
                concurrency: 2,
                ..SamplingConfig::default()
            },
            ..PipelineConfig::default()
        }
    }

    #[test]
    fn trainer_defaults_and_overrides() {
        let t = TrainerConfig::defaults(1, "a", "b");
        assert_eq!((t.rank, t.alpha, t.epochs, t.batch_size), (64, 128, 8, 4));
        assert_eq!((t.learning_rate, t.beta), (5e-6, 0.1));
        let o = TrainerOverrides {
            epochs: Some(2),
            ..Default::default()
        };
        assert_eq!(t.clone().with_overrides(&o).epochs, 2);
        let bad = TrainerOverrides {
            rank: Some(0),
            ..Default::default()
        };
        assert!(t.with_overrides(&bad).validate().is_err());
    }

    #[test]
    fn emit_names_missing_artifact() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("sft.jsonl"), "").unwrap();
        let err = emit_trainer_config(dir.path(), 1, "sft.jsonl", "dpo.jsonl", &TrainerOverrides::default(), &dir.path().join("t.json"))
            .unwrap_err();
        assert!(err.to_string().contains("dpo.jsonl"));
    }

    #[test]
    fn level_one_then_awaiting_trainer() {
        let dir = tempfile::tempdir().unwrap();
        let mut p = Pipeline::init(dir.path(), small_config()).unwrap();
        assert_eq!(p.run().unwrap(), Stage::AwaitingTrainer);
        for f in [SFT_FILE, DPO_FILE, TRAINER_CONFIG_FILE, RECORDS_FILE, ANNOTATED_FILE] {
            assert!(dir.path().join("level-1").join(f).is_file(), "{f}");
        }
        assert!(matches!(p.step(), Err(PipelineError::MissingEndpoint(1))));
        assert!(matches!(
            p.register_trained_endpoint(2, EndpointConfig::Stub(StubConfig::new(2, 0.7))),
            Err(PipelineError::WrongStage { .. })
        ));
        let trained = EndpointConfig::Stub(StubConfig::new(2, 0.7));
        p.register_trained_endpoint(1, trained.clone()).unwrap();
        p.register_trained_endpoint(1, trained.clone()).unwrap();
        assert_eq!(p.state().stage, Stage::Advancing);
        assert_eq!(p.state().endpoint_for(2), Some(&trained));
    }

    #[test]
    fn lock_excludes_second_driver() {
        let dir = tempfile::tempdir().unwrap();
        let _p = Pipeline::init(dir.path(), small_config()).unwrap();
        fs::write(dir.path().join(LOCK_FILE), "1").unwrap();
        assert!(matches!(Pipeline::open(dir.path()), Err(PipelineError::Locked(..))));
    }

    #[test]
    fn stale_lock_is_taken_over() {
        let dir = tempfile::tempdir().unwrap();
        drop(Pipeline::init(dir.path(), small_config()).unwrap());
        fs::write(dir.path().join(LOCK_FILE), "4000000000").unwrap();
        Pipeline::open(dir.path()).unwrap();
    }

    #[test]
    fn tampered_artifact_is_detected() {
        let dir = tempfile::tempdir().unwrap();
        let mut p = Pipeline::init(dir.path(), small_config()).unwrap();
        p.step().unwrap();
        fs::write(dir.path().join("level-1").join(RECORDS_FILE), "").unwrap();
        assert!(matches!(p.step(), Err(PipelineError::ArtifactChanged(_))));
    }
}
