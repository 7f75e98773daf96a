use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use fmtcheck::config::{RunConfig, RunManifest};
use fmtcheck::core::annotate::{build_dpo, build_sft, index_instructions, DpoMode};
use fmtcheck::core::forge::{capacity, dataset_stats, question_reuse, DatasetSpec};
use fmtcheck::core::loss::{dpo_loss, dpo_loss_from_margin, implicit_reward_margin, sft_loss, DpoInputs, SequenceLogProb};
use fmtcheck::core::sampling::{ResponseRecord, RoundStats, Strategy};
use fmtcheck::core::{Category, FormatInstruction, MetaConstraint, Verifier};
use fmtcheck::endpoint::{EndpointConfig, OpenAiConfig};
use fmtcheck::eval::{self, EvalReport};
use fmtcheck::export::{export_training_data, ExportContext, ExportSchema, DPO_FILE, SFT_FILE};
use fmtcheck::external::build_verifier;
use fmtcheck::forge::{forge_parallel, write_split};
use fmtcheck::io::{self, QuestionFormat};
use fmtcheck::orchestrate::{annotate_parallel, run_rounds, strip_reports};
use fmtcheck::pipeline::{emit_trainer_config, Pipeline, PipelineState, TRAINER_CONFIG_FILE};
use fmtcheck::stub::StubConfig;
use serde::Serialize;

#[derive(Parser)]
#[command(name = "fmtcheck", version, about = "Verifiable format constraints: synthesize, sample, verify, export, evaluate")]
struct Cli {
    /// Print machine-readable JSON instead of tables.
    #[arg(long, global = true)]
    json: bool,
    /// JSON configuration file; flags override its fields.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Inspect or check a constraint library.
    #[command(subcommand)]
    Constraints(ConstraintsCmd),
    /// Synthesize train and test instructions for one level.
    Forge(ForgeArgs),
    /// Number of distinct instructions each level can produce.
    Capacity(CapacityArgs),
    /// Sample responses for a dataset over several rounds.
    Sample(SampleArgs),
    /// Verify sampled responses.
    Annotate(AnnotateArgs),
    /// Write SFT and DPO training files.
    Export(ExportArgs),
    /// Benchmark an endpoint on a test split.
    Eval(EvalArgs),
    /// Compare evaluation reports computed on the same split.
    Compare(CompareArgs),
    /// Objective values for given log-probabilities.
    #[command(subcommand)]
    Loss(LossCmd),
    /// The level-by-level training-data pipeline.
    #[command(subcommand)]
    Pipeline(PipelineCmd),
}

#[derive(Subcommand)]
enum ConstraintsCmd {
    List(LibraryArg),
    Validate(LibraryArg),
}

#[derive(Args, Clone, Default)]
struct LibraryArg {
    /// Constraint library JSON; the shipped library by default.
    #[arg(long, value_name = "FILE")]
    library: Option<PathBuf>,
}

#[derive(Args, Clone, Default)]
struct InputArgs {
    #[command(flatten)]
    library: LibraryArg,
    /// Question pool; the shipped sample questions by default.
    #[arg(long, value_name = "FILE")]
    questions: Option<PathBuf>,
    #[arg(long, value_enum)]
    question_format: Option<QuestionFormat>,
}

#[derive(Args, Clone, Default)]
struct EndpointArgs {
    /// Endpoint JSON file ({"kind": "openai", ...} or {"kind": "stub", ...}).
    #[arg(long, value_name = "FILE", conflicts_with_all = ["stub", "base_url"])]
    endpoint: Option<PathBuf>,
    /// Use the offline stub endpoint with this pass rate.
    #[arg(long, value_name = "RATE", conflicts_with = "base_url")]
    stub: Option<f64>,
    /// Seed of the stub endpoint; the run seed by default.
    #[arg(long, requires = "stub")]
    stub_seed: Option<u64>,
    /// OpenAI-compatible base URL, e.g. http://localhost:8000/v1.
    #[arg(long, requires = "model")]
    base_url: Option<String>,
    /// Model name sent with every request.
    #[arg(long, requires = "base_url")]
    model: Option<String>,
    /// Environment variable holding the API key.
    #[arg(long, requires = "base_url")]
    api_key_env: Option<String>,
}

#[derive(Clone, Copy, ValueEnum)]
enum StrategyArg {
    Demo,
    Direct,
}

#[derive(Clone, Copy, ValueEnum)]
enum DpoModeArg {
    Single,
    AllPairs,
}

#[derive(Args, Clone, Default)]
struct SamplingArgs {
    /// Responses per instruction in the first round.
    #[arg(long)]
    k: Option<u32>,
    /// Sampling rounds, including the first.
    #[arg(long)]
    rounds: Option<u32>,
    /// Responses per unsolved instruction in later rounds.
    #[arg(long)]
    retry_samples: Option<u32>,
    #[arg(long, value_enum)]
    strategy: Option<StrategyArg>,
    /// Maximum requests in flight.
    #[arg(long)]
    concurrency: Option<usize>,
}

#[derive(Args, Clone, Default)]
struct VerifyArgs {
    /// Accept JSON/YAML wrapped in one Markdown code fence.
    #[arg(long)]
    lenient_fences: bool,
}

#[derive(Args)]
struct ForgeArgs {
    #[command(flatten)]
    inputs: InputArgs,
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=3))]
    level: u8,
    /// Training instructions.
    #[arg(long)]
    train: Option<usize>,
    /// Test instructions.
    #[arg(long)]
    test: Option<usize>,
    /// Random when unset; recorded in the manifest.
    #[arg(long)]
    seed: Option<u64>,
    /// Synthesis threads; the output does not depend on it.
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long, value_name = "DIR", default_value = "fmtcheck-out")]
    out: PathBuf,
}

#[derive(Args)]
struct CapacityArgs {
    #[command(flatten)]
    inputs: InputArgs,
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=3))]
    level: Option<u8>,
}

#[derive(Args)]
struct SampleArgs {
    #[command(flatten)]
    library: LibraryArg,
    /// Instructions to sample, as JSON Lines.
    #[arg(long, value_name = "FILE")]
    dataset: PathBuf,
    #[command(flatten)]
    endpoint: EndpointArgs,
    #[command(flatten)]
    sampling: SamplingArgs,
    #[command(flatten)]
    verify: VerifyArgs,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_name = "DIR", default_value = "fmtcheck-out")]
    out: PathBuf,
}

#[derive(Args)]
struct AnnotateArgs {
    #[command(flatten)]
    library: LibraryArg,
    #[arg(long, value_name = "FILE")]
    dataset: PathBuf,
    #[arg(long, value_name = "FILE")]
    records: PathBuf,
    #[command(flatten)]
    verify: VerifyArgs,
    #[arg(long, value_name = "DIR", default_value = "fmtcheck-out")]
    out: PathBuf,
}

#[derive(Args)]
struct ExportArgs {
    #[command(flatten)]
    library: LibraryArg,
    #[arg(long, value_name = "FILE")]
    dataset: PathBuf,
    #[arg(long, value_name = "FILE")]
    records: PathBuf,
    #[arg(long, value_enum)]
    schema: Option<ExportSchema>,
    #[arg(long, value_enum)]
    dpo_mode: Option<DpoModeArg>,
    #[command(flatten)]
    verify: VerifyArgs,
    #[arg(long, value_name = "DIR", default_value = "fmtcheck-out")]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    library: LibraryArg,
    /// Test split as JSON Lines.
    #[arg(long, value_name = "FILE")]
    dataset: PathBuf,
    /// Re-score cached responses instead of sampling.
    #[arg(long, value_name = "FILE")]
    cache: Option<PathBuf>,
    #[command(flatten)]
    endpoint: EndpointArgs,
    /// Responses per instruction; an instruction passes if any does.
    #[arg(long)]
    samples: Option<u32>,
    #[arg(long)]
    concurrency: Option<usize>,
    #[command(flatten)]
    verify: VerifyArgs,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_name = "DIR", default_value = "fmtcheck-out")]
    out: PathBuf,
}

#[derive(Args)]
struct CompareArgs {
    /// Report files; the first is the baseline.
    #[arg(required = true, num_args = 2..)]
    reports: Vec<PathBuf>,
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum LossCmd {
    /// Negative log-likelihood of one sequence.
    #[command(allow_negative_numbers = true)]
    Sft {
        /// Comma-separated token log-probabilities.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
        logprobs: Vec<f64>,
        /// Divide by the token count.
        #[arg(long)]
        normalize: bool,
    },
    /// Preference loss from a margin or from log-probabilities.
    #[command(allow_negative_numbers = true)]
    Dpo {
        /// Precomputed reward margin.
        #[arg(long, allow_negative_numbers = true, conflicts_with = "input", required_unless_present = "input")]
        margin: Option<f64>,
        /// JSON Lines of {policy_chosen, policy_rejected, ref_chosen, ref_rejected, beta}.
        #[arg(long, value_name = "FILE")]
        input: Option<PathBuf>,
    },
}

#[derive(Args)]
struct DirArg {
    /// Run directory.
    #[arg(long, value_name = "DIR")]
    dir: PathBuf,
}

#[derive(Subcommand)]
enum PipelineCmd {
    /// Start a run and advance it until it needs a trained endpoint.
    Run {
        #[command(flatten)]
        dir: DirArg,
        #[command(flatten)]
        inputs: InputArgs,
        #[command(flatten)]
        endpoint: EndpointArgs,
        #[command(flatten)]
        sampling: SamplingArgs,
        #[command(flatten)]
        verify: VerifyArgs,
        /// Training instructions per level.
        #[arg(long)]
        train: Option<usize>,
        /// Test instructions per level.
        #[arg(long)]
        test: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        workers: Option<usize>,
        #[arg(long, value_enum)]
        schema: Option<ExportSchema>,
        #[arg(long, value_enum)]
        dpo_mode: Option<DpoModeArg>,
    },
    /// Continue an interrupted or waiting run.
    Resume(DirArg),
    /// Record the endpoint trained on a level's data.
    RegisterEndpoint {
        #[command(flatten)]
        dir: DirArg,
        #[arg(long, value_parser = clap::value_parser!(u8).range(1..=3))]
        level: u8,
        #[command(flatten)]
        endpoint: EndpointArgs,
    },
}

fn emit<T: Serialize>(json: bool, value: &T, text: impl FnOnce() -> String) -> Result<()> {
    if json {
        println!("{}", serde_json::to_string_pretty(value)?);
    } else {
        print!("{}", text());
    }
    Ok(())
}

fn apply_inputs(cfg: &mut RunConfig, a: &InputArgs) {
    apply_library(cfg, &a.library);
    if a.questions.is_some() {
        cfg.questions.clone_from(&a.questions);
    }
    if let Some(f) = a.question_format {
        cfg.question_format = f;
    }
}

fn apply_library(cfg: &mut RunConfig, a: &LibraryArg) {
    if a.library.is_some() {
        cfg.library.clone_from(&a.library);
    }
}

fn apply_sampling(cfg: &mut RunConfig, a: &SamplingArgs) {
    let s = &mut cfg.sampling;
    s.k = a.k.unwrap_or(s.k);
    s.rounds = a.rounds.unwrap_or(s.rounds);
    s.retry_samples = a.retry_samples.unwrap_or(s.retry_samples);
    s.concurrency = a.concurrency.unwrap_or(s.concurrency);
    if let Some(st) = a.strategy {
        s.strategy = match st {
            StrategyArg::Demo => Strategy::Demo,
            StrategyArg::Direct => Strategy::Direct,
        };
    }
}

fn apply_verify(cfg: &mut RunConfig, a: &VerifyArgs) {
    if a.lenient_fences {
        cfg.verify.lenient_fences = true;
    }
}

fn dpo_mode(a: DpoModeArg) -> DpoMode {
    match a {
        DpoModeArg::Single => DpoMode::Single,
        DpoModeArg::AllPairs => DpoMode::AllPairs,
    }
}

/// Endpoint from flags, else from the config file. Needs the resolved seed
/// for a stub given without `--stub-seed`.
fn endpoint_from_args(a: &EndpointArgs, seed: Option<u64>) -> Result<Option<EndpointConfig>> {
    if let Some(path) = &a.endpoint {
        return Ok(Some(io::read_json(path)?));
    }
    if let Some(rate) = a.stub {
        return Ok(Some(EndpointConfig::Stub(StubConfig::new(a.stub_seed.or(seed).unwrap_or(0), rate))));
    }
    if let (Some(base_url), Some(model)) = (&a.base_url, &a.model) {
        return Ok(Some(EndpointConfig::OpenAi(OpenAiConfig {
            base_url: base_url.clone(),
            model: model.clone(),
            api_key_env: Some(a.api_key_env.clone().unwrap_or_else(|| "OPENAI_API_KEY".into())),
            temperature: 0.0,
            max_tokens: 1024,
            timeout_secs: 60.0,
        })));
    }
    Ok(None)
}

fn apply_endpoint(cfg: &mut RunConfig, a: &EndpointArgs) -> Result<()> {
    if let Some(ep) = endpoint_from_args(a, cfg.seed)? {
        cfg.endpoint = Some(ep);
    }
    Ok(())
}

struct Ctx {
    json: bool,
    cfg: RunConfig,
    argv: Vec<String>,
}

impl Ctx {
    fn library(&self) -> Result<(Vec<MetaConstraint>, String)> {
        Ok(io::load_library(self.cfg.library.as_deref())?)
    }

    fn verifier(&self, library: &[MetaConstraint]) -> Verifier {
        build_verifier(library, self.cfg.verify, &self.cfg.external)
    }

    fn manifest(&self, library_sha256: String) -> RunManifest {
        RunManifest::new(self.argv.clone(), &self.cfg, library_sha256)
    }
}

fn instance_count(m: &MetaConstraint) -> u64 {
    m.instance_count()
}

fn constraints_list(ctx: &Ctx) -> Result<()> {
    #[derive(Serialize)]
    struct Row<'a> {
        id: &'a str,
        category: Category,
        level_hint: u8,
        instances: u64,
        template: &'a str,
    }
    let (lib, _) = ctx.library()?;
    let rows: Vec<Row> = lib
        .iter()
        .map(|m| Row {
            id: &m.id,
            category: m.category,
            level_hint: m.level_hint,
            instances: instance_count(m),
            template: &m.template,
        })
        .collect();
    emit(ctx.json, &rows, || {
        let mut s = format!("{:<28} {:<24} {:>9}  template\n", "id", "category", "instances");
        for r in &rows {
            s.push_str(&format!("{:<28} {:<24} {:>9}  {}\n", r.id, r.category.as_str(), r.instances, r.template));
        }
        s
    })
}

fn constraints_validate(ctx: &Ctx) -> Result<()> {
    #[derive(Serialize)]
    struct Summary {
        valid: bool,
        constraints: usize,
        instances: u64,
        categories: BTreeMap<String, usize>,
        sha256: String,
    }
    let (lib, sha256) = ctx.library()?;
    let verifier = ctx.verifier(&lib);
    let mut instances = 0u64;
    for m in &lib {
        for inst in m.instances().with_context(|| format!("constraint {}", m.id))? {
            if m.verifier.id != "external" {
                verifier
                    .verify(&inst, "")
                    .with_context(|| format!("constraint {}: {}", m.id, inst.rendered_text))?;
            }
            instances += 1;
        }
    }
    let mut categories = BTreeMap::new();
    for m in &lib {
        *categories.entry(m.category.as_str().to_string()).or_insert(0) += 1;
    }
    let s = Summary {
        valid: true,
        constraints: lib.len(),
        instances,
        categories,
        sha256,
    };
    emit(ctx.json, &s, || {
        format!(
            "ok: {} constraints, {} instances, {} categories\n",
            s.constraints,
            s.instances,
            s.categories.len()
        )
    })
}

fn forge_cmd(ctx: &mut Ctx, a: &ForgeArgs) -> Result<()> {
    apply_inputs(&mut ctx.cfg, &a.inputs);
    if a.seed.is_some() {
        ctx.cfg.seed = a.seed;
    }
    ctx.cfg.train_count = a.train.unwrap_or(ctx.cfg.train_count);
    ctx.cfg.test_count = a.test.unwrap_or(ctx.cfg.test_count);
    ctx.cfg.workers = a.workers.unwrap_or(ctx.cfg.workers);
    let seed = ctx.cfg.resolve_seed();
    let (lib, lib_sha) = ctx.library()?;
    let (pool, q_sha) = io::ingest_questions(ctx.cfg.questions.as_deref(), ctx.cfg.question_format)?;
    let spec = DatasetSpec {
        level: a.level,
        train_count: ctx.cfg.train_count,
        test_count: ctx.cfg.test_count,
        seed,
    };
    let split = forge_parallel(&pool, &lib, spec, ctx.cfg.workers)?;
    write_split(&a.out, &split)?;
    #[derive(Serialize)]
    struct Stats {
        train: fmtcheck::core::forge::DatasetStats,
        test: fmtcheck::core::forge::DatasetStats,
        question_reuse: usize,
        capacity: u64,
        train_hash: String,
        test_hash: String,
    }
    let stats = Stats {
        train: dataset_stats(&split.train, &lib),
        test: dataset_stats(&split.test, &lib),
        question_reuse: question_reuse(&split.train, &split.test),
        capacity: capacity(&pool, &lib, a.level),
        train_hash: io::split_hash(&split.train),
        test_hash: io::split_hash(&split.test),
    };
    io::write_json(&a.out.join("stats.json"), &stats)?;
    let mut m = ctx.manifest(lib_sha);
    m.questions_sha256 = Some(q_sha);
    m.write(&a.out)?;
    emit(ctx.json, &stats, || {
        format!(
            "level {}: {} train, {} test (capacity {}, {} questions shared) -> {}\n",
            a.level,
            split.train.len(),
            split.test.len(),
            stats.capacity,
            stats.question_reuse,
            a.out.display()
        )
    })
}

fn capacity_cmd(ctx: &mut Ctx, a: &CapacityArgs) -> Result<()> {
    apply_inputs(&mut ctx.cfg, &a.inputs);
    let (lib, _) = ctx.library()?;
    let (pool, _) = io::ingest_questions(ctx.cfg.questions.as_deref(), ctx.cfg.question_format)?;
    let levels: Vec<u8> = a.level.map_or_else(|| vec![1, 2, 3], |l| vec![l]);
    let out: BTreeMap<String, u64> = levels
        .iter()
        .map(|&l| (l.to_string(), capacity(&pool, &lib, l)))
        .collect();
    emit(ctx.json, &out, || {
        out.iter().map(|(l, c)| format!("level {l}: {c}\n")).collect()
    })
}

fn round_table(stats: &RoundStats) -> String {
    let mut s = format!(
        "{:>5} {:>9} {:>9} {:>8} {:>7} {:>9}\n",
        "round", "attempted", "responses", "correct", "solved", "cum.frac"
    );
    for r in &stats.rounds {
        s.push_str(&format!(
            "{:>5} {:>9} {:>9} {:>8} {:>7} {:>9.4}\n",
            r.round, r.attempted, r.responses, r.correct_responses, r.solved, r.cumulative_fraction
        ));
    }
    s
}

fn sample_cmd(ctx: &mut Ctx, a: &SampleArgs) -> Result<()> {
    apply_library(&mut ctx.cfg, &a.library);
    apply_sampling(&mut ctx.cfg, &a.sampling);
    apply_verify(&mut ctx.cfg, &a.verify);
    if a.seed.is_some() {
        ctx.cfg.seed = a.seed;
    }
    ctx.cfg.resolve_seed();
    apply_endpoint(&mut ctx.cfg, &a.endpoint)?;
    let endpoint = ctx.cfg.endpoint_or_stub();
    ctx.cfg.endpoint = Some(endpoint.clone());
    let (lib, lib_sha) = ctx.library()?;
    let dataset = io::load_dataset(&a.dataset)?;
    let backend = endpoint.connect(&lib)?;
    let (records, stats) = run_rounds(&dataset, backend.as_ref(), &ctx.verifier(&lib), &ctx.cfg.sampling)?;
    io::write_jsonl(&a.out.join("records.jsonl"), &strip_reports(&records))?;
    io::write_json(&a.out.join("round_stats.json"), &stats)?;
    let mut m = ctx.manifest(lib_sha);
    m.endpoint = Some(endpoint.identity());
    m.write(&a.out)?;
    emit(ctx.json, &stats, || round_table(&stats))
}

fn annotated(ctx: &Ctx, lib: &[MetaConstraint], dataset: &[FormatInstruction], records: &Path) -> Result<Vec<ResponseRecord>> {
    let mut records: Vec<ResponseRecord> = io::read_jsonl(records)?;
    annotate_parallel(&mut records, dataset, &ctx.verifier(lib))?;
    Ok(records)
}

fn annotate_cmd(ctx: &mut Ctx, a: &AnnotateArgs) -> Result<()> {
    apply_library(&mut ctx.cfg, &a.library);
    apply_verify(&mut ctx.cfg, &a.verify);
    let (lib, lib_sha) = ctx.library()?;
    let dataset = io::load_dataset(&a.dataset)?;
    let records = annotated(ctx, &lib, &dataset, &a.records)?;
    io::write_jsonl(&a.out.join("annotated.jsonl"), &records)?;
    ctx.manifest(lib_sha).write(&a.out)?;
    #[derive(Serialize)]
    struct Summary {
        records: usize,
        passed: usize,
        failed_transport: usize,
    }
    let s = Summary {
        records: records.len(),
        passed: records.iter().filter(|r| r.passed()).count(),
        failed_transport: records.iter().filter(|r| r.failed).count(),
    };
    emit(ctx.json, &s, || {
        format!("{} records, {} pass, {} without response\n", s.records, s.passed, s.failed_transport)
    })
}

fn export_cmd(ctx: &mut Ctx, a: &ExportArgs) -> Result<()> {
    apply_library(&mut ctx.cfg, &a.library);
    apply_verify(&mut ctx.cfg, &a.verify);
    if let Some(s) = a.schema {
        ctx.cfg.schema = s;
    }
    if let Some(m) = a.dpo_mode {
        ctx.cfg.dpo_mode = dpo_mode(m);
    }
    let (lib, lib_sha) = ctx.library()?;
    let dataset = io::load_dataset(&a.dataset)?;
    let Some(level) = dataset.first().map(|i| i.level) else {
        bail!("dataset {} is empty", a.dataset.display());
    };
    let records = annotated(ctx, &lib, &dataset, &a.records)?;
    let index = index_instructions(&dataset);
    let sft = build_sft(&records, &index)?;
    let dpo = build_dpo(&records, &index, ctx.cfg.dpo_mode)?;
    let ectx = ExportContext {
        schema: ctx.cfg.schema,
        dpo_mode: ctx.cfg.dpo_mode,
        seed: ctx.cfg.seed.unwrap_or(0),
        library_sha256: lib_sha.clone(),
        endpoint: ctx.cfg.endpoint.as_ref().map(EndpointConfig::identity).unwrap_or_default(),
    };
    let manifest = export_training_data(&sft, &dpo, &a.out, &index, &ctx.verifier(&lib), &ectx)?;
    emit_trainer_config(&a.out, level, SFT_FILE, DPO_FILE, &ctx.cfg.trainer, &a.out.join(TRAINER_CONFIG_FILE))?;
    ctx.manifest(lib_sha).write(&a.out)?;
    for w in &manifest.warnings {
        eprintln!("warning: {w}");
    }
    emit(ctx.json, &manifest, || {
        format!("{} SFT examples, {} DPO pairs -> {}\n", manifest.sft.count, manifest.dpo.count, a.out.display())
    })
}

fn eval_cmd(ctx: &mut Ctx, a: &EvalArgs) -> Result<()> {
    apply_library(&mut ctx.cfg, &a.library);
    apply_verify(&mut ctx.cfg, &a.verify);
    if a.seed.is_some() {
        ctx.cfg.seed = a.seed;
    }
    ctx.cfg.resolve_seed();
    ctx.cfg.eval_samples = a.samples.unwrap_or(ctx.cfg.eval_samples);
    ctx.cfg.sampling.concurrency = a.concurrency.unwrap_or(ctx.cfg.sampling.concurrency);
    let (lib, lib_sha) = ctx.library()?;
    let split = io::load_dataset(&a.dataset)?;
    let verifier = ctx.verifier(&lib);
    let report = match &a.cache {
        Some(cache) => {
            let records: Vec<ResponseRecord> = io::read_jsonl(cache)?;
            let endpoint = ctx.cfg.endpoint.as_ref().map(EndpointConfig::identity).unwrap_or_else(|| format!("cache:{}", cache.display()));
            let samples = records.iter().filter(|r| split.first().is_some_and(|i| i.id == r.instruction_id)).count().max(1) as u32;
            eval::score(&split, &records, &lib, &verifier, &endpoint, samples)?
        }
        None => {
            apply_endpoint(&mut ctx.cfg, &a.endpoint)?;
            let endpoint = ctx.cfg.endpoint_or_stub();
            ctx.cfg.endpoint = Some(endpoint.clone());
            let backend = endpoint.connect(&lib)?;
            let (report, records) = eval::evaluate(&split, backend.as_ref(), &lib, &verifier, ctx.cfg.eval_samples, &ctx.cfg.sampling)?;
            io::write_jsonl(&a.out.join("responses.jsonl"), &records)?;
            report
        }
    };
    io::write_json(&a.out.join("report.json"), &report)?;
    let table = format!("{}\n{}", eval::render_table(std::slice::from_ref(&report)), eval::render_categories(&report));
    io::write_atomic(&a.out.join("report.txt"), table.as_bytes())?;
    let mut m = ctx.manifest(lib_sha);
    m.endpoint = Some(report.endpoint.clone());
    m.write(&a.out)?;
    emit(ctx.json, &report, || table)
}

fn compare_cmd(ctx: &Ctx, a: &CompareArgs) -> Result<()> {
    let reports = a
        .reports
        .iter()
        .map(|p| io::read_json::<EvalReport>(p))
        .collect::<Result<Vec<_>, _>>()?;
    let c = eval::compare(&reports)?;
    if let Some(out) = &a.out {
        io::write_json(out, &c)?;
    }
    emit(ctx.json, &c, || format!("{}\n{}", eval::render_table(&reports), eval::render_comparison(&c)))
}

fn loss_cmd(ctx: &Ctx, cmd: &LossCmd) -> Result<()> {
    match cmd {
        LossCmd::Sft { logprobs, normalize } => {
            let seq = SequenceLogProb::new(logprobs.clone())?;
            let v = sft_loss(&seq, *normalize);
            emit(ctx.json, &serde_json::json!({ "loss": v }), || format!("{v:.6}\n"))
        }
        LossCmd::Dpo { margin: Some(m), .. } => {
            let v = dpo_loss_from_margin(*m);
            emit(ctx.json, &serde_json::json!({ "margin": m, "loss": v }), || format!("{v:.6}\n"))
        }
        LossCmd::Dpo { input: Some(path), .. } => {
            let batch: Vec<DpoInputs> = io::read_jsonl(path)?;
            let mut rows = Vec::with_capacity(batch.len());
            for (i, inputs) in batch.iter().enumerate() {
                inputs.validate().with_context(|| format!("{}: line {}", path.display(), i + 1))?;
                rows.push(serde_json::json!({ "margin": implicit_reward_margin(inputs), "loss": dpo_loss(inputs) }));
            }
            let mean = if batch.is_empty() { 0.0 } else { batch.iter().map(dpo_loss).sum::<f64>() / batch.len() as f64 };
            emit(ctx.json, &serde_json::json!({ "rows": rows, "mean": mean }), || {
                let mut s: String = rows.iter().map(|r| format!("{:.6}\n", r["loss"].as_f64().unwrap_or(f64::NAN))).collect();
                s.push_str(&format!("mean {mean:.6}\n"));
                s
            })
        }
        LossCmd::Dpo { .. } => bail!("either --margin or --input is required"),
    }
}

fn state_text(dir: &Path, s: &PipelineState) -> String {
    let mut t = format!("{}: level {} stage {}\n", dir.display(), s.current_level, s.stage.as_str());
    if s.stage == fmtcheck::pipeline::Stage::AwaitingTrainer {
        t.push_str(&format!(
            "train on {0}/level-{1}/{2}, then run `fmtcheck pipeline register-endpoint --dir {0} --level {1} ...`\n",
            dir.display(),
            s.current_level,
            TRAINER_CONFIG_FILE
        ));
    }
    t
}

fn pipeline_cmd(ctx: &mut Ctx, cmd: &PipelineCmd) -> Result<()> {
    match cmd {
        PipelineCmd::Run {
            dir,
            inputs,
            endpoint,
            sampling,
            verify,
            train,
            test,
            seed,
            workers,
            schema,
            dpo_mode: mode,
        } => {
            apply_inputs(&mut ctx.cfg, inputs);
            apply_sampling(&mut ctx.cfg, sampling);
            apply_verify(&mut ctx.cfg, verify);
            if seed.is_some() {
                ctx.cfg.seed = *seed;
            }
            ctx.cfg.train_count = train.unwrap_or(ctx.cfg.train_count);
            ctx.cfg.test_count = test.unwrap_or(ctx.cfg.test_count);
            ctx.cfg.workers = workers.unwrap_or(ctx.cfg.workers);
            if let Some(s) = schema {
                ctx.cfg.schema = *s;
            }
            if let Some(m) = mode {
                ctx.cfg.dpo_mode = dpo_mode(*m);
            }
            let seed = ctx.cfg.resolve_seed();
            apply_endpoint(&mut ctx.cfg, endpoint)?;
            ctx.cfg.endpoint = Some(ctx.cfg.endpoint_or_stub());
            let mut p = Pipeline::init(&dir.dir, ctx.cfg.pipeline(seed))?;
            if !dir.dir.join(fmtcheck::config::MANIFEST_FILE).exists() {
                let mut m = ctx.manifest(p.state().library_sha256.clone());
                m.questions_sha256 = Some(p.state().questions_sha256.clone());
                m.endpoint = ctx.cfg.endpoint.as_ref().map(EndpointConfig::identity);
                m.write(&dir.dir)?;
            }
            p.run()?;
            emit(ctx.json, p.state(), || state_text(&dir.dir, p.state()))
        }
        PipelineCmd::Resume(dir) => {
            let mut p = Pipeline::open(&dir.dir)?;
            p.run()?;
            emit(ctx.json, p.state(), || state_text(&dir.dir, p.state()))
        }
        PipelineCmd::RegisterEndpoint { dir, level, endpoint } => {
            let mut p = Pipeline::open(&dir.dir)?;
            let Some(ep) = endpoint_from_args(endpoint, Some(p.state().seed))? else {
                bail!("an endpoint is required: --endpoint, --stub or --base-url/--model");
            };
            p.register_trained_endpoint(*level, ep)?;
            emit(ctx.json, p.state(), || state_text(&dir.dir, p.state()))
        }
    }
}

/// The error and its causes, skipping causes already quoted by their parent.
fn describe(e: &anyhow::Error) -> String {
    let mut out = e.to_string();
    let mut last = out.clone();
    for cause in e.chain().skip(1) {
        let c = cause.to_string();
        if !last.contains(&c) {
            out.push_str(": ");
            out.push_str(&c);
        }
        last = c;
    }
    out
}

fn run(cli: Cli, argv: Vec<String>) -> Result<()> {
    let cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let mut ctx = Ctx { json: cli.json, cfg, argv };
    match &cli.cmd {
        Cmd::Constraints(ConstraintsCmd::List(l)) => {
            apply_library(&mut ctx.cfg, l);
            constraints_list(&ctx)
        }
        Cmd::Constraints(ConstraintsCmd::Validate(l)) => {
            apply_library(&mut ctx.cfg, l);
            constraints_validate(&ctx)
        }
        Cmd::Forge(a) => forge_cmd(&mut ctx, a),
        Cmd::Capacity(a) => capacity_cmd(&mut ctx, a),
        Cmd::Sample(a) => sample_cmd(&mut ctx, a),
        Cmd::Annotate(a) => annotate_cmd(&mut ctx, a),
        Cmd::Export(a) => export_cmd(&mut ctx, a),
        Cmd::Eval(a) => eval_cmd(&mut ctx, a),
        Cmd::Compare(a) => compare_cmd(&ctx, a),
        Cmd::Loss(c) => loss_cmd(&ctx, c),
        Cmd::Pipeline(c) => pipeline_cmd(&mut ctx, c),
    }
}

fn main() -> ExitCode {
    let mut argv: Vec<String> = std::env::args().collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let json = cli.json;
    if let Some(first) = argv.first_mut() {
        *first = env!("CARGO_PKG_NAME").into();
    }
    match run(cli, argv) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            if json {
                println!("{}", serde_json::json!({ "error": describe(&e) }));
            }
            eprintln!("error: {}", describe(&e));
            ExitCode::from(1)
        }
    }
}
