//! Seeded synthesis of level-stratified instruction datasets.
//!
//! Every instruction draws its randomness from `(seed, index)` alone, so
//! draws can be computed on any number of workers and then assembled into
//! the same dataset. Duplicates are resolved sequentially in index order.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::constraint::{render_prompt, Category, FormatInstruction, InstantiateError, MetaConstraint, PromptError, MAX_LEVEL};

/// Redraws allowed when a constraint combination is incompatible.
pub const INCOMPATIBLE_RETRY_BUDGET: usize = 100;
/// Redraws allowed when an instruction duplicates an earlier one.
pub const DUPLICATE_RETRY_BUDGET: u32 = 100;
/// Largest space enumerated outright when the request is dense.
pub const ENUMERATION_LIMIT: u64 = 1_000_000;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Question {
    pub id: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuestionPool {
    pub source_name: String,
    pub questions: Vec<Question>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ForgeError {
    #[error("cannot parse question source: {0}")]
    Parse(String),
    #[error("empty pool")]
    EmptyPool,
    #[error("duplicate question id {0}")]
    DuplicateQuestionId(String),
    #[error("question {0} has empty text")]
    EmptyQuestion(String),
    #[error("level must be between 1 and {MAX_LEVEL}, got {0}")]
    BadLevel(u8),
    #[error("constraint library is empty")]
    EmptyLibrary,
    #[error("library too constrained: no compatible combination of {0} constraints")]
    TooConstrained(u8),
    #[error("insufficient questions: requested {requested} instructions but only {capacity} distinct ones exist")]
    Insufficient { requested: u64, capacity: u64 },
    #[error("retry budget exhausted for instruction {0}")]
    RetryBudgetExhausted(usize),
    #[error(transparent)]
    Instantiate(#[from] InstantiateError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
}

impl QuestionPool {
    pub fn new(source_name: impl Into<String>, questions: Vec<Question>) -> Result<Self, ForgeError> {
        if questions.is_empty() {
            return Err(ForgeError::EmptyPool);
        }
        let mut ids = BTreeSet::new();
        for q in &questions {
            if !ids.insert(q.id.as_str()) {
                return Err(ForgeError::DuplicateQuestionId(q.id.clone()));
            }
            if q.text.trim().is_empty() {
                return Err(ForgeError::EmptyQuestion(q.id.clone()));
            }
        }
        Ok(QuestionPool {
            source_name: source_name.into(),
            questions,
        })
    }

    pub fn len(&self) -> usize {
        self.questions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.questions.is_empty()
    }
}

#[derive(Deserialize)]
struct AlpacaRecord {
    instruction: String,
    #[serde(default)]
    input: String,
}

/// Alpaca records: a JSON array, or JSON Lines. The question is the
/// instruction, followed by a newline and the input when the input is non-empty.
pub fn parse_alpaca(src: &str, source_name: &str) -> Result<QuestionPool, ForgeError> {
    let trimmed = src.trim_start();
    let records: Vec<AlpacaRecord> = if trimmed.starts_with('[') {
        serde_json::from_str(trimmed).map_err(|e| ForgeError::Parse(e.to_string()))?
    } else {
        trimmed
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(n, l)| serde_json::from_str(l).map_err(|e| ForgeError::Parse(format!("line {}: {e}", n + 1))))
            .collect::<Result<_, _>>()?
    };
    let questions = records
        .into_iter()
        .enumerate()
        .map(|(i, r)| Question {
            id: format!("{source_name}:{i}"),
            text: if r.input.trim().is_empty() {
                r.instruction
            } else {
                format!("{}\n{}", r.instruction, r.input)
            },
        })
        .collect();
    QuestionPool::new(source_name, questions)
}

/// One question per non-blank line; ids carry the 1-based line number.
pub fn parse_plain_lines(src: &str, source_name: &str) -> Result<QuestionPool, ForgeError> {
    let questions = src
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, l)| Question {
            id: format!("{source_name}:{}", n + 1),
            text: l.trim().to_string(),
        })
        .collect();
    QuestionPool::new(source_name, questions)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub level: u8,
    pub train_count: usize,
    pub test_count: usize,
    pub seed: u64,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        DatasetSpec {
            level: 1,
            train_count: 10_000,
            test_count: 7_000,
            seed: 0,
        }
    }
}

impl DatasetSpec {
    pub fn total(&self) -> usize {
        self.train_count + self.test_count
    }
}

/// Index sets (ascending) of `level` pairwise-compatible constraints.
pub fn compatible_subsets(library: &[MetaConstraint], level: usize) -> Vec<Vec<usize>> {
    fn extend(lib: &[MetaConstraint], level: usize, start: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == level {
            out.push(cur.clone());
            return;
        }
        for i in start..lib.len() {
            if cur.iter().all(|&j| lib[j].compatible_with(&lib[i])) {
                cur.push(i);
                extend(lib, level, i + 1, cur, out);
                cur.pop();
            }
        }
    }
    let mut out = Vec::new();
    if level > 0 {
        extend(library, level, 0, &mut Vec::new(), &mut out);
    }
    out
}

fn subset_instances(library: &[MetaConstraint], subset: &[usize]) -> u64 {
    subset
        .iter()
        .map(|&i| library[i].instance_count())
        .fold(1u64, |a, b| a.saturating_mul(b))
}

/// Number of distinct instructions (question plus unordered constraint
/// instances) producible at `level`.
pub fn capacity(pool: &QuestionPool, library: &[MetaConstraint], level: u8) -> u64 {
    let per_question = compatible_subsets(library, level as usize)
        .iter()
        .map(|s| subset_instances(library, s))
        .fold(0u64, |a, b| a.saturating_add(b));
    per_question.saturating_mul(pool.len() as u64)
}

/// The random choices behind one instruction: question index and, in prompt
/// order, each constraint's library index with its candidate indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Draw {
    pub question: usize,
    pub picks: Vec<(usize, Vec<usize>)>,
}

impl Draw {
    fn key(&self) -> (usize, Vec<(usize, Vec<usize>)>) {
        let mut picks = self.picks.clone();
        picks.sort();
        (self.question, picks)
    }
}

/// Train and test instructions of one level.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Split {
    pub train: Vec<FormatInstruction>,
    pub test: Vec<FormatInstruction>,
}

impl Split {
    pub fn all(&self) -> impl Iterator<Item = &FormatInstruction> {
        self.train.iter().chain(self.test.iter())
    }

    pub fn len(&self) -> usize {
        self.train.len() + self.test.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

pub struct Forge<'a> {
    pool: &'a QuestionPool,
    library: &'a [MetaConstraint],
    spec: DatasetSpec,
    subsets: Vec<Vec<usize>>,
    capacity: u64,
    seed: u64,
}

impl<'a> Forge<'a> {
    pub fn new(pool: &'a QuestionPool, library: &'a [MetaConstraint], spec: DatasetSpec) -> Result<Self, ForgeError> {
        if spec.level == 0 || spec.level as usize > MAX_LEVEL {
            return Err(ForgeError::BadLevel(spec.level));
        }
        if library.is_empty() {
            return Err(ForgeError::EmptyLibrary);
        }
        if pool.is_empty() {
            return Err(ForgeError::EmptyPool);
        }
        let subsets = compatible_subsets(library, spec.level as usize);
        if subsets.is_empty() {
            return Err(ForgeError::TooConstrained(spec.level));
        }
        let capacity = subsets
            .iter()
            .map(|s| subset_instances(library, s))
            .fold(0u64, |a, b| a.saturating_add(b))
            .saturating_mul(pool.len() as u64);
        if (spec.total() as u64) > capacity {
            return Err(ForgeError::Insufficient {
                requested: spec.total() as u64,
                capacity,
            });
        }
        let seed = spec.seed ^ u64::from(spec.level).wrapping_mul(0x9E37_79B9_7F4A_7C15);
        Ok(Forge {
            pool,
            library,
            spec,
            subsets,
            capacity,
            seed,
        })
    }

    pub fn capacity(&self) -> u64 {
        self.capacity
    }

    /// Dense requests cover a large share of a small space; they are served
    /// by enumerating and shuffling that space instead of rejection sampling.
    pub fn is_dense(&self) -> bool {
        self.capacity <= ENUMERATION_LIMIT && self.capacity <= 4 * self.spec.total() as u64
    }

    fn rng(&self, stream: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(stream);
        rng
    }

    /// Draw for instruction `index`; `attempt` > 0 redraws after a duplicate.
    pub fn draw(&self, index: usize, attempt: u32) -> Result<Draw, ForgeError> {
        let mut rng = self.rng(index as u64 | (u64::from(attempt) << 40));
        let question = rng.random_range(0..self.pool.len());
        let level = self.spec.level as usize;
        for _ in 0..INCOMPATIBLE_RETRY_BUDGET {
            let ids = rand::seq::index::sample(&mut rng, self.library.len(), level).into_vec();
            let compatible = ids
                .iter()
                .enumerate()
                .all(|(a, &i)| ids[a + 1..].iter().all(|&j| self.library[i].compatible_with(&self.library[j])));
            if !compatible {
                continue;
            }
            let picks = ids
                .into_iter()
                .map(|m| {
                    let values = self.library[m]
                        .variables
                        .iter()
                        .map(|v| rng.random_range(0..v.candidates.len()))
                        .collect();
                    (m, values)
                })
                .collect();
            return Ok(Draw { question, picks });
        }
        Err(ForgeError::RetryBudgetExhausted(index))
    }

    /// Turns first-attempt draws (index order) into the dataset.
    pub fn assemble(&self, first: Vec<Draw>) -> Result<Split, ForgeError> {
        let mut seen = BTreeSet::new();
        let mut out = Vec::with_capacity(first.len());
        for (index, draw) in first.into_iter().enumerate() {
            let mut draw = draw;
            let mut attempt = 0;
            while !seen.insert(draw.key()) {
                attempt += 1;
                if attempt > DUPLICATE_RETRY_BUDGET {
                    return Err(ForgeError::RetryBudgetExhausted(index));
                }
                draw = self.draw(index, attempt)?;
            }
            out.push(self.materialize(index, &draw)?);
        }
        Ok(self.split(out))
    }

    fn split(&self, mut all: Vec<FormatInstruction>) -> Split {
        let test = all.split_off(self.spec.train_count.min(all.len()));
        Split { train: all, test }
    }

    fn enumerate(&self) -> Vec<Draw> {
        let mut out = Vec::new();
        for subset in &self.subsets {
            let radices: Vec<Vec<usize>> = subset
                .iter()
                .map(|&m| self.library[m].variables.iter().map(|v| v.candidates.len()).collect())
                .collect();
            let mut combos: Vec<Vec<Vec<usize>>> = alloc::vec![Vec::new()];
            for r in &radices {
                let mut next = Vec::new();
                for prefix in &combos {
                    for values in mixed_radix(r) {
                        let mut p = prefix.clone();
                        p.push(values);
                        next.push(p);
                    }
                }
                combos = next;
            }
            for combo in combos {
                for q in 0..self.pool.len() {
                    out.push(Draw {
                        question: q,
                        picks: subset.iter().copied().zip(combo.iter().cloned()).collect(),
                    });
                }
            }
        }
        out
    }

    /// Sequential synthesis.
    pub fn run(&self) -> Result<Split, ForgeError> {
        if self.is_dense() {
            return self.run_dense();
        }
        let draws = (0..self.spec.total())
            .map(|i| self.draw(i, 0))
            .collect::<Result<Vec<_>, _>>()?;
        self.assemble(draws)
    }

    pub fn run_dense(&self) -> Result<Split, ForgeError> {
        let mut space = self.enumerate();
        space.shuffle(&mut self.rng(u64::MAX));
        space.truncate(self.spec.total());
        let mut out = Vec::with_capacity(space.len());
        for (index, mut draw) in space.into_iter().enumerate() {
            draw.picks.shuffle(&mut self.rng(index as u64));
            out.push(self.materialize(index, &draw)?);
        }
        Ok(self.split(out))
    }

    fn materialize(&self, index: usize, draw: &Draw) -> Result<FormatInstruction, ForgeError> {
        let q = &self.pool.questions[draw.question];
        let instances = draw
            .picks
            .iter()
            .map(|(m, values)| self.library[*m].instantiate_indices(values))
            .collect::<Result<Vec<_>, _>>()?;
        let prompt = render_prompt(&q.text, &instances)?;
        let id = if index < self.spec.train_count {
            format!("L{}-train-{index:06}", self.spec.level)
        } else {
            format!("L{}-test-{:06}", self.spec.level, index - self.spec.train_count)
        };
        Ok(FormatInstruction {
            id,
            level: self.spec.level,
            question: q.text.clone(),
            question_source_id: q.id.clone(),
            instances,
            prompt,
        })
    }
}

fn mixed_radix(radices: &[usize]) -> Vec<Vec<usize>> {
    let mut out = alloc::vec![Vec::new()];
    for &r in radices {
        out = out
            .into_iter()
            .flat_map(|p: Vec<usize>| {
                (0..r).map(move |i| {
                    let mut v = p.clone();
                    v.push(i);
                    v
                })
            })
            .collect();
    }
    out
}

/// Synthesizes `spec.train_count + spec.test_count` distinct instructions.
pub fn synthesize_split(pool: &QuestionPool, library: &[MetaConstraint], spec: DatasetSpec) -> Result<Split, ForgeError> {
    Forge::new(pool, library, spec)?.run()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub instructions: usize,
    pub constraint_instances: usize,
    pub levels: BTreeMap<u8, usize>,
    pub categories: BTreeMap<String, usize>,
    pub meta_ids: BTreeMap<String, usize>,
    pub distinct_questions: usize,
}

/// Distribution of instructions per level and of constraint instances per
/// category and meta id. Instances whose meta id is not in `library` count
/// under the category `unknown`.
pub fn dataset_stats<'a>(
    instructions: impl IntoIterator<Item = &'a FormatInstruction>,
    library: &[MetaConstraint],
) -> DatasetStats {
    let mut stats = DatasetStats {
        instructions: 0,
        constraint_instances: 0,
        levels: (1..=MAX_LEVEL as u8).map(|l| (l, 0)).collect(),
        categories: Category::ALL.iter().map(|c| (c.as_str().to_string(), 0)).collect(),
        meta_ids: BTreeMap::new(),
        distinct_questions: 0,
    };
    let categories: BTreeMap<&str, Category> = library.iter().map(|m| (m.id.as_str(), m.category)).collect();
    let mut questions = BTreeSet::new();
    for ins in instructions {
        stats.instructions += 1;
        *stats.levels.entry(ins.level).or_insert(0) += 1;
        questions.insert(ins.question_source_id.clone());
        for inst in &ins.instances {
            stats.constraint_instances += 1;
            let cat = categories.get(inst.meta_id.as_str()).map_or("unknown", |c| c.as_str());
            *stats.categories.entry(cat.to_string()).or_insert(0) += 1;
            *stats.meta_ids.entry(inst.meta_id.clone()).or_insert(0) += 1;
        }
    }
    stats.distinct_questions = questions.len();
    stats
}

/// Number of question sources used by both splits.
pub fn question_reuse(train: &[FormatInstruction], test: &[FormatInstruction]) -> usize {
    let a: BTreeSet<&str> = train.iter().map(|i| i.question_source_id.as_str()).collect();
    test.iter()
        .map(|i| i.question_source_id.as_str())
        .collect::<BTreeSet<_>>()
        .intersection(&a)
        .count()
}
