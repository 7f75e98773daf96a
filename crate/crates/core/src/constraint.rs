//! Constraint data model: meta constraints, their variables, instantiation
//! and prompt rendering, plus the JSON constraint-library format.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::verify::{self, ParamKind};

/// Prefix of the first constraint line in a rendered prompt.
pub const FIRST_PREFIX: &str = "CONSTRAINT: ";
/// Prefix of every further constraint line.
pub const NEXT_PREFIX: &str = "This is a new CONSTRAINT also needs to obey: ";

/// Upper bound on constraints per instruction.
pub const MAX_LEVEL: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Category {
    SpecificNumberFormat,
    LimitedGrammar,
    LimitedStructure,
    LimitedPunctuation,
    LimitedWordCount,
    LimitedContent,
}

impl Category {
    pub const ALL: [Category; 6] = [
        Category::SpecificNumberFormat,
        Category::LimitedGrammar,
        Category::LimitedStructure,
        Category::LimitedPunctuation,
        Category::LimitedWordCount,
        Category::LimitedContent,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Category::SpecificNumberFormat => "specific-number-format",
            Category::LimitedGrammar => "limited-grammar",
            Category::LimitedStructure => "limited-structure",
            Category::LimitedPunctuation => "limited-punctuation",
            Category::LimitedWordCount => "limited-word-count",
            Category::LimitedContent => "limited-content",
        }
    }

    pub fn parse(s: &str) -> Option<Category> {
        Category::ALL.into_iter().find(|c| c.as_str() == s)
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum VarKind {
    #[serde(rename = "int")]
    Integer,
    #[serde(rename = "text")]
    Text,
    #[serde(rename = "text-choice")]
    TextChoice,
}

/// A concrete candidate value for a variable.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Value {
    Int(i64),
    Text(String),
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Int(n) => write!(f, "{n}"),
            Value::Text(s) => f.write_str(s),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariableSpec {
    pub name: String,
    #[serde(rename = "type")]
    pub kind: VarKind,
    #[serde(rename = "values")]
    pub candidates: Vec<Value>,
}

/// A parameter expression inside a verifier binding. A text of the exact
/// form `[[NAME]]` refers to the variable `NAME`; anything else is a literal.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParamExpr {
    Int(i64),
    Text(String),
    List(Vec<String>),
}

/// A parameter value after variable substitution.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParamValue {
    Int(i64),
    Text(String),
    List(Vec<String>),
}

impl ParamValue {
    pub fn as_int(&self) -> Option<i64> {
        match self {
            ParamValue::Int(n) => Some(*n),
            _ => None,
        }
    }

    pub fn as_text(&self) -> Option<&str> {
        match self {
            ParamValue::Text(s) => Some(s),
            _ => None,
        }
    }

    /// Lists accept a bare text as a comma-separated list.
    pub fn as_list(&self) -> Option<Vec<String>> {
        match self {
            ParamValue::List(items) => Some(items.clone()),
            ParamValue::Text(s) => Some(
                s.split(',')
                    .map(|p| p.trim().to_string())
                    .filter(|p| !p.is_empty())
                    .collect(),
            ),
            ParamValue::Int(_) => None,
        }
    }
}

pub type Params = BTreeMap<String, ParamValue>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifierBinding {
    pub id: String,
    #[serde(default)]
    pub params: BTreeMap<String, ParamExpr>,
}

fn default_level_hint() -> u8 {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetaConstraint {
    pub id: String,
    pub category: Category,
    #[serde(default = "default_level_hint")]
    pub level_hint: u8,
    pub template: String,
    #[serde(rename = "vars", default)]
    pub variables: Vec<VariableSpec>,
    pub verifier: VerifierBinding,
    #[serde(default)]
    pub explanation: String,
    #[serde(default)]
    pub incompatible_with: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ConstraintInstance {
    pub meta_id: String,
    pub rendered_text: String,
    pub bound_params: Params,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FormatInstruction {
    pub id: String,
    pub level: u8,
    pub question: String,
    pub question_source_id: String,
    #[serde(rename = "constraints")]
    pub instances: Vec<ConstraintInstance>,
    pub prompt: String,
}

/// One broken invariant of a meta constraint.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    EmptyId,
    UnboundPlaceholder(String),
    UnusedVariable(String),
    DuplicateVariable(String),
    NoCandidates(String),
    DuplicateCandidate(String),
    CandidateKind(String),
    CandidateMarker(String),
    MultilineTemplate,
    UnknownVerifier(String),
    MissingParam(String),
    UnknownParam(String),
    ParamKind(String),
    UnknownVariableRef(String),
    ParamDomain(String),
    BadExclusion(String),
    DuplicateId,
    UnknownExclusionTarget(String),
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::EmptyId => f.write_str("empty id"),
            Violation::UnboundPlaceholder(p) => write!(f, "unbound placeholder [[{p}]]"),
            Violation::UnusedVariable(v) => write!(f, "variable {v} has no placeholder"),
            Violation::DuplicateVariable(v) => write!(f, "variable {v} declared twice"),
            Violation::NoCandidates(v) => write!(f, "variable {v} has no candidates"),
            Violation::DuplicateCandidate(v) => write!(f, "variable {v} has duplicate candidates"),
            Violation::CandidateKind(v) => write!(f, "variable {v} has a candidate of the wrong type"),
            Violation::CandidateMarker(v) => {
                write!(f, "variable {v} has a candidate containing a placeholder marker")
            }
            Violation::MultilineTemplate => f.write_str("template contains a line break"),
            Violation::UnknownVerifier(id) => write!(f, "unknown verifier {id}"),
            Violation::MissingParam(p) => write!(f, "missing verifier parameter {p}"),
            Violation::UnknownParam(p) => write!(f, "unknown verifier parameter {p}"),
            Violation::ParamKind(p) => write!(f, "verifier parameter {p} has the wrong type"),
            Violation::UnknownVariableRef(v) => write!(f, "binding references undeclared variable {v}"),
            Violation::ParamDomain(msg) => write!(f, "parameter out of domain: {msg}"),
            Violation::BadExclusion(e) => write!(f, "malformed incompatibility entry {e}"),
            Violation::DuplicateId => f.write_str("duplicate constraint id"),
            Violation::UnknownExclusionTarget(e) => {
                write!(f, "incompatibility entry {e} names no constraint in the library")
            }
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum LibraryError {
    #[error("malformed constraint library: {0}")]
    Parse(String),
    #[error("constraint {id} failed validation: {}", join_violations(.violations))]
    Invalid { id: String, violations: Vec<Violation> },
}

fn join_violations(v: &[Violation]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join("; ")
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum InstantiateError {
    #[error("no value chosen for variable {0}")]
    MissingChoice(String),
    #[error("value {value} is not a candidate of variable {var}")]
    NotACandidate { var: String, value: String },
    #[error("choice names unknown variable {0}")]
    UnknownVariable(String),
    #[error("binding cannot be resolved: {0}")]
    Binding(String),
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PromptError {
    #[error("an instruction needs at least one constraint")]
    NoConstraints,
    #[error("an instruction carries at most {MAX_LEVEL} constraints, got {0}")]
    TooManyConstraints(usize),
}

/// Placeholder names appearing in `template`, in order of appearance.
pub fn placeholders(template: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut rest = template;
    while let Some(start) = rest.find("[[") {
        let after = &rest[start + 2..];
        match after.find("]]") {
            Some(end) => {
                out.push(&after[..end]);
                rest = &after[end + 2..];
            }
            None => break,
        }
    }
    out
}

fn var_ref(s: &str) -> Option<&str> {
    s.strip_prefix("[[")
        .and_then(|r| r.strip_suffix("]]"))
        .filter(|name| !name.is_empty() && !name.contains("[[") && !name.contains("]]"))
}

/// Parses an incompatibility entry: either a constraint id or `category:<name>`.
pub enum Exclusion<'a> {
    Id(&'a str),
    Category(Category),
}

pub fn parse_exclusion(entry: &str) -> Option<Exclusion<'_>> {
    match entry.strip_prefix("category:") {
        Some(cat) => Category::parse(cat).map(Exclusion::Category),
        None if !entry.is_empty() => Some(Exclusion::Id(entry)),
        None => None,
    }
}

impl MetaConstraint {
    pub fn variable(&self, name: &str) -> Option<&VariableSpec> {
        self.variables.iter().find(|v| v.name == name)
    }

    fn excludes(&self, other: &MetaConstraint) -> bool {
        self.incompatible_with.iter().any(|e| match parse_exclusion(e) {
            Some(Exclusion::Id(id)) => id == other.id,
            Some(Exclusion::Category(c)) => c == other.category,
            None => false,
        })
    }

    /// Symmetric: either side's exclusion list forbids the pair.
    pub fn compatible_with(&self, other: &MetaConstraint) -> bool {
        self.id != other.id && !self.excludes(other) && !other.excludes(self)
    }

    /// Number of distinct instances: product of candidate counts, 1 when variable-free.
    pub fn instance_count(&self) -> u64 {
        self.variables
            .iter()
            .map(|v| v.candidates.len() as u64)
            .fold(1u64, |acc, n| acc.saturating_mul(n))
    }

    /// Instantiates by candidate index per variable, in declaration order.
    pub fn instantiate_indices(&self, indices: &[usize]) -> Result<ConstraintInstance, InstantiateError> {
        let mut choice = BTreeMap::new();
        for (var, &i) in self.variables.iter().zip(indices) {
            let value = var
                .candidates
                .get(i)
                .ok_or_else(|| InstantiateError::MissingChoice(var.name.clone()))?;
            choice.insert(var.name.clone(), value.clone());
        }
        instantiate(self, &choice)
    }

    /// Every instance, in mixed-radix order of candidate indices (last
    /// variable fastest).
    pub fn instances(&self) -> Result<Vec<ConstraintInstance>, InstantiateError> {
        let radices: Vec<usize> = self.variables.iter().map(|v| v.candidates.len()).collect();
        let mut idx = alloc::vec![0usize; radices.len()];
        let mut out = Vec::new();
        loop {
            out.push(self.instantiate_indices(&idx)?);
            let mut pos = radices.len();
            loop {
                if pos == 0 {
                    return Ok(out);
                }
                pos -= 1;
                idx[pos] += 1;
                if idx[pos] < radices[pos] {
                    break;
                }
                idx[pos] = 0;
            }
        }
    }
}

/// Checks every [`MetaConstraint`] invariant. An empty result means valid.
pub fn validate_meta(m: &MetaConstraint) -> Vec<Violation> {
    let mut out = Vec::new();
    if m.id.trim().is_empty() {
        out.push(Violation::EmptyId);
    }
    if m.template.contains('\n') || m.template.contains('\r') {
        out.push(Violation::MultilineTemplate);
    }

    let mut declared = BTreeSet::new();
    for v in &m.variables {
        if !declared.insert(v.name.as_str()) {
            out.push(Violation::DuplicateVariable(v.name.clone()));
        }
        if v.candidates.is_empty() {
            out.push(Violation::NoCandidates(v.name.clone()));
        }
        let unique: BTreeSet<_> = v.candidates.iter().collect();
        if unique.len() != v.candidates.len() {
            out.push(Violation::DuplicateCandidate(v.name.clone()));
        }
        let kind_ok = v.candidates.iter().all(|c| {
            matches!(
                (v.kind, c),
                (VarKind::Integer, Value::Int(_)) | (VarKind::Text | VarKind::TextChoice, Value::Text(_))
            )
        });
        if !kind_ok {
            out.push(Violation::CandidateKind(v.name.clone()));
        }
        if v.candidates.iter().any(|c| matches!(c, Value::Text(s) if s.contains("[[") || s.contains("]]"))) {
            out.push(Violation::CandidateMarker(v.name.clone()));
        }
    }

    let used: BTreeSet<&str> = placeholders(&m.template).into_iter().collect();
    for p in &used {
        if !declared.contains(p) {
            out.push(Violation::UnboundPlaceholder((*p).to_string()));
        }
    }
    for v in &declared {
        if !used.contains(v) {
            out.push(Violation::UnusedVariable((*v).to_string()));
        }
    }

    for e in &m.incompatible_with {
        if parse_exclusion(e).is_none() {
            out.push(Violation::BadExclusion(e.clone()));
        }
    }

    validate_binding(m, &mut out);
    out
}

fn validate_binding(m: &MetaConstraint, out: &mut Vec<Violation>) {
    let Some(schema) = verify::param_schema(&m.verifier.id) else {
        out.push(Violation::UnknownVerifier(m.verifier.id.clone()));
        return;
    };
    for spec in schema {
        if spec.required && !m.verifier.params.contains_key(spec.name) {
            out.push(Violation::MissingParam(spec.name.to_string()));
        }
    }
    let mut kinds_ok = true;
    for (name, expr) in &m.verifier.params {
        let Some(spec) = schema.iter().find(|s| s.name == name) else {
            out.push(Violation::UnknownParam(name.clone()));
            kinds_ok = false;
            continue;
        };
        let refs: Vec<&str> = match expr {
            ParamExpr::Int(_) => Vec::new(),
            ParamExpr::Text(s) => var_ref(s).into_iter().collect(),
            ParamExpr::List(items) => items.iter().filter_map(|s| var_ref(s)).collect(),
        };
        for r in &refs {
            if m.variable(r).is_none() {
                out.push(Violation::UnknownVariableRef((*r).to_string()));
                kinds_ok = false;
            }
        }
        let ok = match (spec.kind, expr) {
            (ParamKind::Int, ParamExpr::Int(_)) => true,
            (ParamKind::Int, ParamExpr::Text(s)) => {
                var_ref(s).and_then(|r| m.variable(r)).is_some_and(|v| v.kind == VarKind::Integer)
            }
            (ParamKind::Text, ParamExpr::Text(s)) => match var_ref(s) {
                Some(r) => m.variable(r).is_some_and(|v| v.kind != VarKind::Integer),
                None => true,
            },
            (ParamKind::TextList, ParamExpr::Text(_) | ParamExpr::List(_)) => {
                let texts: Vec<&String> = match expr {
                    ParamExpr::Text(s) => alloc::vec![s],
                    ParamExpr::List(items) => items.iter().collect(),
                    ParamExpr::Int(_) => Vec::new(),
                };
                texts.iter().all(|s| match var_ref(s) {
                    Some(r) => m.variable(r).is_some_and(|v| v.kind != VarKind::Integer),
                    None => true,
                })
            }
            _ => false,
        };
        if !ok {
            out.push(Violation::ParamKind(name.clone()));
            kinds_ok = false;
        }
    }
    if !kinds_ok || out.iter().any(|v| matches!(v, Violation::MissingParam(_))) {
        return;
    }

    // Domain check: each candidate, with the other variables at their first candidate.
    if m.variables.iter().any(|v| v.candidates.is_empty()) {
        return;
    }
    let base: Vec<usize> = alloc::vec![0; m.variables.len()];
    let mut probes = alloc::vec![base.clone()];
    for (vi, var) in m.variables.iter().enumerate() {
        for ci in 1..var.candidates.len() {
            let mut p = base.clone();
            p[vi] = ci;
            probes.push(p);
        }
    }
    for probe in probes {
        let params = match m.instantiate_indices(&probe) {
            Ok(inst) => inst.bound_params,
            Err(e) => {
                out.push(Violation::ParamDomain(e.to_string()));
                return;
            }
        };
        if let Err(e) = verify::Check::from_params(&m.verifier.id, &params) {
            out.push(Violation::ParamDomain(e.to_string()));
            return;
        }
    }
}

fn resolve_text(s: &str, choice: &BTreeMap<String, Value>) -> Result<String, InstantiateError> {
    match var_ref(s) {
        Some(r) => choice
            .get(r)
            .map(|v| v.to_string())
            .ok_or_else(|| InstantiateError::Binding(format!("variable {r} unset"))),
        None => Ok(s.to_string()),
    }
}

/// Substitutes the chosen values into the template and the verifier binding.
pub fn instantiate(
    m: &MetaConstraint,
    choice: &BTreeMap<String, Value>,
) -> Result<ConstraintInstance, InstantiateError> {
    for name in choice.keys() {
        if m.variable(name).is_none() {
            return Err(InstantiateError::UnknownVariable(name.clone()));
        }
    }
    for var in &m.variables {
        let value = choice
            .get(&var.name)
            .ok_or_else(|| InstantiateError::MissingChoice(var.name.clone()))?;
        if !var.candidates.contains(value) {
            return Err(InstantiateError::NotACandidate {
                var: var.name.clone(),
                value: value.to_string(),
            });
        }
    }

    let mut rendered = String::with_capacity(m.template.len());
    let mut rest = m.template.as_str();
    while let Some(start) = rest.find("[[") {
        let after = &rest[start + 2..];
        let Some(end) = after.find("]]") else { break };
        let name = &after[..end];
        rendered.push_str(&rest[..start]);
        match choice.get(name) {
            Some(v) => rendered.push_str(&v.to_string()),
            None => return Err(InstantiateError::MissingChoice(name.to_string())),
        }
        rest = &after[end + 2..];
    }
    rendered.push_str(rest);

    let mut bound = Params::new();
    for (name, expr) in &m.verifier.params {
        let value = match expr {
            ParamExpr::Int(n) => ParamValue::Int(*n),
            ParamExpr::Text(s) => match var_ref(s).map(|r| choice.get(r)) {
                Some(Some(Value::Int(n))) => ParamValue::Int(*n),
                Some(Some(Value::Text(t))) => ParamValue::Text(t.clone()),
                Some(None) => return Err(InstantiateError::Binding(format!("variable in {s} unset"))),
                None => ParamValue::Text(s.clone()),
            },
            ParamExpr::List(items) => ParamValue::List(
                items
                    .iter()
                    .map(|s| resolve_text(s, choice))
                    .collect::<Result<_, _>>()?,
            ),
        };
        bound.insert(name.clone(), value);
    }

    Ok(ConstraintInstance {
        meta_id: m.id.clone(),
        rendered_text: rendered,
        bound_params: bound,
    })
}

/// Question, then one line per constraint: the first prefixed with
/// [`FIRST_PREFIX`], the rest with [`NEXT_PREFIX`].
pub fn render_prompt(question: &str, instances: &[ConstraintInstance]) -> Result<String, PromptError> {
    if instances.is_empty() {
        return Err(PromptError::NoConstraints);
    }
    if instances.len() > MAX_LEVEL {
        return Err(PromptError::TooManyConstraints(instances.len()));
    }
    let mut prompt = String::from(question);
    for (i, inst) in instances.iter().enumerate() {
        prompt.push('\n');
        prompt.push_str(if i == 0 { FIRST_PREFIX } else { NEXT_PREFIX });
        prompt.push_str(&inst.rendered_text);
    }
    Ok(prompt)
}

/// Parses and validates a constraint library document.
pub fn parse_library(src: &str) -> Result<Vec<MetaConstraint>, LibraryError> {
    let lib: Vec<MetaConstraint> =
        serde_json::from_str(src).map_err(|e| LibraryError::Parse(e.to_string()))?;
    let mut seen = BTreeSet::new();
    for m in &lib {
        let mut violations = validate_meta(m);
        if !seen.insert(m.id.as_str()) {
            violations.push(Violation::DuplicateId);
        }
        for e in &m.incompatible_with {
            if let Some(Exclusion::Id(id)) = parse_exclusion(e) {
                if !lib.iter().any(|o| o.id == id) {
                    violations.push(Violation::UnknownExclusionTarget(e.clone()));
                }
            }
        }
        if !violations.is_empty() {
            return Err(LibraryError::Invalid {
                id: m.id.clone(),
                violations,
            });
        }
    }
    Ok(lib)
}

pub fn serialize_library(lib: &[MetaConstraint]) -> String {
    let mut s = serde_json::to_string_pretty(lib).expect("library serializes");
    s.push('\n');
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn word_limit() -> MetaConstraint {
        MetaConstraint {
            id: "word-limit".into(),
            category: Category::LimitedWordCount,
            level_hint: 1,
            template: "Limit your response to no more than [[VAR1]] words.".into(),
            variables: vec![VariableSpec {
                name: "VAR1".into(),
                kind: VarKind::Integer,
                candidates: vec![Value::Int(30), Value::Int(50), Value::Int(100)],
            }],
            verifier: VerifierBinding {
                id: "word-count-max".into(),
                params: [("limit".to_string(), ParamExpr::Text("[[VAR1]]".into()))].into(),
            },
            explanation: "Use a word count function.".into(),
            incompatible_with: vec!["category:limited-word-count".into()],
        }
    }

    fn language() -> MetaConstraint {
        MetaConstraint {
            id: "language".into(),
            category: Category::LimitedContent,
            level_hint: 1,
            template: "Respond in [[VAR1]] language.".into(),
            variables: vec![VariableSpec {
                name: "VAR1".into(),
                kind: VarKind::TextChoice,
                candidates: ["English", "Spanish", "French", "Chinese", "Japanese"]
                    .into_iter()
                    .map(|s| Value::Text(s.into()))
                    .collect(),
            }],
            verifier: VerifierBinding {
                id: "language-is".into(),
                params: [("lang".to_string(), ParamExpr::Text("[[VAR1]]".into()))].into(),
            },
            explanation: String::new(),
            incompatible_with: vec![],
        }
    }

    fn json() -> MetaConstraint {
        MetaConstraint {
            id: "json".into(),
            category: Category::LimitedStructure,
            level_hint: 1,
            template: "Entire output should be wrapped in JSON format.".into(),
            variables: vec![],
            verifier: VerifierBinding {
                id: "json-wellformed".into(),
                params: BTreeMap::new(),
            },
            explanation: String::new(),
            incompatible_with: vec![],
        }
    }

    #[test]
    fn word_limit_is_valid() {
        assert_eq!(validate_meta(&word_limit()), vec![]);
    }

    #[test]
    fn unknown_verifier() {
        let mut m = word_limit();
        m.verifier.id = "no-such-checker".into();
        let v = validate_meta(&m);
        assert!(v.iter().any(|x| x.to_string().contains("unknown verifier")), "{v:?}");
    }

    #[test]
    fn unbound_placeholder() {
        let mut m = word_limit();
        m.template = "Use [[VAR1]] to [[VAR2]] words.".into();
        let v = validate_meta(&m);
        assert!(v.iter().any(|x| x.to_string().contains("unbound placeholder")), "{v:?}");
    }

    #[test]
    fn unused_variable_and_missing_param() {
        let mut m = word_limit();
        m.template = "No variables here.".into();
        m.verifier.params.clear();
        let v = validate_meta(&m);
        assert!(v.contains(&Violation::UnusedVariable("VAR1".into())));
        assert!(v.contains(&Violation::MissingParam("limit".into())));
    }

    #[test]
    fn candidate_domain_checked() {
        let mut m = word_limit();
        m.variables[0].candidates.push(Value::Int(0));
        assert!(validate_meta(&m).iter().any(|v| matches!(v, Violation::ParamDomain(_))));
        let mut m = language();
        m.variables[0].candidates.push(Value::Text("Klingon".into()));
        assert!(validate_meta(&m).iter().any(|v| matches!(v, Violation::ParamDomain(_))));
    }

    #[test]
    fn wrong_kinds() {
        let mut m = word_limit();
        m.variables[0].candidates = vec![Value::Text("thirty".into())];
        let v = validate_meta(&m);
        assert!(v.contains(&Violation::CandidateKind("VAR1".into())));
        m.variables[0].kind = VarKind::Text;
        let v = validate_meta(&m);
        assert!(v.contains(&Violation::ParamKind("limit".into())));
    }

    #[test]
    fn instantiate_language() {
        let m = language();
        let choice = [("VAR1".to_string(), Value::Text("French".into()))].into();
        let inst = instantiate(&m, &choice).unwrap();
        assert_eq!(inst.rendered_text, "Respond in French language.");
        assert_eq!(inst.bound_params["lang"], ParamValue::Text("French".into()));
    }

    #[test]
    fn instantiate_variable_free() {
        let m = json();
        let inst = instantiate(&m, &BTreeMap::new()).unwrap();
        assert_eq!(inst.rendered_text, m.template);
        assert!(inst.bound_params.is_empty());
    }

    #[test]
    fn instantiate_rejects_non_candidate() {
        let m = word_limit();
        let choice = [("VAR1".to_string(), Value::Int(25))].into();
        assert!(matches!(
            instantiate(&m, &choice),
            Err(InstantiateError::NotACandidate { .. })
        ));
        assert!(matches!(
            instantiate(&m, &BTreeMap::new()),
            Err(InstantiateError::MissingChoice(_))
        ));
    }

    #[test]
    fn int_binding_stays_int() {
        let inst = word_limit().instantiate_indices(&[1]).unwrap();
        assert_eq!(inst.bound_params["limit"], ParamValue::Int(50));
        assert_eq!(inst.rendered_text, "Limit your response to no more than 50 words.");
    }

    #[test]
    fn prompt_rendering() {
        let a = word_limit().instantiate_indices(&[0]).unwrap();
        let b = language().instantiate_indices(&[2]).unwrap();
        let c = json().instantiate_indices(&[]).unwrap();
        let q = "List 5 questions for a job interview.";
        let p = render_prompt(q, &[a.clone(), b.clone(), c.clone()]).unwrap();
        assert_eq!(p.matches("CONSTRAINT:").count(), 1);
        assert_eq!(p.matches("This is a new CONSTRAINT also needs to obey:").count(), 2);
        assert!(p.starts_with(q));
        assert_eq!(p, render_prompt(q, &[a.clone(), b, c]).unwrap());

        let single = render_prompt(q, &[a]).unwrap();
        assert_eq!(
            single,
            "List 5 questions for a job interview.\nCONSTRAINT: Limit your response to no more than 30 words."
        );
        assert_eq!(render_prompt(q, &[]), Err(PromptError::NoConstraints));
    }

    #[test]
    fn compatibility_is_symmetric() {
        let a = word_limit();
        let mut b = word_limit();
        b.id = "other".into();
        b.incompatible_with.clear();
        assert!(!a.compatible_with(&b));
        assert!(!b.compatible_with(&a));
        assert!(a.compatible_with(&language()));
        assert!(!a.compatible_with(&a));
    }

    #[test]
    fn library_errors() {
        assert!(matches!(parse_library(""), Err(LibraryError::Parse(_))));
        let bad = r#"[{"id":"x","category":"limited-content","template":"[[VAR1]]",
            "vars":[],"verifier":{"id":"json-wellformed","params":{}}}]"#;
        match parse_library(bad) {
            Err(LibraryError::Invalid { id, violations }) => {
                assert_eq!(id, "x");
                assert!(violations.contains(&Violation::UnboundPlaceholder("VAR1".into())));
            }
            other => panic!("{other:?}"),
        }
        let lib = serialize_library(&[word_limit(), word_limit()]);
        assert!(matches!(parse_library(&lib), Err(LibraryError::Invalid { .. })));
    }

    #[test]
    fn library_round_trip() {
        let lib = vec![word_limit(), language(), json()];
        let text = serialize_library(&lib);
        let back = parse_library(&text).unwrap();
        assert_eq!(back, lib);
        assert_eq!(serialize_library(&back), text);
    }
}
