//! Synthetic responses for the stub endpoint: texts built to satisfy, or to
//! violate, the constraints of an instruction. Every candidate is checked
//! with the real verifier before it is returned.

use std::collections::BTreeMap;

use fmtcheck_core::verify::{CaseStyle, Check, Language, NumberPattern, Voice};
use fmtcheck_core::{FormatInstruction, MetaConstraint, Verifier};

const EN_FILLER: &[&str] = &[
    "the", "team", "will", "review", "each", "step", "of", "the", "plan", "and", "share", "clear", "notes",
    "with", "everyone", "on", "time", "for", "better", "results",
];
const ES_FILLER: &[&str] = &[
    "el", "equipo", "revisa", "cada", "paso", "del", "plan", "con", "cuidado", "y", "comparte", "notas",
    "claras", "por", "una", "mejor", "tarea", "para", "todos", "los",
];
const FR_FILLER: &[&str] = &[
    "nous", "suivons", "chaque", "étape", "du", "projet", "avec", "soin", "et", "des", "notes", "claires",
    "pour", "une", "meilleure", "journée", "dans", "notre", "équipe", "sur",
];
const ZH_FILLER: &[&str] = &["我们", "认真", "检查", "每个", "步骤", "并且", "分享", "清楚", "的", "笔记", "和", "计划"];
const JA_FILLER: &[&str] = &["私たちは", "毎日", "丁寧に", "計画を", "確認して", "みんなと", "メモを", "共有します"];

const STARTERS: &[&str] = &["We", "Our", "This", "Each", "Then"];

fn letter_word(letter: char) -> String {
    const WORDS: [&str; 26] = [
        "Always", "Before", "Careful", "Daily", "Every", "For", "Great", "Here", "In", "Joint", "Keeping", "Later",
        "Most", "Next", "Over", "Plans", "Quick", "Regular", "Some", "Today", "Usually", "Valuable", "We", "Xenial",
        "Yearly", "Zealous",
    ];
    let lower = letter.to_ascii_lowercase();
    if lower.is_ascii_lowercase() {
        WORDS[(lower as u8 - b'a') as usize].to_string()
    } else {
        let mut w = letter.to_uppercase().collect::<String>();
        w.push_str("ay");
        w
    }
}

fn number_phrase(p: NumberPattern, english: bool) -> &'static str {
    match (p, english) {
        (NumberPattern::Time24h, true) => "at 14:30",
        (NumberPattern::ThousandsSeparator, true) => "with 1,250",
        (NumberPattern::Decimal2, true) => "for 3.75",
        (NumberPattern::Percentage, true) => "by 45%",
        (NumberPattern::IsoDate, true) => "on 2024-05-17",
        (NumberPattern::Time24h, false) => "14:30",
        (NumberPattern::ThousandsSeparator, false) => "1,250",
        (NumberPattern::Decimal2, false) => "3.75",
        (NumberPattern::Percentage, false) => "45%",
        (NumberPattern::IsoDate, false) => "2024-05-17",
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Wrap {
    Json,
    Yaml,
}

#[derive(Debug, Default)]
struct Plan {
    para_exact: Option<usize>,
    para_max: Option<usize>,
    spp_max: Option<usize>,
    total_sentences: Option<usize>,
    letter: Option<char>,
    mark: Option<String>,
    lang: Option<Language>,
    include: Vec<String>,
    exclude: Vec<String>,
    numbers: Vec<NumberPattern>,
    voice: Option<Voice>,
    case: Option<CaseStyle>,
    wrap: Option<Wrap>,
}

fn min_opt(a: Option<usize>, b: usize) -> Option<usize> {
    Some(a.map_or(b, |a| a.min(b)))
}

impl Plan {
    fn from_checks(checks: &[Check]) -> Plan {
        let mut p = Plan::default();
        for c in checks {
            match c {
                Check::ParagraphCountExact(n) => p.para_exact = Some(*n),
                Check::ParagraphCountMax(n) => p.para_max = min_opt(p.para_max, *n),
                Check::ParagraphStructure {
                    paragraphs,
                    max_sentences,
                } => {
                    p.para_exact = Some(*paragraphs);
                    p.spp_max = min_opt(p.spp_max, *max_sentences);
                }
                Check::SentencesPerParagraphMax(n) => p.spp_max = min_opt(p.spp_max, *n),
                Check::SentenceCountExact(n) => p.total_sentences = Some(*n),
                Check::SentenceStartsWith(l) => p.letter = Some(*l),
                Check::ParagraphEndsWith(m) => p.mark = Some(m.clone()),
                Check::LanguageIs(l) => p.lang = Some(*l),
                Check::KeywordInclude(ks) => p.include.extend(ks.iter().cloned()),
                Check::KeywordExclude(ks) => p.exclude.extend(ks.iter().map(|k| k.to_lowercase())),
                Check::NumberFormat(n) => p.numbers.push(*n),
                Check::Voice(v) => p.voice = Some(*v),
                Check::CaseStyle(s) => p.case = Some(*s),
                Check::Json => p.wrap = Some(Wrap::Json),
                Check::Yaml => p.wrap = Some(Wrap::Yaml),
                Check::WordCountMax { .. }
                | Check::WordCountRange { .. }
                | Check::PunctuationAbsent(_)
                | Check::External { .. } => {}
            }
        }
        p
    }

    fn layouts(&self) -> Vec<Vec<usize>> {
        let paragraphs: Vec<usize> = match (self.para_exact, self.para_max) {
            (Some(n), _) => vec![n],
            (None, Some(m)) => (1..=m.min(4)).collect(),
            (None, None) => vec![1, 2, 3],
        };
        let spp_cap = self.spp_max.unwrap_or(5).min(6);
        let mut out: Vec<Vec<usize>> = Vec::new();
        for &p in &paragraphs {
            if let Some(n) = self.total_sentences {
                if n < p {
                    continue;
                }
                let layout: Vec<usize> = (0..p).map(|i| n / p + usize::from(i < n % p)).collect();
                if layout.iter().all(|&s| s <= spp_cap) && !out.contains(&layout) {
                    out.push(layout);
                }
            } else {
                for s in 1..=spp_cap {
                    out.push(vec![s; p]);
                }
            }
        }
        out
    }

    fn filler(&self) -> Vec<&'static str> {
        let bank = match self.lang {
            Some(Language::Spanish) => ES_FILLER,
            Some(Language::French) => FR_FILLER,
            Some(Language::Chinese) => ZH_FILLER,
            Some(Language::Japanese) => JA_FILLER,
            Some(Language::English) | None => EN_FILLER,
        };
        bank.iter()
            .copied()
            .filter(|w| !self.exclude.iter().any(|x| x == w))
            .collect()
    }

    fn sentence(&self, index: usize, words: usize, variant: usize) -> String {
        let filler = self.filler();
        let english = matches!(self.lang, None | Some(Language::English));
        let cjk = matches!(self.lang, Some(Language::Chinese | Language::Japanese));
        let mut out: Vec<String> = Vec::new();
        if english {
            out.push(match self.letter {
                Some(l) => letter_word(l),
                None => STARTERS[(index + variant) % STARTERS.len()].to_string(),
            });
            if self.voice == Some(Voice::Passive) {
                out.extend(["work", "is", "carefully", "made"].map(String::from));
            }
        }
        if index == 0 {
            out.extend(self.include.iter().cloned());
            for n in &self.numbers {
                out.extend(number_phrase(*n, english).split(' ').map(String::from));
            }
        }
        let mut k = index * 3 + variant;
        while out.len() < words && !filler.is_empty() {
            out.push(filler[k % filler.len()].to_string());
            k += 1;
        }
        if !english && !cjk {
            if let Some(first) = out.first_mut() {
                let mut cs = first.chars();
                if let Some(c) = cs.next() {
                    *first = c.to_uppercase().chain(cs).collect();
                }
            }
        }
        let end = match (&self.mark, cjk) {
            (Some(m), _) => m.as_str(),
            (None, true) => "。",
            (None, false) => ".",
        };
        let mut s = out.join(" ");
        s.push_str(end);
        s
    }

    fn render(&self, layout: &[usize], words: usize, variant: usize) -> String {
        let mut index = 0;
        let paras: Vec<String> = layout
            .iter()
            .map(|&n| {
                let sentences: Vec<String> = (0..n)
                    .map(|_| {
                        index += 1;
                        self.sentence(index - 1, words, variant)
                    })
                    .collect();
                sentences.join(" ")
            })
            .collect();
        let text = apply_case(&paras.join("\n\n"), self.case);
        match self.wrap {
            Some(Wrap::Json) => serde_json::json!({ "response": text }).to_string(),
            Some(Wrap::Yaml) => format!("response: {}\n", serde_json::Value::String(text)),
            None => text,
        }
    }
}

fn apply_case(text: &str, case: Option<CaseStyle>) -> String {
    match case {
        None => text.to_string(),
        Some(CaseStyle::AllCaps) => text.to_uppercase(),
        Some(CaseStyle::AllLowercase) => text.to_lowercase(),
        Some(CaseStyle::TitleCase) => {
            let mut out = String::with_capacity(text.len());
            let mut at_word_start = true;
            let mut capitalized = false;
            for c in text.chars() {
                if c.is_whitespace() {
                    at_word_start = true;
                    capitalized = false;
                    out.push(c);
                } else if at_word_start && !capitalized && c.is_alphabetic() {
                    out.extend(c.to_uppercase());
                    capitalized = true;
                } else {
                    out.push(c);
                }
            }
            out
        }
    }
}

const WORD_GRID: [usize; 14] = [3, 4, 5, 6, 8, 10, 12, 15, 18, 22, 26, 30, 36, 44];

/// Builds compliant and violating responses for instructions over one library.
#[derive(Debug, Clone)]
pub struct ResponseWriter {
    verifier: Verifier,
    bindings: BTreeMap<String, String>,
}

impl ResponseWriter {
    pub fn new(library: &[MetaConstraint], verifier: Verifier) -> Self {
        ResponseWriter {
            verifier,
            bindings: library
                .iter()
                .map(|m| (m.id.clone(), m.verifier.id.clone()))
                .collect(),
        }
    }

    fn checks(&self, instruction: &FormatInstruction) -> Vec<Check> {
        instruction
            .instances
            .iter()
            .filter_map(|inst| {
                let id = self.bindings.get(&inst.meta_id)?;
                Check::from_params(id, &inst.bound_params).ok()
            })
            .collect()
    }

    fn passes(&self, instruction: &FormatInstruction, text: &str) -> bool {
        self.verifier.verify_all(instruction, text).is_ok_and(|r| r.aggregate)
    }

    /// A response that verifies with I=1, if the search finds one. Different
    /// `variant`s give different texts where the constraints allow it.
    pub fn compliant(&self, instruction: &FormatInstruction, variant: usize) -> Option<String> {
        let plan = Plan::from_checks(&self.checks(instruction));
        for layout in plan.layouts() {
            for &words in &WORD_GRID {
                let text = plan.render(&layout, words, variant);
                if self.passes(instruction, &text) {
                    return Some(text);
                }
            }
        }
        None
    }

    /// A response that verifies with I=0: a text breaking one constraint,
    /// chosen by `variant`.
    pub fn violating(&self, instruction: &FormatInstruction, variant: usize) -> String {
        let checks = self.checks(instruction);
        let n = checks.len().max(1);
        for i in 0..checks.len() {
            if let Some(text) = breaker(&checks[(variant + i) % n]) {
                if !self.passes(instruction, &text) {
                    return text;
                }
            }
        }
        String::new()
    }
}

fn repeat_words(n: usize) -> String {
    let mut s = (0..n).map(|i| EN_FILLER[i % EN_FILLER.len()]).collect::<Vec<_>>().join(" ");
    s.push('.');
    s
}

fn sentences(n: usize) -> String {
    vec!["Here is one plain sentence."; n].join(" ")
}

fn paragraphs(n: usize) -> String {
    vec!["Here is a short paragraph."; n].join("\n\n")
}

/// A text that fails `check` on its own.
fn breaker(check: &Check) -> Option<String> {
    Some(match check {
        Check::WordCountMax { limit } => repeat_words(limit + 5),
        Check::WordCountRange { lo, hi } => {
            if *lo > 2 {
                "Too short.".to_string()
            } else {
                repeat_words(hi + 5)
            }
        }
        Check::Json => "This is plain text and not a JSON document.".to_string(),
        Check::Yaml => "This is plain text.".to_string(),
        Check::ParagraphCountExact(n) | Check::ParagraphCountMax(n) => paragraphs(n + 1),
        Check::ParagraphStructure { paragraphs: p, .. } => paragraphs(p + 1),
        Check::SentencesPerParagraphMax(n) | Check::SentenceCountExact(n) => sentences(n + 1),
        Check::SentenceStartsWith(l) => {
            if l.eq_ignore_ascii_case(&'z') {
                "Many plain words appear here.".to_string()
            } else {
                "Zero plain words appear here.".to_string()
            }
        }
        Check::ParagraphEndsWith(_) => "This paragraph has no final mark".to_string(),
        Check::LanguageIs(Language::English) => "El equipo revisa cada paso del plan con cuidado.".to_string(),
        Check::LanguageIs(_) => "The team will review each step of the plan with care.".to_string(),
        Check::KeywordInclude(_) => "Nothing relevant appears in this reply.".to_string(),
        Check::KeywordExclude(ks) => format!("This reply mentions {} on purpose.", ks.first()?),
        Check::NumberFormat(_) => "No figures appear in this reply.".to_string(),
        Check::Voice(Voice::Active) => "The report was written by the team.".to_string(),
        Check::Voice(Voice::Passive) => "The team writes the report.".to_string(),
        Check::CaseStyle(CaseStyle::AllCaps) => "mostly lowercase words here.".to_string(),
        Check::CaseStyle(CaseStyle::AllLowercase) => "Capitalized Words Here.".to_string(),
        Check::CaseStyle(CaseStyle::TitleCase) => "lowercase words here.".to_string(),
        Check::PunctuationAbsent(m) => format!("Here{m} there"),
        Check::External { .. } => return None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::load_library;

    #[test]
    fn title_case_transform() {
        assert_eq!(apply_case("the plan at 14:30.\n\nnext step", Some(CaseStyle::TitleCase)), "The Plan At 14:30.\n\nNext Step");
    }

    #[test]
    fn every_level_one_instance_has_witness_and_breaker() {
        let (lib, _) = load_library(None).unwrap();
        let writer = ResponseWriter::new(&lib, Verifier::new(&lib));
        let verifier = Verifier::new(&lib);
        let mut n = 0;
        for m in &lib {
            for inst in m.instances().unwrap() {
                let ins = FormatInstruction {
                    id: "t".into(),
                    level: 1,
                    question: "Q?".into(),
                    question_source_id: "q:1".into(),
                    prompt: fmtcheck_core::render_prompt("Q?", std::slice::from_ref(&inst)).unwrap(),
                    instances: vec![inst],
                };
                let ok = writer
                    .compliant(&ins, 0)
                    .unwrap_or_else(|| panic!("no witness for {}", ins.instances[0].rendered_text));
                assert!(verifier.verify_all(&ins, &ok).unwrap().aggregate);
                let bad = writer.violating(&ins, 0);
                assert!(!verifier.verify_all(&ins, &bad).unwrap().aggregate, "{}", ins.instances[0].rendered_text);
                n += 1;
            }
        }
        assert!(n > 50);
    }
}
