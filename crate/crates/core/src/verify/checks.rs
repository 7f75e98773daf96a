use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use regex::Regex;

use super::lang::{self, Language};
use super::text;
use super::{get, param_error, ConstraintVerdict, ExternalVerifier, VerifyError, VerifyOptions};
use crate::constraint::Params;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NumberPattern {
    Time24h,
    ThousandsSeparator,
    Decimal2,
    Percentage,
    IsoDate,
}

impl NumberPattern {
    pub const ALL: [NumberPattern; 5] = [
        NumberPattern::Time24h,
        NumberPattern::ThousandsSeparator,
        NumberPattern::Decimal2,
        NumberPattern::Percentage,
        NumberPattern::IsoDate,
    ];

    pub fn id(self) -> &'static str {
        match self {
            NumberPattern::Time24h => "time-24h",
            NumberPattern::ThousandsSeparator => "thousands-separator",
            NumberPattern::Decimal2 => "decimal-2",
            NumberPattern::Percentage => "percentage",
            NumberPattern::IsoDate => "iso-date",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|p| p.id() == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Voice {
    Active,
    Passive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CaseStyle {
    AllCaps,
    AllLowercase,
    TitleCase,
}

/// A checker with validated parameters.
#[derive(Debug, Clone, PartialEq)]
pub enum Check {
    WordCountMax { limit: usize },
    WordCountRange { lo: usize, hi: usize },
    Json,
    Yaml,
    ParagraphCountExact(usize),
    ParagraphCountMax(usize),
    ParagraphStructure { paragraphs: usize, max_sentences: usize },
    SentencesPerParagraphMax(usize),
    SentenceCountExact(usize),
    SentenceStartsWith(char),
    ParagraphEndsWith(String),
    LanguageIs(Language),
    KeywordInclude(Vec<String>),
    KeywordExclude(Vec<String>),
    NumberFormat(NumberPattern),
    Voice(Voice),
    CaseStyle(CaseStyle),
    PunctuationAbsent(String),
    External { command: String, args: Vec<String> },
}

/// Compiled regular expressions for the number-format checker.
#[derive(Debug, Clone)]
pub(crate) struct Patterns {
    time_ok: Regex,
    time_bad: Regex,
    thousands_ok: Regex,
    thousands_bad: Regex,
    decimal_ok: Regex,
    decimal_bad: Regex,
    percent_ok: Regex,
    percent_bad: Regex,
    date_ok: Regex,
    date_bad: Regex,
}

const MONTHS: &str = "january|february|march|april|may|june|july|august|september|october|november|december|jan|feb|mar|apr|jun|jul|aug|sep|sept|oct|nov|dec";

impl Patterns {
    pub(crate) fn new() -> Self {
        let re = |p: &str| Regex::new(p).expect("static pattern compiles");
        Patterns {
            time_ok: re(r"(?:^|[^0-9:])(?:[01][0-9]|2[0-3]):[0-5][0-9](?:$|[^0-9:])"),
            time_bad: re(concat!(
                r"(?i)(?:^|[^0-9:])[0-9]{1,2}(?::[0-5][0-9])?\s*(?:a\.?m\.?|p\.?m\.?)(?:$|[^a-z])",
                r"|(?:^|[^0-9:])[0-9]:[0-5][0-9](?:$|[^0-9])",
                r"|(?:^|[^0-9:])(?:2[4-9]|[3-9][0-9]):[0-9]{2}(?:$|[^0-9])"
            )),
            thousands_ok: re(r"(?:^|[^0-9,.])[0-9]{1,3}(?:,[0-9]{3})+(?:$|[^0-9,])"),
            thousands_bad: re(r"[0-9]{4,}"),
            decimal_ok: re(r"(?:^|[^0-9.])[0-9]+\.[0-9]{2}(?:$|[^0-9])"),
            decimal_bad: re(r"(?:^|[^0-9.])[0-9]+\.(?:[0-9]|[0-9]{3,})(?:$|[^0-9])"),
            percent_ok: re(r"[0-9](?:\.[0-9]+)?\s?%"),
            percent_bad: re(r"(?i)\bper\s?cent\b"),
            date_ok: re(r"(?:^|[^0-9-])[0-9]{4}-(?:0[1-9]|1[0-2])-(?:0[1-9]|[12][0-9]|3[01])(?:$|[^0-9])"),
            date_bad: re(&format!(
                r"(?i)\b[0-9]{{1,2}}/[0-9]{{1,2}}/[0-9]{{2,4}}\b|\b[0-9]{{1,2}}-[0-9]{{1,2}}-[0-9]{{4}}\b|\b(?:{MONTHS})\.?\s+[0-9]{{1,2}}(?:st|nd|rd|th)?,?\s+[0-9]{{4}}\b|\b[0-9]{{1,2}}(?:st|nd|rd|th)?\s+(?:{MONTHS})\.?,?\s+[0-9]{{4}}\b"
            )),
        }
    }

    fn pair(&self, p: NumberPattern) -> (&Regex, &Regex) {
        match p {
            NumberPattern::Time24h => (&self.time_ok, &self.time_bad),
            NumberPattern::ThousandsSeparator => (&self.thousands_ok, &self.thousands_bad),
            NumberPattern::Decimal2 => (&self.decimal_ok, &self.decimal_bad),
            NumberPattern::Percentage => (&self.percent_ok, &self.percent_bad),
            NumberPattern::IsoDate => (&self.date_ok, &self.date_bad),
        }
    }
}

pub(crate) struct Context<'a> {
    pub options: VerifyOptions,
    pub patterns: &'a Patterns,
    pub external: Option<&'a dyn ExternalVerifier>,
}

fn positive(verifier: &str, params: &Params, name: &str) -> Result<usize, VerifyError> {
    let v = get(verifier, params, name)?
        .as_int()
        .ok_or_else(|| param_error(verifier, name, "expected an integer"))?;
    if v < 1 {
        return Err(param_error(verifier, name, "must be at least 1"));
    }
    usize::try_from(v).map_err(|_| param_error(verifier, name, "out of range"))
}

fn text_param<'p>(verifier: &str, params: &'p Params, name: &str) -> Result<&'p str, VerifyError> {
    get(verifier, params, name)?
        .as_text()
        .ok_or_else(|| param_error(verifier, name, "expected text"))
}

fn list_param(verifier: &str, params: &Params, name: &str) -> Result<Vec<String>, VerifyError> {
    let items = get(verifier, params, name)?
        .as_list()
        .ok_or_else(|| param_error(verifier, name, "expected a list of text"))?;
    if items.is_empty() || items.iter().any(|k| k.trim().is_empty()) {
        return Err(param_error(verifier, name, "keywords must be non-empty"));
    }
    Ok(items)
}

impl Check {
    /// Validates `params` against the verifier's schema and domain.
    pub fn from_params(verifier: &str, params: &Params) -> Result<Check, VerifyError> {
        let Some(schema) = super::param_schema(verifier) else {
            return Err(VerifyError::UnknownVerifier(verifier.to_string()));
        };
        if let Some(extra) = params.keys().find(|k| !schema.iter().any(|s| s.name == k.as_str())) {
            return Err(param_error(verifier, extra, "not a parameter of this verifier"));
        }
        let check = match verifier {
            "word-count-max" => Check::WordCountMax {
                limit: positive(verifier, params, "limit")?,
            },
            "word-count-range" => {
                let lo = get(verifier, params, "lo")?
                    .as_int()
                    .filter(|&n| n >= 0)
                    .ok_or_else(|| param_error(verifier, "lo", "expected a non-negative integer"))?;
                let hi = positive(verifier, params, "hi")?;
                let lo = lo as usize;
                if lo > hi {
                    return Err(param_error(verifier, "lo", "exceeds hi"));
                }
                Check::WordCountRange { lo, hi }
            }
            "json-wellformed" => Check::Json,
            "yaml-wellformed" => Check::Yaml,
            "paragraph-count-exact" => Check::ParagraphCountExact(positive(verifier, params, "n")?),
            "paragraph-count-max" => Check::ParagraphCountMax(positive(verifier, params, "n")?),
            "paragraph-structure" => Check::ParagraphStructure {
                paragraphs: positive(verifier, params, "paragraphs")?,
                max_sentences: positive(verifier, params, "max_sentences")?,
            },
            "sentences-per-paragraph-max" => Check::SentencesPerParagraphMax(positive(verifier, params, "n")?),
            "sentence-count-exact" => Check::SentenceCountExact(positive(verifier, params, "n")?),
            "sentence-starts-with-letter" => {
                let s = text_param(verifier, params, "letter")?;
                let mut chars = s.chars();
                match (chars.next(), chars.next()) {
                    (Some(c), None) if c.is_alphabetic() => Check::SentenceStartsWith(c),
                    _ => return Err(param_error(verifier, "letter", "expected a single letter")),
                }
            }
            "paragraph-ends-with-punct" | "punctuation-absent" => {
                let mark = text_param(verifier, params, "mark")?;
                if mark.is_empty() || mark.chars().any(|c| c.is_alphanumeric() || c.is_whitespace()) {
                    return Err(param_error(verifier, "mark", "expected punctuation"));
                }
                if verifier == "punctuation-absent" {
                    Check::PunctuationAbsent(mark.to_string())
                } else {
                    Check::ParagraphEndsWith(mark.to_string())
                }
            }
            "language-is" => {
                let name = text_param(verifier, params, "lang")?;
                Check::LanguageIs(
                    Language::parse(name).ok_or_else(|| param_error(verifier, "lang", "unsupported language"))?,
                )
            }
            "keyword-include" => Check::KeywordInclude(list_param(verifier, params, "keywords")?),
            "keyword-exclude" => Check::KeywordExclude(list_param(verifier, params, "keywords")?),
            "number-format" => {
                let id = text_param(verifier, params, "pattern")?;
                Check::NumberFormat(
                    NumberPattern::parse(id).ok_or_else(|| param_error(verifier, "pattern", "unknown pattern"))?,
                )
            }
            "voice-heuristic" => match text_param(verifier, params, "voice")? {
                "active" => Check::Voice(Voice::Active),
                "passive" => Check::Voice(Voice::Passive),
                _ => return Err(param_error(verifier, "voice", "expected active or passive")),
            },
            "case-style" => match text_param(verifier, params, "style")? {
                "all-caps" => Check::CaseStyle(CaseStyle::AllCaps),
                "all-lowercase" => Check::CaseStyle(CaseStyle::AllLowercase),
                "title-case" => Check::CaseStyle(CaseStyle::TitleCase),
                _ => return Err(param_error(verifier, "style", "expected all-caps, all-lowercase or title-case")),
            },
            "external" => {
                let command = text_param(verifier, params, "command")?.to_string();
                let args = match params.get("args") {
                    Some(v) => v
                        .as_list()
                        .ok_or_else(|| param_error(verifier, "args", "expected a list of text"))?,
                    None => Vec::new(),
                };
                Check::External { command, args }
            }
            other => return Err(VerifyError::UnknownVerifier(other.to_string())),
        };
        Ok(check)
    }

    pub(crate) fn run(&self, response: &str, ctx: &Context<'_>) -> Result<ConstraintVerdict, VerifyError> {
        Ok(match self {
            Check::WordCountMax { limit } => word_count_max(response, *limit),
            Check::WordCountRange { lo, hi } => word_count_range(response, *lo, *hi),
            Check::Json => json_wellformed(response, ctx.options.lenient_fences),
            Check::Yaml => yaml_wellformed(response, ctx.options.lenient_fences)?,
            Check::ParagraphCountExact(n) => {
                let count = text::paragraphs(response).len();
                ConstraintVerdict::binary(count == *n, format!("{count} paragraphs"))
            }
            Check::ParagraphCountMax(n) => {
                let count = text::paragraphs(response).len();
                ConstraintVerdict::binary(count <= *n, format!("{count} paragraphs"))
            }
            Check::ParagraphStructure {
                paragraphs,
                max_sentences,
            } => {
                let paras = text::paragraphs(response);
                let most = paras.iter().map(|p| text::sentences(p).len()).max().unwrap_or(0);
                ConstraintVerdict::binary(
                    paras.len() == *paragraphs && most <= *max_sentences,
                    format!("{} paragraphs, at most {most} sentences each", paras.len()),
                )
            }
            Check::SentencesPerParagraphMax(n) => {
                let paras = text::paragraphs(response);
                let most = paras.iter().map(|p| text::sentences(p).len()).max().unwrap_or(0);
                ConstraintVerdict::binary(!paras.is_empty() && most <= *n, format!("at most {most} sentences per paragraph"))
            }
            Check::SentenceCountExact(n) => {
                let count = text::all_sentences(response).len();
                ConstraintVerdict::binary(count == *n, format!("{count} sentences"))
            }
            Check::SentenceStartsWith(letter) => sentence_starts_with(response, *letter),
            Check::ParagraphEndsWith(mark) => {
                let paras = text::paragraphs(response);
                let bad = paras.iter().filter(|p| !p.trim_end().ends_with(mark.as_str())).count();
                ConstraintVerdict::binary(
                    !paras.is_empty() && bad == 0,
                    format!("{bad} of {} paragraphs do not end with {mark}", paras.len()),
                )
            }
            Check::LanguageIs(expected) => {
                let found = lang::detect(response);
                let detail = match found {
                    Some(l) => format!("detected {l}"),
                    None => "language undetermined".to_string(),
                };
                ConstraintVerdict::binary(found == Some(*expected), detail)
            }
            Check::KeywordInclude(keywords) => {
                let tokens = content_tokens(response);
                let missing: Vec<&str> = keywords
                    .iter()
                    .filter(|k| !contains_phrase(&tokens, k))
                    .map(String::as_str)
                    .collect();
                ConstraintVerdict::binary(missing.is_empty(), format!("missing: {}", missing.join(", ")))
            }
            Check::KeywordExclude(keywords) => {
                let tokens = content_tokens(response);
                let found: Vec<&str> = keywords
                    .iter()
                    .filter(|k| contains_phrase(&tokens, k))
                    .map(String::as_str)
                    .collect();
                ConstraintVerdict::binary(found.is_empty(), format!("found: {}", found.join(", ")))
            }
            Check::NumberFormat(p) => {
                let (ok, bad) = ctx.patterns.pair(*p);
                let has_ok = ok.is_match(response);
                let violation = bad.find(response).map(|m| m.as_str().trim().to_string());
                let detail = match (&violation, has_ok) {
                    (Some(v), _) => format!("wrong {} format: {v}", p.id()),
                    (None, false) => format!("no {} number found", p.id()),
                    (None, true) => format!("{} format respected", p.id()),
                };
                ConstraintVerdict::binary(has_ok && violation.is_none(), detail)
            }
            Check::Voice(voice) => voice_check(response, *voice),
            Check::CaseStyle(style) => case_check(response, *style),
            Check::PunctuationAbsent(mark) => {
                let n = response.matches(mark.as_str()).count();
                ConstraintVerdict::binary(n == 0, format!("{n} occurrences of {mark}"))
            }
            Check::External { command, args } => match ctx.external {
                Some(runner) => runner.run(command, args, response)?,
                None => return Err(VerifyError::External("no external runner configured".to_string())),
            },
        })
    }
}

/// The word-limit soft score: `1 - (count - limit) / limit` above the limit,
/// clamped at 0.
pub fn word_limit_soft(count: usize, limit: usize) -> f64 {
    if count <= limit {
        1.0
    } else {
        let s = 1.0 - (count - limit) as f64 / limit as f64;
        s.max(0.0)
    }
}

fn word_count_max(response: &str, limit: usize) -> ConstraintVerdict {
    let count = text::word_count(response);
    let detail = format!("{count} words (limit {limit})");
    if count <= limit {
        ConstraintVerdict::passed(detail)
    } else {
        ConstraintVerdict::failed(word_limit_soft(count, limit), detail)
    }
}

fn word_count_range(response: &str, lo: usize, hi: usize) -> ConstraintVerdict {
    let count = text::word_count(response);
    let detail = format!("{count} words (range {lo}..={hi})");
    if (lo..=hi).contains(&count) {
        ConstraintVerdict::passed(detail)
    } else if count > hi {
        ConstraintVerdict::failed(word_limit_soft(count, hi), detail)
    } else {
        ConstraintVerdict::failed(count as f64 / lo as f64, detail)
    }
}

/// Removes one surrounding ``` fence (with an optional info string).
pub fn strip_fence(response: &str) -> &str {
    let t = response.trim();
    let Some(rest) = t.strip_prefix("```") else {
        return t;
    };
    let Some(body) = rest.strip_suffix("```") else {
        return t;
    };
    match body.find('\n') {
        Some(nl) => body[nl + 1..].trim(),
        None => body.trim(),
    }
}

fn json_wellformed(response: &str, lenient: bool) -> ConstraintVerdict {
    let body = if lenient { strip_fence(response) } else { response.trim() };
    match serde_json::from_str::<serde_json::Value>(body) {
        Ok(_) => ConstraintVerdict::passed("valid JSON"),
        Err(e) => ConstraintVerdict::failed(0.0, format!("invalid JSON: {e}")),
    }
}

#[cfg(feature = "std")]
fn yaml_wellformed(response: &str, lenient: bool) -> Result<ConstraintVerdict, VerifyError> {
    let body = if lenient { strip_fence(response) } else { response.trim() };
    Ok(match serde_yaml::from_str::<serde_yaml::Value>(body) {
        Ok(serde_yaml::Value::Mapping(_) | serde_yaml::Value::Sequence(_)) => ConstraintVerdict::passed("valid YAML"),
        Ok(_) => ConstraintVerdict::failed(0.0, "YAML root is a scalar, not a mapping or sequence"),
        Err(e) => ConstraintVerdict::failed(0.0, format!("invalid YAML: {e}")),
    })
}

#[cfg(not(feature = "std"))]
fn yaml_wellformed(_response: &str, _lenient: bool) -> Result<ConstraintVerdict, VerifyError> {
    Err(VerifyError::Unsupported("yaml-wellformed".to_string()))
}

fn sentence_starts_with(response: &str, letter: char) -> ConstraintVerdict {
    let sentences = text::all_sentences(response);
    let bad = sentences
        .iter()
        .filter(|s| {
            let first = text::words(s)
                .next()
                .and_then(|w| w.chars().find(|c| c.is_alphanumeric()));
            !first.is_some_and(|c| c.to_lowercase().eq(letter.to_lowercase()))
        })
        .count();
    ConstraintVerdict::binary(
        !sentences.is_empty() && bad == 0,
        format!("{bad} of {} sentences do not start with {letter}", sentences.len()),
    )
}

/// Lowercased alphanumeric runs; apostrophes stay inside words.
fn content_tokens(s: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    for c in s.chars() {
        if c.is_alphanumeric() || (c == '\'' && !cur.is_empty()) {
            cur.extend(c.to_lowercase());
        } else if !cur.is_empty() {
            out.push(core::mem::take(&mut cur).trim_end_matches('\'').to_string());
        }
    }
    if !cur.is_empty() {
        out.push(cur.trim_end_matches('\'').to_string());
    }
    out
}

fn contains_phrase(tokens: &[String], phrase: &str) -> bool {
    let needle = content_tokens(phrase);
    !needle.is_empty() && tokens.windows(needle.len()).any(|w| w == needle.as_slice())
}

const BE_FORMS: [&str; 8] = ["am", "is", "are", "was", "were", "be", "been", "being"];

const IRREGULAR_PARTICIPLES: &[&str] = &[
    "begun", "bitten", "blown", "born", "borne", "bought", "brought", "built", "caught", "chosen", "done",
    "drawn", "driven", "drunk", "eaten", "fallen", "fed", "felt", "forgiven", "forgotten", "found", "frozen",
    "given", "gone", "grown", "heard", "held", "hidden", "hit", "hung", "kept", "known", "laid", "led", "left",
    "lent", "lost", "made", "meant", "met", "paid", "put", "read", "ridden", "run", "said", "seen", "sent",
    "set", "shaken", "shown", "shut", "sold", "sought", "spent", "spoken", "stolen", "struck", "sung", "sunk",
    "swept", "taken", "taught", "thrown", "told", "thought", "torn", "understood", "won", "worn", "written",
    "wound",
];

fn is_participle(word: &str) -> bool {
    (word.len() > 3 && word.ends_with("ed")) || IRREGULAR_PARTICIPLES.contains(&word)
}

/// Heuristic: a form of "to be", optionally one adverb, then a past participle.
pub fn is_passive_sentence(sentence: &str) -> bool {
    let words: Vec<String> = content_tokens(sentence);
    words.iter().enumerate().any(|(i, w)| {
        if !BE_FORMS.contains(&w.as_str()) {
            return false;
        }
        match words.get(i + 1) {
            Some(next) if is_participle(next) => true,
            Some(next) if next.ends_with("ly") || next == "not" || next == "also" || next == "often" => {
                words.get(i + 2).is_some_and(|w2| is_participle(w2))
            }
            _ => false,
        }
    })
}

fn voice_check(response: &str, voice: Voice) -> ConstraintVerdict {
    let sentences = text::all_sentences(response);
    let passive = sentences.iter().filter(|s| is_passive_sentence(s)).count();
    let detail = format!("{passive} of {} sentences look passive", sentences.len());
    match voice {
        Voice::Active => ConstraintVerdict::binary(!sentences.is_empty() && passive == 0, detail),
        Voice::Passive => ConstraintVerdict::binary(!sentences.is_empty() && passive == sentences.len(), detail),
    }
}

fn case_check(response: &str, style: CaseStyle) -> ConstraintVerdict {
    match style {
        CaseStyle::AllCaps => {
            let lower = response.chars().filter(|c| c.is_lowercase()).count();
            let upper = response.chars().filter(|c| c.is_uppercase()).count();
            ConstraintVerdict::binary(upper > 0 && lower == 0, format!("{lower} lowercase letters"))
        }
        CaseStyle::AllLowercase => {
            let lower = response.chars().filter(|c| c.is_lowercase()).count();
            let upper = response.chars().filter(|c| c.is_uppercase()).count();
            ConstraintVerdict::binary(lower > 0 && upper == 0, format!("{upper} uppercase letters"))
        }
        CaseStyle::TitleCase => {
            let mut cased = 0usize;
            let mut bad = 0usize;
            for w in text::words(response) {
                if let Some(c) = w.chars().find(|c| c.is_alphabetic()) {
                    if c.is_uppercase() || c.is_lowercase() {
                        cased += 1;
                        if c.is_lowercase() {
                            bad += 1;
                        }
                    }
                }
            }
            ConstraintVerdict::binary(cased > 0 && bad == 0, format!("{bad} words not capitalized"))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constraint::ParamValue;
    use alloc::vec;

    fn run(check: Check, response: &str) -> ConstraintVerdict {
        let patterns = Patterns::new();
        check
            .run(response, &Context {
                options: VerifyOptions::default(),
                patterns: &patterns,
                external: None,
            })
            .unwrap()
    }

    fn words(n: usize) -> String {
        vec!["word"; n].join(" ")
    }

    #[test]
    fn word_limit_soft_scores() {
        let v = run(Check::WordCountMax { limit: 30 }, "two words");
        assert!(v.pass);
        assert_eq!(v.soft, 1.0);
        let v = run(Check::WordCountMax { limit: 30 }, &words(35));
        assert!(!v.pass);
        assert!((v.soft - (1.0 - 5.0 / 30.0)).abs() < 1e-12);
        assert_eq!(run(Check::WordCountMax { limit: 30 }, &words(70)).soft, 0.0);
    }

    #[test]
    fn word_range_gradation() {
        let c = Check::WordCountRange { lo: 50, hi: 110 };
        assert!(run(c.clone(), &words(50)).pass);
        assert!(run(c.clone(), &words(110)).pass);
        let under = run(c.clone(), &words(25));
        assert!(!under.pass && (under.soft - 0.5).abs() < 1e-12);
        assert!(!run(c, "").pass);
    }

    #[test]
    fn json_modes() {
        assert!(run(Check::Json, r#"{"a": 1}"#).pass);
        assert!(!run(Check::Json, "{a: 1}").pass);
        let fenced = "```json\n{\"a\": 1}\n```";
        assert!(!run(Check::Json, fenced).pass);
        let patterns = Patterns::new();
        let lenient = Check::Json
            .run(fenced, &Context {
                options: VerifyOptions { lenient_fences: true },
                patterns: &patterns,
                external: None,
            })
            .unwrap();
        assert!(lenient.pass);
    }

    #[test]
    fn yaml_requires_structure() {
        assert!(run(Check::Yaml, "name: test\nitems:\n  - a\n  - b\n").pass);
        assert!(!run(Check::Yaml, "Just a plain sentence.").pass);
        assert!(!run(Check::Yaml, "key: [unclosed").pass);
    }

    #[test]
    fn number_formats() {
        let t = Check::NumberFormat(NumberPattern::Time24h);
        assert!(run(t.clone(), "We meet at 14:30 sharp.").pass);
        assert!(!run(t.clone(), "We meet at 2:30 pm.").pass);
        assert!(!run(t.clone(), "We meet at 14:30 or 3 PM.").pass);
        assert!(!run(t, "No time here.").pass);
        let k = Check::NumberFormat(NumberPattern::ThousandsSeparator);
        assert!(run(k.clone(), "About 12,500 people came.").pass);
        assert!(!run(k, "About 12500 people came.").pass);
        let d = Check::NumberFormat(NumberPattern::Decimal2);
        assert!(run(d.clone(), "It costs 3.50 today.").pass);
        assert!(!run(d, "It costs 3.5 today.").pass);
    }

    #[test]
    fn passive_heuristic() {
        assert!(is_passive_sentence("The cake was baked by my aunt."));
        assert!(is_passive_sentence("The report is being carefully written."));
        assert!(is_passive_sentence("Letters were quickly sent."));
        assert!(!is_passive_sentence("My aunt baked the cake."));
    }

    #[test]
    fn keywords_whole_word() {
        let c = Check::KeywordInclude(vec!["cat".into(), "machine learning".into()]);
        assert!(run(c.clone(), "The Cat studies machine-learning daily.").pass);
        assert!(!run(c, "The category of machine learning.").pass);
    }

    #[test]
    fn param_domains() {
        let p = |k: &str, v: ParamValue| -> Params { [(k.to_string(), v)].into() };
        assert!(Check::from_params("word-count-max", &p("limit", ParamValue::Int(0))).is_err());
        assert!(Check::from_params("word-count-max", &p("limit", ParamValue::Text("x".into()))).is_err());
        assert!(Check::from_params("sentence-starts-with-letter", &p("letter", ParamValue::Text("AB".into()))).is_err());
        assert!(Check::from_params("paragraph-ends-with-punct", &p("mark", ParamValue::Text(".".into()))).is_ok());
        assert!(Check::from_params("word-count-max", &p("cap", ParamValue::Int(3))).is_err());
        assert!(matches!(
            Check::from_params("nope", &Params::new()),
            Err(VerifyError::UnknownVerifier(_))
        ));
    }

    #[test]
    fn fence_stripping() {
        assert_eq!(strip_fence("```yaml\na: 1\n```"), "a: 1");
        assert_eq!(strip_fence("```\n[1]\n```"), "[1]");
        assert_eq!(strip_fence("plain"), "plain");
    }
}
