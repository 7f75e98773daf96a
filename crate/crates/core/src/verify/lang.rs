//! Language identification for the five supported response languages.
//!
//! Chinese and Japanese are separated from Latin-script text by Unicode
//! script; kana marks Japanese. English, Spanish and French are told apart by
//! counting stopword hits, and the unique plurality winner is the answer.

use alloc::string::String;
use core::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Language {
    English,
    Spanish,
    French,
    Chinese,
    Japanese,
}

impl Language {
    pub const ALL: [Language; 5] = [
        Language::English,
        Language::Spanish,
        Language::French,
        Language::Chinese,
        Language::Japanese,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Language::English => "English",
            Language::Spanish => "Spanish",
            Language::French => "French",
            Language::Chinese => "Chinese",
            Language::Japanese => "Japanese",
        }
    }

    pub fn parse(s: &str) -> Option<Language> {
        Language::ALL.into_iter().find(|l| l.name().eq_ignore_ascii_case(s.trim()))
    }
}

impl fmt::Display for Language {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

const ENGLISH: &[&str] = &[
    "the", "and", "of", "to", "is", "in", "that", "it", "for", "with", "as", "was", "on", "are", "be", "this",
    "by", "have", "from", "or", "an", "they", "which", "you", "we", "not", "but", "can", "will", "their",
    "has", "were", "been", "would", "there", "what", "about", "your", "our", "its", "also", "these", "all",
    "more", "when", "into", "if", "than", "then", "them", "who",
];

const SPANISH: &[&str] = &[
    "el", "los", "las", "del", "y", "que", "es", "por", "con", "para", "una", "un", "su", "al", "lo", "como",
    "más", "pero", "sus", "le", "ya", "o", "este", "sí", "porque", "esta", "entre", "cuando", "muy", "sin",
    "sobre", "también", "me", "hasta", "hay", "donde", "quien", "desde", "todo", "nos", "durante", "todos",
    "uno", "les", "ni", "otros", "ese", "eso", "ante", "ellos", "está", "son", "tiene", "puede", "la", "de",
    "en", "se",
];

const FRENCH: &[&str] = &[
    "le", "les", "des", "et", "est", "une", "du", "dans", "qui", "pour", "pas", "au", "sur", "ne", "avec",
    "il", "ce", "sont", "aux", "ou", "par", "mais", "nous", "vous", "ils", "elle", "cette", "leur", "être",
    "été", "fait", "comme", "tout", "aussi", "ces", "sa", "ses", "son", "très", "peut", "était", "où", "donc",
    "même", "bien", "sans", "deux", "entre", "je", "la", "de", "en", "se", "que", "un",
];

fn is_han(c: char) -> bool {
    matches!(c as u32,
        0x4E00..=0x9FFF | 0x3400..=0x4DBF | 0x20000..=0x2A6DF | 0x2A700..=0x2EBEF | 0xF900..=0xFAFF)
}

fn is_kana(c: char) -> bool {
    matches!(c as u32, 0x3040..=0x309F | 0x30A0..=0x30FF | 0x31F0..=0x31FF | 0xFF66..=0xFF9F)
}

fn is_latin(c: char) -> bool {
    c.is_ascii_alphabetic() || matches!(c as u32, 0x00C0..=0x024F if c.is_alphabetic())
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ScriptCounts {
    pub han: usize,
    pub kana: usize,
    pub latin: usize,
}

pub fn script_counts(text: &str) -> ScriptCounts {
    let mut counts = ScriptCounts::default();
    for c in text.chars() {
        if is_han(c) {
            counts.han += 1;
        } else if is_kana(c) {
            counts.kana += 1;
        } else if is_latin(c) {
            counts.latin += 1;
        }
    }
    counts
}

/// Stopword hits for English, Spanish and French, in that order.
pub fn stopword_scores(text: &str) -> [usize; 3] {
    let mut scores = [0usize; 3];
    let mut token = String::new();
    let flush = |token: &mut String, scores: &mut [usize; 3]| {
        if !token.is_empty() {
            for (score, table) in scores.iter_mut().zip([ENGLISH, SPANISH, FRENCH]) {
                if table.contains(&token.as_str()) {
                    *score += 1;
                }
            }
            token.clear();
        }
    };
    for c in text.chars() {
        if c.is_alphabetic() {
            token.extend(c.to_lowercase());
        } else {
            flush(&mut token, &mut scores);
        }
    }
    flush(&mut token, &mut scores);
    scores
}

/// Detected language, or `None` when no script or stopword signal decides.
pub fn detect(text: &str) -> Option<Language> {
    let s = script_counts(text);
    if s.kana > 0 && s.kana + s.han >= s.latin {
        return Some(Language::Japanese);
    }
    if s.han > 0 && s.han >= s.latin {
        return Some(Language::Chinese);
    }
    if s.latin == 0 {
        return None;
    }
    let scores = stopword_scores(text);
    let best = *scores.iter().max()?;
    if best == 0 || scores.iter().filter(|&&x| x == best).count() > 1 {
        return None;
    }
    let idx = scores.iter().position(|&x| x == best)?;
    Some([Language::English, Language::Spanish, Language::French][idx])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn detects_each_language() {
        assert_eq!(detect("The cat is on the mat and it is happy."), Some(Language::English));
        assert_eq!(detect("El gato está en la casa y es muy feliz porque tiene comida."), Some(Language::Spanish));
        assert_eq!(detect("Le chat est dans la maison et il est très content avec nous."), Some(Language::French));
        assert_eq!(detect("我们今天去公园散步。"), Some(Language::Chinese));
        assert_eq!(detect("今日は公園に行きました。"), Some(Language::Japanese));
        assert_eq!(detect("12345 !!!"), None);
    }

    #[test]
    fn ties_are_undecided() {
        // "la" and "de" are shared by Spanish and French.
        assert_eq!(detect("la de"), None);
    }

    #[test]
    fn parse_names() {
        assert_eq!(Language::parse("french"), Some(Language::French));
        assert_eq!(Language::parse("Klingon"), None);
    }
}
