//! Deterministic word, paragraph and sentence segmentation.

use alloc::vec::Vec;

/// Whitespace as understood by Python's `str.split()`: Unicode `White_Space`
/// plus the ASCII information separators U+001C..U+001F.
pub fn is_split_space(c: char) -> bool {
    c.is_whitespace() || ('\u{1c}'..='\u{1f}').contains(&c)
}

pub fn words(text: &str) -> impl Iterator<Item = &str> {
    text.split(is_split_space).filter(|w| !w.is_empty())
}

pub fn word_count(text: &str) -> usize {
    words(text).count()
}

/// Blocks of text separated by one or more blank (whitespace-only) lines.
/// Returned slices are trimmed and never empty.
pub fn paragraphs(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut start: Option<usize> = None;
    let mut end = 0;
    let mut offset = 0;
    for line in text.split_inclusive('\n') {
        let blank = line.trim().is_empty();
        if blank {
            if let Some(s) = start.take() {
                out.push(text[s..end].trim());
            }
        } else {
            if start.is_none() {
                start = Some(offset);
            }
            end = offset + line.len();
        }
        offset += line.len();
    }
    if let Some(s) = start {
        out.push(text[s..end].trim());
    }
    out
}

/// True when the text contains a blank line between two non-blank lines.
pub fn has_paragraph_break(text: &str) -> bool {
    paragraphs(text).len() > 1
}

const ABBREVIATIONS: [&str; 5] = ["e.g.", "i.e.", "mr.", "dr.", "etc."];

fn is_terminator(c: char) -> bool {
    matches!(c, '.' | '!' | '?')
}

fn is_closer(c: char) -> bool {
    matches!(c, '"' | '\'' | ')' | ']' | '\u{201d}' | '\u{2019}')
}

/// Splits one block of text into sentences. A sentence ends at a run of
/// `.`, `!` or `?` (optionally followed by closing quotes or brackets) that is
/// followed by whitespace or the end of the text, unless the token ending
/// there is one of the fixed abbreviations.
pub fn sentences(text: &str) -> Vec<&str> {
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let mut out = Vec::new();
    let mut start = 0usize;
    let mut i = 0usize;
    while i < chars.len() {
        let (_, c) = chars[i];
        if !is_terminator(c) {
            i += 1;
            continue;
        }
        let mut j = i;
        while j < chars.len() && is_terminator(chars[j].1) {
            j += 1;
        }
        let mut k = j;
        while k < chars.len() && is_closer(chars[k].1) {
            k += 1;
        }
        let boundary = k == chars.len() || is_split_space(chars[k].1);
        if boundary {
            let stop = if k == chars.len() { text.len() } else { chars[k].0 };
            let token_end = if j == chars.len() { text.len() } else { chars[j].0 };
            let token_start = text[..token_end]
                .rfind(is_split_space)
                .map(|p| p + text[p..].chars().next().map_or(1, char::len_utf8))
                .unwrap_or(0);
            let token = &text[token_start.max(start)..token_end];
            let abbreviated = k < chars.len() && ABBREVIATIONS.iter().any(|a| token.eq_ignore_ascii_case(a));
            if !abbreviated {
                let s = text[start..stop].trim();
                if !s.is_empty() {
                    out.push(s);
                }
                start = stop;
            }
        }
        i = k.max(i + 1);
    }
    let tail = text[start..].trim();
    if !tail.is_empty() {
        out.push(tail);
    }
    out
}

/// Sentences of every paragraph; a paragraph break always ends a sentence.
pub fn all_sentences(text: &str) -> Vec<&str> {
    paragraphs(text).into_iter().flat_map(sentences).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn split_matches_python_semantics() {
        assert_eq!(word_count("  a b\tc\nd  "), 4);
        assert_eq!(word_count("a\u{1f}b\u{a0}c\u{3000}d"), 4);
        assert_eq!(word_count("hello, world!"), 2);
        assert_eq!(word_count(""), 0);
        // U+200B is not whitespace for Python either.
        assert_eq!(word_count("a\u{200b}b"), 1);
    }

    #[test]
    fn paragraph_blocks() {
        assert_eq!(paragraphs("one\ntwo\n\n  \nthree\n"), vec!["one\ntwo", "three"]);
        assert_eq!(paragraphs("\n\nsolo\n\n"), vec!["solo"]);
        assert!(paragraphs(" \n\t\n").is_empty());
        assert_eq!(paragraphs("a\r\n\r\nb"), vec!["a", "b"]);
    }

    #[test]
    fn sentence_rule() {
        assert_eq!(sentences("One. Two! Three?"), vec!["One.", "Two!", "Three?"]);
        assert_eq!(sentences("Pi is 3.14 today. Yes"), vec!["Pi is 3.14 today.", "Yes"]);
        assert_eq!(sentences("Use tools, e.g. hammers. Done."), vec!["Use tools, e.g. hammers.", "Done."]);
        assert_eq!(sentences("Ask Dr. Smith. Then go."), vec!["Ask Dr. Smith.", "Then go."]);
        assert_eq!(sentences("Wait... what?! Ok."), vec!["Wait...", "what?!", "Ok."]);
        assert_eq!(sentences("He said \"hi.\" Then left."), vec!["He said \"hi.\"", "Then left."]);
        assert_eq!(sentences("apples, pears, etc."), vec!["apples, pears, etc."]);
        assert!(sentences("   ").is_empty());
    }

    #[test]
    fn paragraphs_end_sentences() {
        assert_eq!(all_sentences("Heading\n\nBody one. Body two."), vec!["Heading", "Body one.", "Body two."]);
    }
}
