//! Sentence boundary detection over token sequences.

use super::{SentenceRange, Token};
use std::collections::HashSet;

/// Known abbreviations that do not end a sentence ("Mr.", "U.S.").
///
/// File format: one abbreviation per line, `#` starts a comment.
#[derive(Debug, Clone)]
pub struct AbbreviationList {
    entries: HashSet<String>,
}

impl AbbreviationList {
    pub fn parse(text: &str) -> Self {
        let entries = text
            .lines()
            .map(|l| l.split('#').next().unwrap_or("").trim())
            .filter(|l| !l.is_empty())
            .map(|l| l.to_lowercase())
            .collect();
        AbbreviationList { entries }
    }

    pub fn contains(&self, candidate: &str) -> bool {
        self.entries.contains(&candidate.to_lowercase())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

impl Default for AbbreviationList {
    fn default() -> Self {
        AbbreviationList::parse(include_str!("../../data/abbreviations.txt"))
    }
}

/// Splits context tokens into sentence ranges.
///
/// A boundary is placed after a `.`/`!`/`?` token that is followed in the
/// raw text by whitespace and an uppercase letter, or by end of text. A
/// period closing a known abbreviation never splits. A context without
/// terminators is a single sentence.
pub fn split_sentences(
    tokens: &[Token],
    context: &str,
    abbreviations: &AbbreviationList,
) -> Vec<SentenceRange> {
    if tokens.is_empty() {
        return Vec::new();
    }
    let chars: Vec<char> = context.chars().collect();
    let mut ranges = Vec::new();
    let mut start = 0;
    for (i, tok) in tokens.iter().enumerate() {
        if !tok.is_sentence_terminator() {
            continue;
        }
        if tok.text == "." && is_abbreviation_period(tokens, i, abbreviations) {
            continue;
        }
        if boundary_follows(&chars, tok.char_end) {
            ranges.push((start, i + 1));
            start = i + 1;
        }
    }
    if start < tokens.len() {
        ranges.push((start, tokens.len()));
    }
    ranges
}

/// End of text, or whitespace followed by an uppercase letter.
fn boundary_follows(chars: &[char], mut pos: usize) -> bool {
    if pos >= chars.len() {
        return true;
    }
    if !chars[pos].is_whitespace() {
        return false;
    }
    while pos < chars.len() && chars[pos].is_whitespace() {
        pos += 1;
    }
    pos >= chars.len() || chars[pos].is_uppercase()
}

/// Walks back over adjacent (word, ".") pairs building candidates like
/// "S." and "U.S." and checks each against the abbreviation list.
fn is_abbreviation_period(tokens: &[Token], dot: usize, abbreviations: &AbbreviationList) -> bool {
    let mut end = dot;
    for _ in 0..3 {
        if end == 0 {
            return false;
        }
        let word = &tokens[end - 1];
        if word.is_punctuation() || word.char_end != tokens[end].char_start {
            return false;
        }
        let candidate: String = tokens[end - 1..=dot]
            .iter()
            .map(|t| t.text.as_str())
            .collect();
        if abbreviations.contains(&candidate) {
            return true;
        }
        // Step over a preceding "X." pair if it is flush against this word.
        if end - 1 == 0 {
            return false;
        }
        let prev = &tokens[end - 2];
        if prev.text == "." && prev.char_end == word.char_start {
            end -= 2;
        } else {
            return false;
        }
    }
    false
}
