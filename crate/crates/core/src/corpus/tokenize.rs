//! Word/punctuation tokenizer with codepoint offset tracking.
//!
//! Word tokens are maximal runs of letters and digits; an apostrophe or
//! ASCII hyphen between two alphanumerics stays inside the token ("don't",
//! "co-op"). Every other non-whitespace character becomes its own
//! single-character punctuation token. The en-dash and other dash
//! punctuation are not joiners, so "24–10" tokenizes as ["24", "–", "10"].

use super::Token;

fn is_joiner(c: char) -> bool {
    matches!(c, '-' | '\'' | '\u{2019}')
}

/// Splits `text` into tokens with codepoint offsets. Lossless: the original
/// string is recoverable from the tokens plus inter-token gaps.
pub fn tokenize(text: &str) -> Vec<Token> {
    let chars: Vec<char> = text.chars().collect();
    let n = chars.len();
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < n {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
        } else if c.is_alphanumeric() {
            let start = i;
            i += 1;
            while i < n {
                if chars[i].is_alphanumeric() {
                    i += 1;
                } else if is_joiner(chars[i]) && i + 1 < n && chars[i + 1].is_alphanumeric() {
                    i += 2;
                } else {
                    break;
                }
            }
            tokens.push(Token {
                text: chars[start..i].iter().collect(),
                char_start: start,
                char_end: i,
            });
        } else {
            tokens.push(Token {
                text: c.to_string(),
                char_start: i,
                char_end: i + 1,
            });
            i += 1;
        }
    }
    tokens
}

/// Reconstructs the source string from tokens and the gaps between them.
pub fn detokenize(source: &str, tokens: &[Token]) -> String {
    let chars: Vec<char> = source.chars().collect();
    let mut out = String::new();
    let mut pos = 0;
    for t in tokens {
        out.extend(chars[pos..t.char_start].iter());
        out.push_str(&t.text);
        pos = t.char_end;
    }
    out.extend(chars[pos..].iter());
    out
}

/// Codepoint-indexed slice; `None` if out of range.
pub fn char_slice(s: &str, start: usize, end: usize) -> Option<String> {
    if end < start {
        return None;
    }
    let mut iter = s.char_indices();
    let byte_start = if start == 0 {
        0
    } else {
        iter.nth(start - 1).map(|(i, c)| i + c.len_utf8())?
    };
    let mut taken = String::new();
    let mut count = start;
    for (_, c) in s[byte_start..].char_indices() {
        if count == end {
            break;
        }
        taken.push(c);
        count += 1;
    }
    if count == end {
        Some(taken)
    } else {
        None
    }
}
