//! Dataset ingestion: SQuAD/MRQA loading, offset-tracking tokenization,
//! sentence splitting, answer-span alignment, and vocabulary construction.
//!
//! All character offsets count Unicode scalar values (codepoints), not
//! bytes, matching the SQuAD `answer_start` convention.

mod align;
mod mrqa;
mod squad;
mod tokenize;
mod sentence;
mod vocab;

pub use align::{align_answer, tokenize_example, tokenize_lossy, TokenizeOptions};
pub use mrqa::load_mrqa;
pub use squad::{load_squad, save_squad, LoadMode};
pub use sentence::{split_sentences, AbbreviationList};
pub use tokenize::{char_slice, detokenize, tokenize};
pub use vocab::{Vocab, PAD_ID, UNK_ID};

use serde::{Deserialize, Serialize};

/// Default context-length cap in tokens.
pub const DEFAULT_MAX_CONTEXT_LEN: usize = 384;

/// One context/question/gold-answers record in SQuAD semantics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QAExample {
    pub id: String,
    pub title: Option<String>,
    pub context: String,
    pub question: String,
    pub answers: Vec<GoldAnswer>,
}

/// A gold answer: its surface text and codepoint offset into the context.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoldAnswer {
    pub text: String,
    pub char_start: usize,
}

impl GoldAnswer {
    /// Checks `context[char_start .. char_start + len] == text` in codepoints.
    pub fn matches(&self, context: &str) -> bool {
        let len = self.text.chars().count();
        char_slice(context, self.char_start, self.char_start + len)
            .map(|s| s == self.text)
            .unwrap_or(false)
    }
}

/// A token with codepoint offsets into its source string.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    pub text: String,
    pub char_start: usize,
    pub char_end: usize,
}

impl Token {
    /// A token with no alphanumeric character is punctuation.
    pub fn is_punctuation(&self) -> bool {
        !self.text.chars().any(|c| c.is_alphanumeric())
    }

    pub fn is_sentence_terminator(&self) -> bool {
        matches!(self.text.as_str(), "." | "!" | "?")
    }
}

/// Half-open interval of token indices.
pub type SentenceRange = (usize, usize);

/// A tokenized example with sentence boundaries and an aligned answer span.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenizedExample {
    pub example_id: String,
    pub context_tokens: Vec<Token>,
    pub question_tokens: Vec<Token>,
    /// Disjoint, ordered ranges partitioning `context_tokens`.
    pub sentence_ranges: Vec<SentenceRange>,
    /// Inclusive token indices of the first gold answer.
    pub answer_span: (usize, usize),
    pub truncated: bool,
}

impl TokenizedExample {
    pub fn answer_text(&self) -> String {
        join_tokens(&self.context_tokens[self.answer_span.0..=self.answer_span.1])
    }
}

/// Single-space join of token texts.
pub fn join_tokens(tokens: &[Token]) -> String {
    tokens
        .iter()
        .map(|t| t.text.as_str())
        .collect::<Vec<_>>()
        .join(" ")
}

/// Collapses runs of whitespace to single spaces and trims.
pub fn normalize_whitespace(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("{path}: parse error at line {line}, column {column}: {detail}")]
    Parse {
        path: String,
        line: usize,
        column: usize,
        detail: String,
    },
    #[error("example {id}: {detail}")]
    Validation { id: String, detail: String },
    #[error("example {id}: answer alignment failed: {detail}")]
    Alignment { id: String, detail: String },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl CorpusError {
    pub fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        CorpusError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}
