//! Answer-span alignment and end-to-end example tokenization.

use super::{
    join_tokens, normalize_whitespace, split_sentences, tokenize, AbbreviationList, CorpusError,
    QAExample, SentenceRange, Token, TokenizedExample, DEFAULT_MAX_CONTEXT_LEN,
};

#[derive(Debug, Clone)]
pub struct TokenizeOptions {
    pub max_context_len: usize,
    pub abbreviations: AbbreviationList,
}

impl Default for TokenizeOptions {
    fn default() -> Self {
        TokenizeOptions {
            max_context_len: DEFAULT_MAX_CONTEXT_LEN,
            abbreviations: AbbreviationList::default(),
        }
    }
}

/// Smallest inclusive token interval covering the first gold answer's
/// character span. Starts or ends falling mid-token widen the interval to
/// the enclosing token.
pub fn align_answer(example: &QAExample, tokens: &[Token]) -> Result<(usize, usize), CorpusError> {
    let answer = example.answers.first().ok_or_else(|| CorpusError::Alignment {
        id: example.id.clone(),
        detail: "example has no gold answers".into(),
    })?;
    let a_start = answer.char_start;
    let a_end = answer.char_start + answer.text.chars().count();
    let tok_start = tokens.iter().position(|t| t.char_end > a_start);
    let tok_end = tokens.iter().rposition(|t| t.char_start < a_end);
    match (tok_start, tok_end) {
        (Some(s), Some(e)) if s <= e => Ok((s, e)),
        _ => Err(CorpusError::Alignment {
            id: example.id.clone(),
            detail: format!(
                "answer chars [{a_start}, {a_end}) not covered by the tokenized context \
                 (context may be truncated)"
            ),
        }),
    }
}

/// Tokenizes an example, splits sentences, truncates, and aligns the answer.
///
/// Errors when the answer is cut off by truncation or when the aligned span
/// text does not recover the gold answer after whitespace normalization;
/// such examples are excluded from training.
pub fn tokenize_example(
    example: &QAExample,
    opts: &TokenizeOptions,
) -> Result<TokenizedExample, CorpusError> {
    let (ex, exact) = tokenize_inner(example, opts)?;
    if !exact {
        return Err(CorpusError::Alignment {
            id: example.id.clone(),
            detail: format!(
                "aligned span {:?} does not recover the gold answer text",
                ex.answer_span
            ),
        });
    }
    Ok(ex)
}

/// Like [`tokenize_example`] but tolerates inexact alignment (widened spans);
/// used by evaluation, where gold strings rather than spans drive scoring.
pub fn tokenize_lossy(
    example: &QAExample,
    opts: &TokenizeOptions,
) -> Result<TokenizedExample, CorpusError> {
    tokenize_inner(example, opts).map(|(ex, _)| ex)
}

fn tokenize_inner(
    example: &QAExample,
    opts: &TokenizeOptions,
) -> Result<(TokenizedExample, bool), CorpusError> {
    let mut context_tokens = tokenize(&example.context);
    let mut sentence_ranges =
        split_sentences(&context_tokens, &example.context, &opts.abbreviations);
    let mut truncated = false;
    if context_tokens.len() > opts.max_context_len {
        truncated = true;
        let cut = truncation_point(&sentence_ranges, opts.max_context_len);
        context_tokens.truncate(cut);
        sentence_ranges.retain(|&(s, _)| s < cut);
        if let Some(last) = sentence_ranges.last_mut() {
            last.1 = last.1.min(cut);
        }
    }
    let answer_span = align_answer(example, &context_tokens)?;
    let question_tokens = tokenize(&example.question);
    let span_text = join_tokens(&context_tokens[answer_span.0..=answer_span.1]);
    let gold_text = normalize_whitespace(&example.answers[0].text);
    let exact = span_text == gold_text;
    Ok((
        TokenizedExample {
            example_id: example.id.clone(),
            context_tokens,
            question_tokens,
            sentence_ranges,
            answer_span,
            truncated,
        },
        exact,
    ))
}

/// Largest sentence boundary not exceeding `max_len`, falling back to a hard
/// cut at `max_len` when the first sentence alone is too long.
fn truncation_point(ranges: &[SentenceRange], max_len: usize) -> usize {
    ranges
        .iter()
        .map(|&(_, e)| e)
        .filter(|&e| e <= max_len)
        .max()
        .unwrap_or(max_len)
        .max(1)
}
