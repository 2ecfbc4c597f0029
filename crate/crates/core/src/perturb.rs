//! Answer-span-preserving input perturbations.
//!
//! Four operators: function-word deletion, question deletion, per-sentence
//! word shuffling, and sentence shuffling. Every operator preserves the
//! answer-span token text exactly; shuffles are driven by the crate's
//! deterministic RNG so equal (kind, example, seed) yields byte-identical
//! output.

use crate::corpus::{
    join_tokens, split_sentences, AbbreviationList, Token, TokenizedExample,
};
use crate::rng::DetRng;
use serde::{Deserialize, Serialize};
use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PerturbationKind {
    None,
    DelFunc,
    DelQue,
    ShufWord,
    ShufSent,
}

/// The four destructive perturbations, excluding the identity.
pub const PERTURBATIONS: [PerturbationKind; 4] = [
    PerturbationKind::DelFunc,
    PerturbationKind::DelQue,
    PerturbationKind::ShufWord,
    PerturbationKind::ShufSent,
];

/// All five test-time conditions, identity first.
pub const TEST_KINDS: [PerturbationKind; 5] = [
    PerturbationKind::None,
    PerturbationKind::DelFunc,
    PerturbationKind::DelQue,
    PerturbationKind::ShufWord,
    PerturbationKind::ShufSent,
];

impl PerturbationKind {
    pub fn name(&self) -> &'static str {
        match self {
            PerturbationKind::None => "none",
            PerturbationKind::DelFunc => "del_func",
            PerturbationKind::DelQue => "del_que",
            PerturbationKind::ShufWord => "shuf_word",
            PerturbationKind::ShufSent => "shuf_sent",
        }
    }

    /// Stable tag used when deriving per-example RNG streams.
    pub fn seed_tag(&self) -> u64 {
        match self {
            PerturbationKind::None => 0,
            PerturbationKind::DelFunc => 1,
            PerturbationKind::DelQue => 2,
            PerturbationKind::ShufWord => 3,
            PerturbationKind::ShufSent => 4,
        }
    }
}

impl fmt::Display for PerturbationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PerturbationKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "none" => Ok(PerturbationKind::None),
            "del_func" => Ok(PerturbationKind::DelFunc),
            "del_que" => Ok(PerturbationKind::DelQue),
            "shuf_word" => Ok(PerturbationKind::ShufWord),
            "shuf_sent" => Ok(PerturbationKind::ShufSent),
            other => Err(format!("unknown perturbation kind: {other}")),
        }
    }
}

/// Closed-class word forms deleted by `del_func`, plus the punctuation rule
/// (all punctuation removed except sentence-final terminators).
#[derive(Debug, Clone)]
pub struct FunctionWordLexicon {
    words: HashSet<String>,
    /// Remove a digit token that immediately follows a removed dash, so
    /// score ranges like "24–10" reduce to "24". Heuristic; on by default.
    pub drop_number_after_dash: bool,
}

impl FunctionWordLexicon {
    /// Parses a lexicon file: one lowercased word per line, `#` comments.
    pub fn parse(text: &str) -> Self {
        let words = text
            .lines()
            .map(|l| l.split('#').next().unwrap_or("").trim())
            .filter(|l| !l.is_empty())
            .map(|l| l.to_lowercase())
            .collect();
        FunctionWordLexicon {
            words,
            drop_number_after_dash: true,
        }
    }

    pub fn contains(&self, word: &str) -> bool {
        self.words.contains(&word.to_lowercase())
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }
}

impl Default for FunctionWordLexicon {
    fn default() -> Self {
        FunctionWordLexicon::parse(include_str!("../data/function_words.txt"))
    }
}

/// The result of applying one perturbation to a tokenized example.
///
/// Token offsets index into the re-serialized strings, which are the
/// single-space joins of the respective token texts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbedExample {
    pub base: TokenizedExample,
    pub kind: PerturbationKind,
    pub seed: u64,
    pub context_tokens: Vec<Token>,
    pub question_tokens: Vec<Token>,
    /// Inclusive token indices into `context_tokens`.
    pub answer_span: (usize, usize),
    pub perturbed_context: String,
    pub perturbed_question: String,
}

impl PerturbedExample {
    pub fn answer_text(&self) -> String {
        join_tokens(&self.context_tokens[self.answer_span.0..=self.answer_span.1])
    }

    /// A self-consistent [`TokenizedExample`] over the perturbed strings,
    /// with sentence ranges recomputed on the re-serialized context.
    pub fn view(&self) -> TokenizedExample {
        let sentence_ranges = if self.context_tokens.is_empty() {
            Vec::new()
        } else {
            split_sentences(
                &self.context_tokens,
                &self.perturbed_context,
                &AbbreviationList::default(),
            )
        };
        TokenizedExample {
            example_id: self.base.example_id.clone(),
            context_tokens: self.context_tokens.clone(),
            question_tokens: self.question_tokens.clone(),
            sentence_ranges,
            answer_span: self.answer_span,
            truncated: self.base.truncated,
        }
    }
}

/// Re-offsets token texts into their single-space join.
fn reserialize(texts: &[&str]) -> (Vec<Token>, String) {
    let mut tokens = Vec::with_capacity(texts.len());
    let mut joined = String::new();
    let mut pos = 0;
    for (i, text) in texts.iter().enumerate() {
        if i > 0 {
            joined.push(' ');
            pos += 1;
        }
        let len = text.chars().count();
        tokens.push(Token {
            text: (*text).to_string(),
            char_start: pos,
            char_end: pos + len,
        });
        joined.push_str(text);
        pos += len;
    }
    (tokens, joined)
}

fn build(
    base: &TokenizedExample,
    kind: PerturbationKind,
    seed: u64,
    context_texts: Vec<&str>,
    question_texts: Vec<&str>,
    answer_span: (usize, usize),
) -> PerturbedExample {
    let (context_tokens, perturbed_context) = reserialize(&context_texts);
    let (question_tokens, perturbed_question) = reserialize(&question_texts);
    PerturbedExample {
        base: base.clone(),
        kind,
        seed,
        context_tokens,
        question_tokens,
        answer_span,
        perturbed_context,
        perturbed_question,
    }
}

/// Token indices that close a sentence with a `.`/`!`/`?`.
fn sentence_final_terminators(ex: &TokenizedExample) -> HashSet<usize> {
    ex.sentence_ranges
        .iter()
        .filter_map(|&(_, end)| {
            let idx = end.checked_sub(1)?;
            ex.context_tokens[idx].is_sentence_terminator().then_some(idx)
        })
        .collect()
}

/// Deletes function words and non-terminal punctuation from context and
/// question. Answer-span tokens are never deleted. Seedless.
pub fn del_func(ex: &TokenizedExample, lexicon: &FunctionWordLexicon) -> PerturbedExample {
    let finals = sentence_final_terminators(ex);
    let (span_start, span_end) = ex.answer_span;
    let mut kept: Vec<usize> = Vec::new();
    let mut prev_dropped_dash = false;
    for (i, tok) in ex.context_tokens.iter().enumerate() {
        let protected = i >= span_start && i <= span_end;
        let drop = !protected && should_drop(tok, finals.contains(&i), lexicon, prev_dropped_dash);
        prev_dropped_dash = drop && is_dash(&tok.text);
        if !drop {
            kept.push(i);
        }
    }
    let new_start = kept.iter().position(|&i| i == span_start).expect("span kept");
    let new_end = kept.iter().position(|&i| i == span_end).expect("span kept");
    let context_texts: Vec<&str> = kept.iter().map(|&i| ex.context_tokens[i].text.as_str()).collect();

    let q_last = ex.question_tokens.len().checked_sub(1);
    let mut prev_dropped_dash = false;
    let question_texts: Vec<&str> = ex
        .question_tokens
        .iter()
        .enumerate()
        .filter(|(i, tok)| {
            let is_final = Some(*i) == q_last && tok.is_sentence_terminator();
            let drop = should_drop(tok, is_final, lexicon, prev_dropped_dash);
            prev_dropped_dash = drop && is_dash(&tok.text);
            !drop
        })
        .map(|(_, tok)| tok.text.as_str())
        .collect();

    build(ex, PerturbationKind::DelFunc, 0, context_texts, question_texts, (new_start, new_end))
}

fn is_dash(text: &str) -> bool {
    matches!(text, "-" | "\u{2013}" | "\u{2014}")
}

fn should_drop(
    tok: &Token,
    is_sentence_final_terminator: bool,
    lexicon: &FunctionWordLexicon,
    prev_dropped_dash: bool,
) -> bool {
    if tok.is_punctuation() {
        return !is_sentence_final_terminator;
    }
    if lexicon.contains(&tok.text) {
        return true;
    }
    lexicon.drop_number_after_dash && prev_dropped_dash && tok.text.chars().all(|c| c.is_ascii_digit())
}

/// Empties the question; the context is untouched (modulo re-serialization).
pub fn del_que(ex: &TokenizedExample) -> PerturbedExample {
    let context_texts: Vec<&str> = ex.context_tokens.iter().map(|t| t.text.as_str()).collect();
    build(ex, PerturbationKind::DelQue, 0, context_texts, Vec::new(), ex.answer_span)
}

/// Shuffle groups: sentence ranges, with ranges touched by the answer span
/// merged so the fused span unit stays inside one group.
fn shuffle_groups(ex: &TokenizedExample) -> Vec<(usize, usize)> {
    let (a_start, a_end) = ex.answer_span;
    let mut groups: Vec<(usize, usize)> = Vec::new();
    for &(s, e) in &ex.sentence_ranges {
        let touches_answer = s <= a_end && a_start < e;
        match groups.last_mut() {
            Some(last) if touches_answer && last.0 <= a_end && a_start < last.1 => last.1 = e,
            _ => groups.push((s, e)),
        }
    }
    groups
}

/// Shuffles token order within each sentence. The answer span is fused into
/// one atomic unit (internal order preserved). The question shuffles as a
/// single sentence with a terminal `.`/`!`/`?` pinned in place.
pub fn shuf_word(ex: &TokenizedExample, seed: u64) -> PerturbedExample {
    let mut rng = DetRng::new(seed);
    let (a_start, a_end) = ex.answer_span;
    let mut order: Vec<usize> = Vec::with_capacity(ex.context_tokens.len());
    for (s, e) in shuffle_groups(ex) {
        // Units: index ranges over the original tokens.
        let mut units: Vec<(usize, usize)> = Vec::new();
        let mut i = s;
        while i < e {
            if i == a_start {
                units.push((a_start, a_end + 1));
                i = a_end + 1;
            } else {
                units.push((i, i + 1));
                i += 1;
            }
        }
        rng.shuffle(&mut units);
        for (us, ue) in units {
            order.extend(us..ue);
        }
    }
    let new_start = order.iter().position(|&i| i == a_start).expect("span present");
    let context_texts: Vec<&str> = order.iter().map(|&i| ex.context_tokens[i].text.as_str()).collect();

    let mut q_idx: Vec<usize> = (0..ex.question_tokens.len()).collect();
    let pin_last = ex
        .question_tokens
        .last()
        .map(|t| t.is_sentence_terminator())
        .unwrap_or(false);
    let shuffle_len = if pin_last { q_idx.len() - 1 } else { q_idx.len() };
    rng.shuffle(&mut q_idx[..shuffle_len]);
    let question_texts: Vec<&str> = q_idx.iter().map(|&i| ex.question_tokens[i].text.as_str()).collect();

    build(
        ex,
        PerturbationKind::ShufWord,
        seed,
        context_texts,
        question_texts,
        (new_start, new_start + (a_end - a_start)),
    )
}

/// Shuffles sentence order; token order inside each sentence is unchanged
/// and the question is untouched.
pub fn shuf_sent(ex: &TokenizedExample, seed: u64) -> PerturbedExample {
    let mut rng = DetRng::new(seed);
    let mut groups = shuffle_groups(ex);
    rng.shuffle(&mut groups);
    let (a_start, a_end) = ex.answer_span;
    let mut order: Vec<usize> = Vec::with_capacity(ex.context_tokens.len());
    let mut new_start = 0;
    for &(s, e) in &groups {
        if s <= a_start && a_start < e {
            new_start = order.len() + (a_start - s);
        }
        order.extend(s..e);
    }
    let context_texts: Vec<&str> = order.iter().map(|&i| ex.context_tokens[i].text.as_str()).collect();
    let question_texts: Vec<&str> = ex.question_tokens.iter().map(|t| t.text.as_str()).collect();
    build(
        ex,
        PerturbationKind::ShufSent,
        seed,
        context_texts,
        question_texts,
        (new_start, new_start + (a_end - a_start)),
    )
}

/// Identity perturbation: same token sequences, re-serialized.
pub fn identity(ex: &TokenizedExample) -> PerturbedExample {
    let context_texts: Vec<&str> = ex.context_tokens.iter().map(|t| t.text.as_str()).collect();
    let question_texts: Vec<&str> = ex.question_tokens.iter().map(|t| t.text.as_str()).collect();
    build(ex, PerturbationKind::None, 0, context_texts, question_texts, ex.answer_span)
}

/// Dispatches to the operator for `kind`. Deletions ignore the seed.
pub fn apply(
    kind: PerturbationKind,
    ex: &TokenizedExample,
    seed: u64,
    lexicon: &FunctionWordLexicon,
) -> PerturbedExample {
    match kind {
        PerturbationKind::None => identity(ex),
        PerturbationKind::DelFunc => del_func(ex, lexicon),
        PerturbationKind::DelQue => del_que(ex),
        PerturbationKind::ShufWord => shuf_word(ex, seed),
        PerturbationKind::ShufSent => shuf_sent(ex, seed),
    }
}

#[cfg(test)]
mod tests;
