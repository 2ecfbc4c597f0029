use super::*;
use crate::corpus::{tokenize, tokenize_example, GoldAnswer, QAExample, TokenizeOptions};
use crate::selfcheck::{
    super_bowl_example, token_join, SB_CONTEXT, SB_DEL_FUNC_CONTEXT, SB_DEL_FUNC_QUESTION, SB_QUESTION,
};

#[test]
fn del_func_reproduces_golden_question() {
    let out = del_func(&super_bowl_example(), &FunctionWordLexicon::default());
    assert_eq!(out.perturbed_question, token_join(SB_DEL_FUNC_QUESTION));
}

#[test]
fn del_func_reproduces_golden_context() {
    let out = del_func(&super_bowl_example(), &FunctionWordLexicon::default());
    assert_eq!(out.perturbed_context, token_join(SB_DEL_FUNC_CONTEXT));
}

#[test]
fn del_func_without_dash_rule_keeps_the_ten() {
    let mut lexicon = FunctionWordLexicon::default();
    lexicon.drop_number_after_dash = false;
    let out = del_func(&super_bowl_example(), &lexicon);
    assert!(out.perturbed_context.contains("Panthers 24 10 earn"));
}

#[test]
fn del_func_is_identity_without_function_words() {
    let ex = QAExample {
        id: "x".into(),
        title: None,
        context: "Denver Broncos defeated Carolina Panthers.".into(),
        question: "Name winning team".into(),
        answers: vec![GoldAnswer {
            text: "Denver Broncos".into(),
            char_start: 0,
        }],
    };
    let t = tokenize_example(&ex, &TokenizeOptions::default()).unwrap();
    let out = del_func(&t, &FunctionWordLexicon::default());
    assert_eq!(out.perturbed_context, "Denver Broncos defeated Carolina Panthers .");
    assert_eq!(out.perturbed_question, "Name winning team");
}

#[test]
fn del_que_empties_question_only() {
    let ex = super_bowl_example();
    let out = del_que(&ex);
    assert!(out.perturbed_question.is_empty());
    assert!(out.question_tokens.is_empty());
    assert_eq!(out.perturbed_context, token_join(SB_CONTEXT));
    assert_eq!(out.answer_span, ex.answer_span);
    // idempotence
    let twice = del_que(&out.view());
    assert_eq!(twice.perturbed_context, out.perturbed_context);
    assert_eq!(twice.perturbed_question, out.perturbed_question);
}

#[test]
fn shuf_word_keeps_answer_contiguous_for_100_seeds() {
    let ex = super_bowl_example();
    for seed in 0..100 {
        let out = shuf_word(&ex, seed);
        assert_eq!(out.answer_text(), "Denver Broncos", "seed {seed}");
        assert!(out.perturbed_context.contains("Denver Broncos"), "seed {seed}");
    }
}

#[test]
fn shuf_word_pins_terminal_question_mark() {
    let ex = super_bowl_example();
    for seed in 0..20 {
        let out = shuf_word(&ex, seed);
        assert!(out.perturbed_question.ends_with('?'), "seed {seed}");
    }
}

#[test]
fn shuf_word_single_token_sentence_unchanged() {
    let ex = QAExample {
        id: "x".into(),
        title: None,
        context: "Broncos".into(),
        question: "Who".into(),
        answers: vec![GoldAnswer {
            text: "Broncos".into(),
            char_start: 0,
        }],
    };
    let t = tokenize_example(&ex, &TokenizeOptions::default()).unwrap();
    for seed in 0..10 {
        assert_eq!(shuf_word(&t, seed).perturbed_context, "Broncos");
    }
}

#[test]
fn shuf_word_preserves_token_multiset() {
    let ex = super_bowl_example();
    let mut original: Vec<String> = ex.context_tokens.iter().map(|t| t.text.clone()).collect();
    original.sort();
    for seed in 0..50 {
        let out = shuf_word(&ex, seed);
        let mut shuffled: Vec<String> = out.context_tokens.iter().map(|t| t.text.clone()).collect();
        shuffled.sort();
        assert_eq!(shuffled, original, "seed {seed}");
    }
}

fn two_sentence_example() -> TokenizedExample {
    let ctx = "Denver Broncos won the game. Carolina Panthers lost badly.";
    let ex = QAExample {
        id: "x".into(),
        title: None,
        context: ctx.into(),
        question: "Who won?".into(),
        answers: vec![GoldAnswer {
            text: "Denver Broncos".into(),
            char_start: 0,
        }],
    };
    tokenize_example(&ex, &TokenizeOptions::default()).unwrap()
}

#[test]
fn shuf_sent_one_sentence_unchanged() {
    let ex = super_bowl_example();
    for seed in 0..10 {
        let out = shuf_sent(&ex, seed);
        assert_eq!(out.perturbed_context, token_join(SB_CONTEXT));
        assert_eq!(out.answer_span, ex.answer_span);
    }
}

#[test]
fn shuf_sent_swap_matches_rng_trace() {
    let ex = two_sentence_example();
    // Enumerate both permutations; the RNG trace decides which one the
    // operator must emit: Fisher-Yates over 2 items swaps iff below(2) == 0.
    let seed = 5;
    let swapped = DetRng::new(seed).below(2) == 0;
    let out = shuf_sent(&ex, seed);
    let expected = if swapped {
        "Carolina Panthers lost badly . Denver Broncos won the game ."
    } else {
        "Denver Broncos won the game . Carolina Panthers lost badly ."
    };
    assert_eq!(out.perturbed_context, expected);
    // Find a seed exercising each branch.
    let any_swap = (0..50).any(|s| DetRng::new(s).below(2) == 0);
    let any_keep = (0..50).any(|s| DetRng::new(s).below(2) == 1);
    assert!(any_swap && any_keep);
}

#[test]
fn shuf_sent_preserves_sentence_multiset_and_question() {
    let ex = two_sentence_example();
    for seed in 0..20 {
        let out = shuf_sent(&ex, seed);
        assert_eq!(out.perturbed_question, "Who won ?");
        assert_eq!(out.answer_text(), "Denver Broncos");
        let mut sentences: Vec<&str> = vec![
            "Denver Broncos won the game .",
            "Carolina Panthers lost badly .",
        ];
        sentences.sort();
        let mut got: Vec<String> = Vec::new();
        let halves = out.perturbed_context.split(" . ").count();
        assert!(halves <= 2);
        // reconstruct sentences from the view's token ranges
        let view = out.view();
        for &(s, e) in &view.sentence_ranges {
            got.push(join_tokens(&view.context_tokens[s..e]));
        }
        got.sort();
        assert_eq!(got, sentences, "seed {seed}");
    }
}

#[test]
fn apply_none_is_identity_modulo_reserialization() {
    let ex = super_bowl_example();
    let out = apply(PerturbationKind::None, &ex, 9, &FunctionWordLexicon::default());
    assert_eq!(out.perturbed_context, token_join(SB_CONTEXT));
    assert_eq!(out.perturbed_question, token_join(SB_QUESTION));
    assert_eq!(out.answer_span, ex.answer_span);
}

#[test]
fn apply_is_deterministic_per_seed_and_seedless_for_deletions() {
    let ex = super_bowl_example();
    let lex = FunctionWordLexicon::default();
    let a = apply(PerturbationKind::ShufWord, &ex, 123, &lex);
    let b = apply(PerturbationKind::ShufWord, &ex, 123, &lex);
    assert_eq!(a, b);
    let c = apply(PerturbationKind::DelFunc, &ex, 1, &lex);
    let d = apply(PerturbationKind::DelFunc, &ex, 2, &lex);
    assert_eq!(c.perturbed_context, d.perturbed_context);
}

#[test]
fn del_func_output_is_subsequence_without_lexicon_words() {
    let ex = super_bowl_example();
    let lex = FunctionWordLexicon::default();
    let out = del_func(&ex, &lex);
    // subsequence check
    let mut it = ex.context_tokens.iter();
    for tok in &out.context_tokens {
        assert!(it.any(|orig| orig.text == tok.text), "not a subsequence");
    }
    // no lexicon word survives outside the answer span
    for (i, tok) in out.context_tokens.iter().enumerate() {
        if i < out.answer_span.0 || i > out.answer_span.1 {
            assert!(!lex.contains(&tok.text), "{} survived", tok.text);
        }
    }
}

#[test]
fn view_retokenizes_consistently() {
    let ex = super_bowl_example();
    let lex = FunctionWordLexicon::default();
    for kind in PERTURBATIONS {
        let out = apply(kind, &ex, 31, &lex);
        let view = out.view();
        let retok = tokenize(&out.perturbed_context);
        assert_eq!(retok, view.context_tokens, "{kind}");
        let mut covered = 0;
        for &(s, e) in &view.sentence_ranges {
            assert_eq!(s, covered);
            covered = e;
        }
        assert_eq!(covered, view.context_tokens.len(), "{kind}");
    }
}
