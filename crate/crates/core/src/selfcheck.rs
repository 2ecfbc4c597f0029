//! Built-in correctness checks and the reference fixtures they run on.
//!
//! Used three ways: by unit tests, by the acceptance suite, and by the CLI
//! `selftest` subcommand, so everything here is ordinary (non-test) code.

use crate::corpus::{
    join_tokens, tokenize, tokenize_example, GoldAnswer, QAExample, TokenizeOptions,
    TokenizedExample,
};
use crate::metrics::{span_entropy, SpanDistribution};
use crate::model::{
    backward, loss_all, EncodedExample, ModelConfig, ModelParams, TrainItem,
};
use crate::perturb::{del_func, shuf_word, FunctionWordLexicon, PerturbationKind, PERTURBATIONS};
use crate::rng::DetRng;
use std::collections::BTreeMap;

/// Super Bowl 50 reference passage used in golden tests.
pub const SB_CONTEXT: &str = "The American Football Conference (AFC) champion Denver Broncos \
     defeated the National Football Conference (NFC) champion Carolina Panthers 24\u{2013}10 \
     to earn their third Super Bowl title.";
pub const SB_QUESTION: &str = "Which NFL team represented the AFC at Super Bowl 50?";
/// Expected function-word-deletion output for [`SB_CONTEXT`].
pub const SB_DEL_FUNC_CONTEXT: &str = "American Football Conference AFC champion Denver Broncos \
     defeated National Football Conference NFC champion Carolina Panthers 24 earn third Super \
     Bowl title.";
pub const SB_DEL_FUNC_QUESTION: &str = "NFL team represented AFC Super Bowl 50?";

pub fn super_bowl_example() -> TokenizedExample {
    let char_start = SB_CONTEXT.find("Denver").unwrap();
    let ex = QAExample {
        id: "sb50".into(),
        title: None,
        context: SB_CONTEXT.into(),
        question: SB_QUESTION.into(),
        answers: vec![GoldAnswer {
            text: "Denver Broncos".into(),
            char_start,
        }],
    };
    tokenize_example(&ex, &TokenizeOptions::default()).unwrap()
}

/// Single-space join of the tokens of `s`; golden strings are compared in
/// this normal form, which is also what perturbation output uses.
pub fn token_join(s: &str) -> String {
    join_tokens(&tokenize(s))
}

// --- gradient checking -----------------------------------------------------

fn check_config() -> ModelConfig {
    ModelConfig::new(6, 14)
}

/// Random encoded example with a valid gold span.
pub fn random_encoded_example(
    rng: &mut DetRng,
    vocab_size: usize,
    ctx_len: usize,
    que_len: usize,
) -> EncodedExample {
    let context_ids: Vec<u32> = (0..ctx_len).map(|_| rng.below(vocab_size) as u32).collect();
    let question_ids: Vec<u32> = (0..que_len).map(|_| rng.below(vocab_size) as u32).collect();
    let s = rng.below(ctx_len);
    let e = s + rng.below(ctx_len - s);
    EncodedExample {
        example_id: "r".into(),
        context_ids,
        question_ids,
        gold: (s, e),
    }
}

/// Number of scalar parameters, for finite differencing.
pub fn param_slots(params: &ModelParams) -> usize {
    params.embed.len() + params.w_start.len() + params.w_end.len() + 2
}

pub fn get_slot(params: &ModelParams, slot: usize) -> f64 {
    let ne = params.embed.len();
    let nw = params.w_start.len();
    if slot < ne {
        params.embed.as_slice().unwrap()[slot]
    } else if slot < ne + nw {
        params.w_start.as_slice().unwrap()[slot - ne]
    } else if slot < ne + 2 * nw {
        params.w_end.as_slice().unwrap()[slot - ne - nw]
    } else if slot == ne + 2 * nw {
        params.b_start
    } else {
        params.b_end
    }
}

pub fn set_slot(params: &mut ModelParams, slot: usize, value: f64) {
    let ne = params.embed.len();
    let nw = params.w_start.len();
    if slot < ne {
        params.embed.as_slice_mut().unwrap()[slot] = value;
    } else if slot < ne + nw {
        params.w_start.as_slice_mut().unwrap()[slot - ne] = value;
    } else if slot < ne + 2 * nw {
        params.w_end.as_slice_mut().unwrap()[slot - ne - nw] = value;
    } else if slot == ne + 2 * nw {
        params.b_start = value;
    } else {
        params.b_end = value;
    }
}

/// Central finite differences (step 1e-6) on every parameter of a small
/// random model against the analytic gradient of the combined objective
/// with all four entropy terms weighted `lambda`. Returns the max
/// elementwise relative error.
pub fn gradient_check(seed: u64, lambda: f64) -> f64 {
    let cfg = check_config();
    let mut rng = DetRng::new(seed);
    let params = ModelParams::init(cfg, rng.next_u64());
    let clean = random_encoded_example(&mut rng, cfg.vocab_size, 7, 3);
    let views: Vec<(PerturbationKind, EncodedExample)> = vec![
        (PerturbationKind::DelFunc, random_encoded_example(&mut rng, cfg.vocab_size, 5, 2)),
        (PerturbationKind::DelQue, random_encoded_example(&mut rng, cfg.vocab_size, 7, 0)),
        (PerturbationKind::ShufWord, random_encoded_example(&mut rng, cfg.vocab_size, 7, 3)),
        (PerturbationKind::ShufSent, random_encoded_example(&mut rng, cfg.vocab_size, 7, 3)),
    ];
    let lambdas: BTreeMap<PerturbationKind, f64> =
        PERTURBATIONS.iter().map(|&k| (k, lambda)).collect();
    let batch = vec![TrainItem {
        clean: clean.clone(),
        views: views.clone(),
    }];
    let (grads, _, _) = backward(&params, &batch, &lambdas);
    let step = 1e-6;
    let mut max_rel = 0.0f64;
    for slot in 0..param_slots(&params) {
        let orig = get_slot(&params, slot);
        let mut p = params.clone();
        set_slot(&mut p, slot, orig + step);
        let f_plus = loss_all(&p, &clean, &views, &lambdas).total;
        set_slot(&mut p, slot, orig - step);
        let f_minus = loss_all(&p, &clean, &views, &lambdas).total;
        let fd = (f_plus - f_minus) / (2.0 * step);
        let analytic = get_slot(&grads, slot);
        // floor the denominator: near-zero gradients are dominated by
        // cancellation noise in the difference quotient
        let rel = (analytic - fd).abs() / analytic.abs().max(fd.abs()).max(1e-3);
        max_rel = max_rel.max(rel);
    }
    max_rel
}

// --- selftest --------------------------------------------------------------

/// Outcome of one built-in check.
#[derive(Debug, Clone)]
pub struct CheckResult {
    pub name: &'static str,
    pub pass: bool,
    pub detail: String,
}

/// Runs the built-in checks: the entropy ceiling constant, the reference
/// deletion goldens, answer contiguity under word shuffling, and a
/// fixed-seed gradient check.
pub fn run_selftest() -> Vec<CheckResult> {
    let mut out = Vec::new();

    let uniform = SpanDistribution {
        p_start: vec![1.0 / 384.0; 384],
        p_end: vec![1.0 / 384.0; 384],
    };
    let h = span_entropy(&uniform).unwrap();
    out.push(CheckResult {
        name: "entropy ceiling 11.90 +/- 0.01 at L=384",
        pass: (h - 11.90).abs() <= 0.01,
        detail: format!("H = {h:.4}"),
    });

    let lexicon = FunctionWordLexicon::default();
    let deleted = del_func(&super_bowl_example(), &lexicon);
    out.push(CheckResult {
        name: "function-word deletion matches reference context",
        pass: deleted.perturbed_context == token_join(SB_DEL_FUNC_CONTEXT),
        detail: deleted.perturbed_context.clone(),
    });
    out.push(CheckResult {
        name: "function-word deletion matches reference question",
        pass: deleted.perturbed_question == token_join(SB_DEL_FUNC_QUESTION),
        detail: deleted.perturbed_question.clone(),
    });

    let ex = super_bowl_example();
    let contiguous = (0..100).all(|seed| {
        shuf_word(&ex, seed).answer_text() == "Denver Broncos"
    });
    out.push(CheckResult {
        name: "word shuffle keeps the answer span intact (100 seeds)",
        pass: contiguous,
        detail: String::new(),
    });

    let err = gradient_check(7, 1.0);
    out.push(CheckResult {
        name: "analytic gradient matches finite differences",
        pass: err < 1e-4,
        detail: format!("max relative error {err:.2e}"),
    });

    out
}
