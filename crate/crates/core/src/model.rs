//! A small differentiable extractive span predictor.
//!
//! Scores each context position against a question summary with a bilinear
//! form: s_start[i] = e_i' W_s q + b_s (likewise for the end head), where q
//! is the mean of the question token embeddings and the zero vector for an
//! empty question. Start and end positions are treated as conditionally
//! independent, so the span probability factorizes and span entropy
//! decomposes as H(start) + H(end).
//!
//! Gradients are derived by hand and checked against central finite
//! differences in the test suite.

use crate::corpus::{TokenizedExample, Vocab};
use crate::metrics::{span_entropy, SpanDistribution};
use crate::perturb::{PerturbationKind, PerturbedExample};
use crate::rng::DetRng;
use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;

/// Decoding cap on answer length in tokens.
pub const MAX_ANSWER_LEN: usize = 30;

/// Floor applied inside logs so a zero probability at the gold position
/// yields a large finite loss instead of infinity.
pub const PROB_FLOOR: f64 = 1e-30;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub dim: usize,
    pub vocab_size: usize,
}

impl ModelConfig {
    pub fn new(dim: usize, vocab_size: usize) -> Self {
        ModelConfig { dim, vocab_size }
    }
}

/// Embedding table plus bilinear scorers for the two heads.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub embed: Array2<f64>,
    pub w_start: Array2<f64>,
    pub w_end: Array2<f64>,
    pub b_start: f64,
    pub b_end: f64,
}

impl ModelParams {
    /// Deterministic uniform init in [-0.1, 0.1].
    pub fn init(config: ModelConfig, seed: u64) -> Self {
        let mut rng = DetRng::new(seed);
        let mut draw = |rows: usize, cols: usize| {
            Array2::from_shape_fn((rows, cols), |_| (rng.next_f64() * 2.0 - 1.0) * 0.1)
        };
        ModelParams {
            embed: draw(config.vocab_size, config.dim),
            w_start: draw(config.dim, config.dim),
            w_end: draw(config.dim, config.dim),
            b_start: 0.0,
            b_end: 0.0,
        }
    }

    pub fn zeros(config: ModelConfig) -> Self {
        ModelParams {
            embed: Array2::zeros((config.vocab_size, config.dim)),
            w_start: Array2::zeros((config.dim, config.dim)),
            w_end: Array2::zeros((config.dim, config.dim)),
            b_start: 0.0,
            b_end: 0.0,
        }
    }

    pub fn config(&self) -> ModelConfig {
        ModelConfig {
            dim: self.embed.ncols(),
            vocab_size: self.embed.nrows(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.embed.iter().all(|v| v.is_finite())
            && self.w_start.iter().all(|v| v.is_finite())
            && self.w_end.iter().all(|v| v.is_finite())
            && self.b_start.is_finite()
            && self.b_end.is_finite()
    }
}

/// Gradient accumulator with the same shapes as [`ModelParams`].
pub type Gradients = ModelParams;

impl Gradients {
    pub fn scale(&mut self, factor: f64) {
        self.embed *= factor;
        self.w_start *= factor;
        self.w_end *= factor;
        self.b_start *= factor;
        self.b_end *= factor;
    }
}

/// A tokenized view reduced to vocabulary ids, ready for the model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncodedExample {
    pub example_id: String,
    pub context_ids: Vec<u32>,
    pub question_ids: Vec<u32>,
    pub gold: (usize, usize),
}

/// Encodes a tokenized example under `vocab` (unknowns map to UNK).
pub fn encode(ex: &TokenizedExample, vocab: &Vocab) -> EncodedExample {
    EncodedExample {
        example_id: ex.example_id.clone(),
        context_ids: ex.context_tokens.iter().map(|t| vocab.id(&t.text)).collect(),
        question_ids: ex.question_tokens.iter().map(|t| vocab.id(&t.text)).collect(),
        gold: ex.answer_span,
    }
}

pub fn encode_perturbed(view: &PerturbedExample, vocab: &Vocab) -> EncodedExample {
    encode(&view.view(), vocab)
}

/// Intermediate activations retained for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    pub question_summary: Array1<f64>,
    pub wq_start: Array1<f64>,
    pub wq_end: Array1<f64>,
    pub dist: SpanDistribution,
}

fn softmax(scores: &[f64]) -> Vec<f64> {
    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Forward pass. Context must be nonempty and all ids within the vocab.
pub fn forward(params: &ModelParams, ex: &EncodedExample) -> (SpanDistribution, ForwardCache) {
    let dim = params.embed.ncols();
    assert!(!ex.context_ids.is_empty(), "empty context");
    let mut q = Array1::<f64>::zeros(dim);
    if !ex.question_ids.is_empty() {
        for &id in &ex.question_ids {
            q += &params.embed.row(id as usize);
        }
        q /= ex.question_ids.len() as f64;
    }
    let wq_start = params.w_start.dot(&q);
    let wq_end = params.w_end.dot(&q);
    let mut s_start = Vec::with_capacity(ex.context_ids.len());
    let mut s_end = Vec::with_capacity(ex.context_ids.len());
    for &id in &ex.context_ids {
        let e = params.embed.row(id as usize);
        s_start.push(e.dot(&wq_start) + params.b_start);
        s_end.push(e.dot(&wq_end) + params.b_end);
    }
    let dist = SpanDistribution {
        p_start: softmax(&s_start),
        p_end: softmax(&s_end),
    };
    let cache = ForwardCache {
        question_summary: q,
        wq_start,
        wq_end,
        dist: dist.clone(),
    };
    (dist, cache)
}

/// Per-example cross-entropy -ln p_start[gold.0] - ln p_end[gold.1], with
/// probabilities floored at [`PROB_FLOOR`]. The second return value counts
/// floored positions.
pub fn loss_ce_counted(dist: &SpanDistribution, gold: (usize, usize)) -> (f64, usize) {
    let mut clamps = 0;
    let mut term = |p: f64| {
        if p < PROB_FLOOR {
            clamps += 1;
            -PROB_FLOOR.ln()
        } else {
            -p.ln()
        }
    };
    let loss = term(dist.p_start[gold.0]) + term(dist.p_end[gold.1]);
    (loss, clamps)
}

pub fn loss_ce(dist: &SpanDistribution, gold: (usize, usize)) -> f64 {
    loss_ce_counted(dist, gold).0
}

/// Decomposition of the training objective for one example (or batch mean).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub ce: f64,
    /// Entropy of each perturbed view, keyed by perturbation.
    pub ent: BTreeMap<PerturbationKind, f64>,
    /// ce - sum of lambda-weighted entropies.
    pub total: f64,
}

impl LossBreakdown {
    fn assemble(ce: f64, ent: BTreeMap<PerturbationKind, f64>, lambdas: &BTreeMap<PerturbationKind, f64>) -> Self {
        let total = ce
            - ent
                .iter()
                .map(|(k, h)| lambdas.get(k).copied().unwrap_or(0.0) * h)
                .sum::<f64>();
        LossBreakdown { ce, ent, total }
    }
}

/// Combined objective for a single perturbation (cross-entropy on the clean
/// view minus lambda times the entropy of the perturbed view).
pub fn loss_combined(
    params: &ModelParams,
    clean: &EncodedExample,
    perturbed: &EncodedExample,
    kind: PerturbationKind,
    lambda: f64,
) -> LossBreakdown {
    let mut lambdas = BTreeMap::new();
    lambdas.insert(kind, lambda);
    loss_all(params, clean, &[(kind, perturbed.clone())], &lambdas)
}

/// Multi-perturbation objective: ce - sum over views of lambda_k * H_k.
pub fn loss_all(
    params: &ModelParams,
    clean: &EncodedExample,
    views: &[(PerturbationKind, EncodedExample)],
    lambdas: &BTreeMap<PerturbationKind, f64>,
) -> LossBreakdown {
    let (dist, _) = forward(params, clean);
    let ce = loss_ce(&dist, clean.gold);
    let mut ent = BTreeMap::new();
    for (kind, view) in views {
        let (vdist, _) = forward(params, view);
        ent.insert(*kind, span_entropy(&vdist).expect("softmax output is a distribution"));
    }
    LossBreakdown::assemble(ce, ent, lambdas)
}

/// One training example: the clean view plus its active perturbed views.
#[derive(Debug, Clone)]
pub struct TrainItem {
    pub clean: EncodedExample,
    pub views: Vec<(PerturbationKind, EncodedExample)>,
}

/// Backpropagates one head: `grad_scores` is dLoss/ds for that head.
fn backprop_head(
    params: &ModelParams,
    grads: &mut Gradients,
    ex: &EncodedExample,
    cache: &ForwardCache,
    head_start: bool,
    grad_scores: &[f64],
) {
    let dim = params.embed.ncols();
    let (w, wq) = if head_start {
        (&params.w_start, &cache.wq_start)
    } else {
        (&params.w_end, &cache.wq_end)
    };
    // u = sum_i g_i e_i
    let mut u = Array1::<f64>::zeros(dim);
    let mut g_sum = 0.0;
    for (&id, &g) in ex.context_ids.iter().zip(grad_scores) {
        u.scaled_add(g, &params.embed.row(id as usize).to_owned());
        g_sum += g;
        // dE[context token] += g * (W q)
        let mut row = grads.embed.row_mut(id as usize);
        row.scaled_add(g, wq);
    }
    // dW = u q', db = sum g
    {
        let q = &cache.question_summary;
        let dw = if head_start { &mut grads.w_start } else { &mut grads.w_end };
        for r in 0..dim {
            if u[r] != 0.0 {
                let mut row = dw.row_mut(r);
                row.scaled_add(u[r], q);
            }
        }
    }
    if head_start {
        grads.b_start += g_sum;
    } else {
        grads.b_end += g_sum;
    }
    // dq = W' u, spread over question embeddings
    if !ex.question_ids.is_empty() {
        let dq = w.t().dot(&u) / ex.question_ids.len() as f64;
        for &id in &ex.question_ids {
            let mut row = grads.embed.row_mut(id as usize);
            row += &dq;
        }
    }
}

/// Analytic gradient of the batch-mean objective, plus the mean loss
/// breakdown and the count of floored log arguments.
pub fn backward(
    params: &ModelParams,
    batch: &[TrainItem],
    lambdas: &BTreeMap<PerturbationKind, f64>,
) -> (Gradients, LossBreakdown, usize) {
    assert!(!batch.is_empty());
    let mut grads = Gradients::zeros(params.config());
    let mut ce_total = 0.0;
    let mut ent_total: BTreeMap<PerturbationKind, f64> = BTreeMap::new();
    let mut clamps = 0;
    for item in batch {
        // Cross-entropy on the clean view: dL/ds = p - onehot(gold).
        let (dist, cache) = forward(params, &item.clean);
        let (ce, c) = loss_ce_counted(&dist, item.clean.gold);
        ce_total += ce;
        clamps += c;
        for head_start in [true, false] {
            let (p, gold_idx) = if head_start {
                (&dist.p_start, item.clean.gold.0)
            } else {
                (&dist.p_end, item.clean.gold.1)
            };
            let mut g: Vec<f64> = p.clone();
            g[gold_idx] -= 1.0;
            backprop_head(params, &mut grads, &item.clean, &cache, head_start, &g);
        }
        // Entropy terms: loss contributes -lambda*H, and dH/ds_j =
        // -p_j (ln p_j + H), so dLoss/ds_j = lambda * p_j (ln p_j + H).
        for (kind, view) in &item.views {
            let lambda = lambdas.get(kind).copied().unwrap_or(0.0);
            let (vdist, vcache) = forward(params, view);
            let h = span_entropy(&vdist).expect("softmax output is a distribution");
            *ent_total.entry(*kind).or_insert(0.0) += h;
            if lambda == 0.0 {
                continue;
            }
            for head_start in [true, false] {
                let p = if head_start { &vdist.p_start } else { &vdist.p_end };
                let h_head: f64 = p
                    .iter()
                    .map(|&x| if x > 0.0 { -x * x.ln() } else { 0.0 })
                    .sum();
                let g: Vec<f64> = p
                    .iter()
                    .map(|&x| if x > 0.0 { lambda * x * (x.ln() + h_head) } else { 0.0 })
                    .collect();
                backprop_head(params, &mut grads, view, &vcache, head_start, &g);
            }
        }
    }
    let n = batch.len() as f64;
    grads.scale(1.0 / n);
    for h in ent_total.values_mut() {
        *h /= n;
    }
    let breakdown = LossBreakdown::assemble(ce_total / n, ent_total, lambdas);
    (grads, breakdown, clamps)
}

/// Argmax decoding over feasible spans (start <= end, length < max_len).
/// Ties break toward the smaller start, then the smaller end. Returns
/// (start, end, confidence).
pub fn predict_span(dist: &SpanDistribution, max_answer_len: usize) -> (usize, usize, f64) {
    let l = dist.p_start.len();
    let mut best = (0usize, 0usize, f64::NEG_INFINITY);
    for i in 0..l {
        for j in i..l.min(i + max_answer_len) {
            let p = dist.p_start[i] * dist.p_end[j];
            if p > best.2 {
                best = (i, j, p);
            }
        }
    }
    best
}

/// Versioned JSON checkpoint: vocab hash, dims, and all tensors.
#[derive(Debug, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub vocab_hash: u64,
    pub dim: usize,
    pub vocab_size: usize,
    /// Row-major vocab_size x dim.
    pub embed: Vec<f64>,
    /// Row-major dim x dim.
    pub w_start: Vec<f64>,
    pub w_end: Vec<f64>,
    pub b_start: f64,
    pub b_end: f64,
}

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: invalid checkpoint: {detail}")]
    Format { path: String, detail: String },
    #[error("checkpoint vocab hash {found:#x} does not match vocabulary {expected:#x}")]
    VocabMismatch { found: u64, expected: u64 },
}

pub fn save_checkpoint(path: &Path, params: &ModelParams, vocab_hash: u64) -> Result<(), ModelError> {
    let ckpt = Checkpoint {
        version: CHECKPOINT_VERSION,
        vocab_hash,
        dim: params.embed.ncols(),
        vocab_size: params.embed.nrows(),
        embed: params.embed.iter().copied().collect(),
        w_start: params.w_start.iter().copied().collect(),
        w_end: params.w_end.iter().copied().collect(),
        b_start: params.b_start,
        b_end: params.b_end,
    };
    let json = serde_json::to_string(&ckpt).expect("checkpoint serialization");
    std::fs::write(path, json).map_err(|e| ModelError::Io {
        path: path.display().to_string(),
        source: e,
    })
}

pub fn load_checkpoint(path: &Path) -> Result<(ModelParams, u64), ModelError> {
    let raw = std::fs::read_to_string(path).map_err(|e| ModelError::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    let ckpt: Checkpoint = serde_json::from_str(&raw).map_err(|e| ModelError::Format {
        path: path.display().to_string(),
        detail: e.to_string(),
    })?;
    if ckpt.version != CHECKPOINT_VERSION {
        return Err(ModelError::Format {
            path: path.display().to_string(),
            detail: format!("unsupported version {}", ckpt.version),
        });
    }
    let shape_err = |detail: String| ModelError::Format {
        path: path.display().to_string(),
        detail,
    };
    let embed = Array2::from_shape_vec((ckpt.vocab_size, ckpt.dim), ckpt.embed)
        .map_err(|e| shape_err(e.to_string()))?;
    let w_start = Array2::from_shape_vec((ckpt.dim, ckpt.dim), ckpt.w_start)
        .map_err(|e| shape_err(e.to_string()))?;
    let w_end = Array2::from_shape_vec((ckpt.dim, ckpt.dim), ckpt.w_end)
        .map_err(|e| shape_err(e.to_string()))?;
    Ok((
        ModelParams {
            embed,
            w_start,
            w_end,
            b_start: ckpt.b_start,
            b_end: ckpt.b_end,
        },
        ckpt.vocab_hash,
    ))
}
