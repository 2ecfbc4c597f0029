//! Training loop, hyperparameter tuning, and cross-perturbation evaluation.

use crate::corpus::{join_tokens, CorpusError, QAExample, TokenizeOptions, Vocab};
use crate::metrics::{
    build_matrix, gold_entropy, span_entropy, squad_em, squad_f1, CrossMatrix, EntropyMode,
    MetricsError, PredictionRecord, RunPoint, TrainSetup,
};
use crate::model::{
    backward, encode, forward, predict_span, ModelConfig, ModelError, ModelParams, TrainItem,
    MAX_ANSWER_LEN,
};
use crate::perturb::{apply, FunctionWordLexicon, PerturbationKind, TEST_KINDS};
use crate::rng::{stream_seed, DetRng, SeedPart};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::path::Path;

/// Global seed for evaluation-time perturbations. Fixed so every training
/// configuration and every run seed is scored on identical perturbed inputs.
pub const EVAL_SEED: u64 = 0xE7A1;

/// Vocabulary coverage below this fraction triggers a warning flag on
/// external evaluations.
pub const LOW_COVERAGE: f64 = 0.5;

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("{which} dataset is empty after tokenization")]
    EmptyDataset { which: String },
    #[error("ledger line {line}: {detail}")]
    Ledger { line: usize, detail: String },
    #[error("invalid config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    /// Initial learning rate; decays linearly to zero over all steps.
    pub lr_init: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub dim: usize,
    pub vocab_cap: usize,
    pub max_context_len: usize,
    /// Which entropy terms to train with (matrix row).
    pub setup: TrainSetup,
    /// Entropy weight per perturbation; missing kinds default to 1.0.
    pub lambdas: BTreeMap<PerturbationKind, f64>,
    /// Candidate weights for [`tune_lambda`].
    pub lambda_grid: Vec<f64>,
    pub seeds: Vec<u64>,
    pub entropy_mode: EntropyMode,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 2,
            batch_size: 32,
            lr_init: 1e-2,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            dim: 64,
            vocab_cap: 50_000,
            max_context_len: crate::corpus::DEFAULT_MAX_CONTEXT_LEN,
            setup: TrainSetup::None,
            lambdas: BTreeMap::new(),
            lambda_grid: vec![0.01, 0.1, 1.0, 5.0],
            seeds: vec![13, 42, 2022],
            entropy_mode: EntropyMode::Full,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if self.epochs == 0 || self.batch_size == 0 || self.dim == 0 {
            return Err(TrainError::InvalidConfig(
                "epochs, batch_size, and dim must be positive".into(),
            ));
        }
        if self.seeds.is_empty() {
            return Err(TrainError::InvalidConfig("seeds must be nonempty".into()));
        }
        if !(self.lr_init > 0.0 && self.lr_init.is_finite()) {
            return Err(TrainError::InvalidConfig("lr_init must be positive".into()));
        }
        Ok(())
    }

    pub fn tokenize_options(&self) -> TokenizeOptions {
        TokenizeOptions {
            max_context_len: self.max_context_len,
            ..TokenizeOptions::default()
        }
    }

    /// Entropy weights for the active kinds of this config's setup.
    pub fn effective_lambdas(&self) -> BTreeMap<PerturbationKind, f64> {
        self.setup
            .active_kinds()
            .into_iter()
            .map(|k| (k, self.lambdas.get(&k).copied().unwrap_or(1.0)))
            .collect()
    }
}

/// Adam with bias correction; one state tensor pair per parameter tensor.
pub struct AdamState {
    m: ModelParams,
    v: ModelParams,
    t: u64,
}

fn adam_slice(
    p: &mut [f64],
    g: &[f64],
    m: &mut [f64],
    v: &mut [f64],
    lr: f64,
    b1: f64,
    b2: f64,
    eps: f64,
    bc1: f64,
    bc2: f64,
) {
    for i in 0..p.len() {
        m[i] = b1 * m[i] + (1.0 - b1) * g[i];
        v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
        let m_hat = m[i] / bc1;
        let v_hat = v[i] / bc2;
        p[i] -= lr * m_hat / (v_hat.sqrt() + eps);
    }
}

impl AdamState {
    pub fn new(config: ModelConfig) -> Self {
        AdamState {
            m: ModelParams::zeros(config),
            v: ModelParams::zeros(config),
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut ModelParams, grads: &ModelParams, lr: f64, cfg: &TrainConfig) {
        self.t += 1;
        let (b1, b2, eps) = (cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps);
        let bc1 = 1.0 - b1.powi(self.t as i32);
        let bc2 = 1.0 - b2.powi(self.t as i32);
        for (p, (g, (m, v))) in [
            (&mut params.embed, (&grads.embed, (&mut self.m.embed, &mut self.v.embed))),
            (&mut params.w_start, (&grads.w_start, (&mut self.m.w_start, &mut self.v.w_start))),
            (&mut params.w_end, (&grads.w_end, (&mut self.m.w_end, &mut self.v.w_end))),
        ] {
            adam_slice(
                p.as_slice_mut().expect("standard layout"),
                g.as_slice().expect("standard layout"),
                m.as_slice_mut().expect("standard layout"),
                v.as_slice_mut().expect("standard layout"),
                lr, b1, b2, eps, bc1, bc2,
            );
        }
        for (p, (g, (m, v))) in [
            (&mut params.b_start, (grads.b_start, (&mut self.m.b_start, &mut self.v.b_start))),
            (&mut params.b_end, (grads.b_end, (&mut self.m.b_end, &mut self.v.b_end))),
        ] {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            *p -= lr * (*m / bc1) / ((*v / bc2).sqrt() + eps);
        }
    }
}

/// Linear decay from `lr_init` toward zero: lr_t = lr_init * (1 - t/T).
pub fn lr_at(lr_init: f64, step: usize, total_steps: usize) -> f64 {
    lr_init * (1.0 - step as f64 / total_steps as f64)
}

/// Mean dev-set metrics under one test perturbation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalStats {
    /// Examples scored (after skipping untokenizable ones).
    pub n: usize,
    pub entropy: f64,
    /// Mean per-example entropy ceiling, 2·ln(context length).
    pub ceiling: f64,
    pub f1: f64,
    pub em: f64,
}

/// Everything recorded about one training run; one JSONL ledger line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub setup: TrainSetup,
    pub seed: u64,
    pub lambdas: BTreeMap<PerturbationKind, f64>,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr_init: f64,
    pub dim: usize,
    pub vocab_size: usize,
    pub train_examples: usize,
    pub skipped_train: usize,
    /// Mean combined loss per epoch.
    pub epoch_losses: Vec<f64>,
    /// Probability-floor activations during training.
    pub clamp_count: usize,
    pub eval: BTreeMap<PerturbationKind, EvalStats>,
    /// Set when training aborted (non-finite loss); eval is then empty.
    pub failure: Option<String>,
}

pub struct TrainedRun {
    pub params: ModelParams,
    pub vocab: Vocab,
    pub result: RunResult,
}

/// Trains one model under `config.setup` with the given run seed, then
/// evaluates the dev set under all five test perturbations.
pub fn train(
    config: &TrainConfig,
    seed: u64,
    train_set: &[QAExample],
    dev_set: &[QAExample],
    lexicon: &FunctionWordLexicon,
) -> Result<TrainedRun, TrainError> {
    config.validate()?;
    let opts = config.tokenize_options();
    let mut tokenized = Vec::new();
    let mut skipped_train = 0usize;
    for ex in train_set {
        match crate::corpus::tokenize_example(ex, &opts) {
            Ok(t) => tokenized.push(t),
            Err(_) => skipped_train += 1,
        }
    }
    if tokenized.is_empty() {
        return Err(TrainError::EmptyDataset { which: "train".into() });
    }
    let vocab = Vocab::build(&tokenized, config.vocab_cap);
    let model_config = ModelConfig::new(config.dim, vocab.len());
    let mut params = ModelParams::init(model_config, seed);
    let lambdas = config.effective_lambdas();
    let kinds: Vec<PerturbationKind> = lambdas.keys().copied().collect();
    let clean: Vec<_> = tokenized.iter().map(|t| encode(t, &vocab)).collect();

    let n = tokenized.len();
    let batches_per_epoch = n.div_ceil(config.batch_size);
    let total_steps = config.epochs * batches_per_epoch;
    let mut adam = AdamState::new(model_config);
    let mut epoch_losses = Vec::with_capacity(config.epochs);
    let mut clamp_count = 0usize;
    let mut failure = None;
    let mut step = 0usize;

    'epochs: for epoch in 0..config.epochs {
        let mut order: Vec<usize> = (0..n).collect();
        DetRng::new(stream_seed(&[
            SeedPart::Int(seed),
            SeedPart::Str("order"),
            SeedPart::Int(epoch as u64),
        ]))
        .shuffle(&mut order);
        let mut loss_sum = 0.0;
        let mut loss_n = 0usize;
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<TrainItem> = chunk
                .iter()
                .map(|&i| {
                    let views = kinds
                        .iter()
                        .map(|&k| {
                            let s = stream_seed(&[
                                SeedPart::Int(seed),
                                SeedPart::Str(&tokenized[i].example_id),
                                SeedPart::Int(k.seed_tag()),
                                SeedPart::Int(epoch as u64),
                            ]);
                            let view = apply(k, &tokenized[i], s, lexicon);
                            (k, encode(&view.view(), &vocab))
                        })
                        .collect();
                    TrainItem { clean: clean[i].clone(), views }
                })
                .collect();
            let (grads, breakdown, clamps) = backward(&params, &batch, &lambdas);
            clamp_count += clamps;
            if !breakdown.total.is_finite() {
                failure = Some(format!(
                    "non-finite loss at epoch {epoch}, step {step}: ce={} total={}",
                    breakdown.ce, breakdown.total
                ));
                break 'epochs;
            }
            let lr = lr_at(config.lr_init, step, total_steps);
            adam.step(&mut params, &grads, lr, config);
            step += 1;
            loss_sum += breakdown.total * chunk.len() as f64;
            loss_n += chunk.len();
        }
        epoch_losses.push(loss_sum / loss_n as f64);
    }

    let mut eval = BTreeMap::new();
    if failure.is_none() {
        for kind in TEST_KINDS {
            let (stats, _) = eval_kind(
                &params,
                &vocab,
                dev_set,
                kind,
                &opts,
                lexicon,
                config.entropy_mode,
            )?;
            eval.insert(kind, stats);
        }
    }

    let result = RunResult {
        setup: config.setup,
        seed,
        lambdas,
        epochs: config.epochs,
        batch_size: config.batch_size,
        lr_init: config.lr_init,
        dim: config.dim,
        vocab_size: vocab.len(),
        train_examples: n,
        skipped_train,
        epoch_losses,
        clamp_count,
        eval,
        failure,
    };
    Ok(TrainedRun { params, vocab, result })
}

/// Scores `dev_set` under one test perturbation with the fixed evaluation
/// seed stream. Returns aggregate stats and per-example records.
pub fn eval_kind(
    params: &ModelParams,
    vocab: &Vocab,
    dev_set: &[QAExample],
    kind: PerturbationKind,
    opts: &TokenizeOptions,
    lexicon: &FunctionWordLexicon,
    mode: EntropyMode,
) -> Result<(EvalStats, Vec<PredictionRecord>), TrainError> {
    let mut records = Vec::new();
    let mut sums = (0.0, 0.0, 0.0, 0.0); // entropy, ceiling, f1, em
    for ex in dev_set {
        let tok = match crate::corpus::tokenize_lossy(ex, opts) {
            Ok(t) => t,
            Err(_) => continue,
        };
        let s = stream_seed(&[
            SeedPart::Int(EVAL_SEED),
            SeedPart::Str(&ex.id),
            SeedPart::Int(kind.seed_tag()),
            SeedPart::Int(0),
        ]);
        let view = apply(kind, &tok, s, lexicon).view();
        if view.context_tokens.is_empty() {
            continue;
        }
        let enc = encode(&view, vocab);
        let (dist, _) = forward(params, &enc);
        let entropy = match mode {
            EntropyMode::Full => span_entropy(&dist)?,
            EntropyMode::Gold => gold_entropy(&dist, enc.gold)?,
        };
        let (ps, pe, confidence) = predict_span(&dist, MAX_ANSWER_LEN);
        let pred_text = join_tokens(&view.context_tokens[ps..=pe]);
        let golds: Vec<String> = ex.answers.iter().map(|a| a.text.clone()).collect();
        let f1 = squad_f1(&pred_text, &golds);
        let em = squad_em(&pred_text, &golds);
        sums.0 += entropy;
        sums.1 += 2.0 * (view.context_tokens.len() as f64).ln();
        sums.2 += f1;
        sums.3 += em;
        records.push(PredictionRecord {
            example_id: ex.id.clone(),
            kind,
            pred_text,
            pred_span: (ps, pe),
            confidence,
            entropy,
            f1,
            em,
        });
    }
    if records.is_empty() {
        return Err(TrainError::EmptyDataset { which: format!("dev ({kind})") });
    }
    let n = records.len();
    let stats = EvalStats {
        n,
        entropy: sums.0 / n as f64,
        ceiling: sums.1 / n as f64,
        f1: sums.2 / n as f64,
        em: sums.3 / n as f64,
    };
    Ok((stats, records))
}

/// Outcome of the grid search for one perturbation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaChoice {
    pub kind: PerturbationKind,
    pub lambda: f64,
    /// Clean-dev F1 of the chosen run.
    pub clean_f1: f64,
    /// Dev entropy under the trained-on perturbation.
    pub seen_entropy: f64,
    /// 90% of the mean per-example entropy ceiling.
    pub entropy_bar: f64,
    /// False when no grid point reached the bar and the best-F1 fallback
    /// was used instead.
    pub met_bar: bool,
}

/// Grid-searches the entropy weight per perturbation: among weights whose
/// seen-perturbation dev entropy reaches 90% of the ceiling, picks the one
/// with the best clean F1 (ties favor the smaller weight). Falls back to
/// the best clean F1 overall when nothing reaches the bar.
pub fn tune_lambda(
    config: &TrainConfig,
    train_set: &[QAExample],
    dev_set: &[QAExample],
    lexicon: &FunctionWordLexicon,
) -> Result<BTreeMap<PerturbationKind, LambdaChoice>, TrainError> {
    config.validate()?;
    if config.lambda_grid.is_empty() {
        return Err(TrainError::InvalidConfig("lambda_grid must be nonempty".into()));
    }
    let tuning_seed = config.seeds[0];
    let mut choices = BTreeMap::new();
    for kind in crate::perturb::PERTURBATIONS {
        let mut candidates = Vec::new();
        for &lambda in &config.lambda_grid {
            let mut cfg = config.clone();
            cfg.setup = TrainSetup::Single(kind);
            cfg.lambdas = BTreeMap::from([(kind, lambda)]);
            let run = train(&cfg, tuning_seed, train_set, dev_set, lexicon)?;
            if run.result.failure.is_some() {
                continue;
            }
            let clean = &run.result.eval[&PerturbationKind::None];
            let seen = &run.result.eval[&kind];
            candidates.push(LambdaChoice {
                kind,
                lambda,
                clean_f1: clean.f1,
                seen_entropy: seen.entropy,
                entropy_bar: 0.9 * seen.ceiling,
                met_bar: seen.entropy >= 0.9 * seen.ceiling,
            });
        }
        if candidates.is_empty() {
            return Err(TrainError::InvalidConfig(format!(
                "every grid point failed to train for {kind}"
            )));
        }
        // grid is scanned in order and comparison is strict, so ties keep
        // the earlier (smaller) weight
        let pick = |pool: &[&LambdaChoice]| -> LambdaChoice {
            let mut best = pool[0].clone();
            for c in &pool[1..] {
                if c.clean_f1 > best.clean_f1 {
                    best = (*c).clone();
                }
            }
            best
        };
        let qualified: Vec<&LambdaChoice> = candidates.iter().filter(|c| c.met_bar).collect();
        let choice = if qualified.is_empty() {
            let all: Vec<&LambdaChoice> = candidates.iter().collect();
            let mut c = pick(&all);
            c.met_bar = false;
            c
        } else {
            pick(&qualified)
        };
        choices.insert(kind, choice);
    }
    Ok(choices)
}

/// Outcome of jointly re-tuning one shared weight for the ALL setup.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllLambdaChoice {
    /// Shared weight applied to all four perturbations.
    pub lambda: f64,
    pub clean_f1: f64,
    /// True when every perturbation column reached 90% of its ceiling.
    pub met_bar: bool,
}

/// Grid-searches one shared entropy weight for the ALL setup: qualified
/// weights push every perturbation column to 90% of its ceiling; among
/// those the best clean F1 wins (ties favor the smaller weight), with a
/// flagged best-F1 fallback when nothing qualifies.
pub fn tune_all_lambda(
    config: &TrainConfig,
    train_set: &[QAExample],
    dev_set: &[QAExample],
    lexicon: &FunctionWordLexicon,
) -> Result<AllLambdaChoice, TrainError> {
    config.validate()?;
    if config.lambda_grid.is_empty() {
        return Err(TrainError::InvalidConfig("lambda_grid must be nonempty".into()));
    }
    let tuning_seed = config.seeds[0];
    let mut candidates = Vec::new();
    for &lambda in &config.lambda_grid {
        let mut cfg = config.clone();
        cfg.setup = TrainSetup::All;
        cfg.lambdas = crate::perturb::PERTURBATIONS
            .iter()
            .map(|&k| (k, lambda))
            .collect();
        let run = train(&cfg, tuning_seed, train_set, dev_set, lexicon)?;
        if run.result.failure.is_some() {
            continue;
        }
        let met_bar = crate::perturb::PERTURBATIONS.iter().all(|k| {
            let s = &run.result.eval[k];
            s.entropy >= 0.9 * s.ceiling
        });
        candidates.push(AllLambdaChoice {
            lambda,
            clean_f1: run.result.eval[&PerturbationKind::None].f1,
            met_bar,
        });
    }
    if candidates.is_empty() {
        return Err(TrainError::InvalidConfig(
            "every grid point failed to train for the ALL setup".into(),
        ));
    }
    let pick = |pool: Vec<&AllLambdaChoice>| {
        let mut best = pool[0].clone();
        for c in &pool[1..] {
            if c.clean_f1 > best.clean_f1 {
                best = (*c).clone();
            }
        }
        best
    };
    let qualified: Vec<&AllLambdaChoice> = candidates.iter().filter(|c| c.met_bar).collect();
    Ok(if qualified.is_empty() {
        let mut c = pick(candidates.iter().collect());
        c.met_bar = false;
        c
    } else {
        pick(qualified)
    })
}

/// Trains all six matrix rows across all configured seeds and assembles the
/// (training config × test perturbation) cross matrix. `jobs > 1` runs the
/// independent (row, seed) tasks on that many threads; results are merged
/// in task order, so the output is identical regardless of `jobs`.
pub fn run_cross_eval(
    config: &TrainConfig,
    train_set: &[QAExample],
    dev_set: &[QAExample],
    lexicon: &FunctionWordLexicon,
    jobs: usize,
) -> Result<(CrossMatrix, Vec<RunResult>), TrainError> {
    config.validate()?;
    let mut tasks = Vec::new();
    for row in TrainSetup::matrix_rows() {
        for &seed in &config.seeds {
            let mut cfg = config.clone();
            cfg.setup = row;
            tasks.push((cfg, seed));
        }
    }
    let run_one = |(cfg, seed): &(TrainConfig, u64)| -> Result<RunResult, TrainError> {
        Ok(train(cfg, *seed, train_set, dev_set, lexicon)?.result)
    };
    let results: Vec<RunResult> = if jobs <= 1 {
        tasks.iter().map(|t| run_one(t)).collect::<Result<_, _>>()?
    } else {
        let mut slots: Vec<Option<Result<RunResult, TrainError>>> =
            (0..tasks.len()).map(|_| None).collect();
        std::thread::scope(|scope| {
            let mut handles = Vec::new();
            for worker in 0..jobs.min(tasks.len()) {
                let tasks = &tasks;
                handles.push(scope.spawn(move || {
                    tasks
                        .iter()
                        .enumerate()
                        .skip(worker)
                        .step_by(jobs)
                        .map(|(i, t)| (i, run_one(t)))
                        .collect::<Vec<_>>()
                }));
            }
            for h in handles {
                for (i, r) in h.join().expect("worker panicked") {
                    slots[i] = Some(r);
                }
            }
        });
        slots
            .into_iter()
            .map(|s| s.expect("every task assigned"))
            .collect::<Result<_, _>>()?
    };
    let points = run_points(&results);
    let matrix = build_matrix(&points)?;
    Ok((matrix, results))
}

/// Flattens run results into per-cell measurements.
pub fn run_points(results: &[RunResult]) -> Vec<RunPoint> {
    results
        .iter()
        .flat_map(|r| {
            r.eval.iter().map(move |(&test, stats)| RunPoint {
                train: r.setup,
                seed: r.seed,
                test,
                entropy: stats.entropy,
                f1: stats.f1,
            })
        })
        .collect()
}

/// Clean-input evaluation of a trained model on an external dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExternalEval {
    pub n: usize,
    pub skipped: usize,
    pub f1: f64,
    pub em: f64,
    pub entropy: f64,
    /// Fraction of tokens found in the training vocabulary.
    pub coverage: f64,
    /// True when coverage fell below [`LOW_COVERAGE`]; scores are then
    /// dominated by unknown-token embeddings.
    pub low_coverage: bool,
}

pub fn eval_external(
    params: &ModelParams,
    vocab: &Vocab,
    examples: &[QAExample],
    opts: &TokenizeOptions,
    mode: EntropyMode,
) -> Result<ExternalEval, TrainError> {
    if examples.is_empty() {
        return Err(TrainError::EmptyDataset { which: "external".into() });
    }
    let mut n = 0usize;
    let mut skipped = 0usize;
    let mut sums = (0.0, 0.0, 0.0); // f1, em, entropy
    let mut known = 0usize;
    let mut total_tokens = 0usize;
    for ex in examples {
        let tok = match crate::corpus::tokenize_lossy(ex, opts) {
            Ok(t) => t,
            Err(_) => {
                skipped += 1;
                continue;
            }
        };
        for t in tok.context_tokens.iter().chain(tok.question_tokens.iter()) {
            total_tokens += 1;
            if vocab.contains(&t.text) {
                known += 1;
            }
        }
        let enc = encode(&tok, vocab);
        let (dist, _) = forward(params, &enc);
        let entropy = match mode {
            EntropyMode::Full => span_entropy(&dist)?,
            EntropyMode::Gold => gold_entropy(&dist, enc.gold)?,
        };
        let (ps, pe, _) = predict_span(&dist, MAX_ANSWER_LEN);
        let pred_text = join_tokens(&tok.context_tokens[ps..=pe]);
        let golds: Vec<String> = ex.answers.iter().map(|a| a.text.clone()).collect();
        sums.0 += squad_f1(&pred_text, &golds);
        sums.1 += squad_em(&pred_text, &golds);
        sums.2 += entropy;
        n += 1;
    }
    if n == 0 {
        return Err(TrainError::EmptyDataset { which: "external (after tokenization)".into() });
    }
    let coverage = known as f64 / total_tokens as f64;
    Ok(ExternalEval {
        n,
        skipped,
        f1: sums.0 / n as f64,
        em: sums.1 / n as f64,
        entropy: sums.2 / n as f64,
        coverage,
        low_coverage: coverage < LOW_COVERAGE,
    })
}

/// Appends one run to a JSONL ledger, creating the file if needed.
pub fn append_run(path: &Path, result: &RunResult) -> Result<(), TrainError> {
    let mut file = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)?;
    let line = serde_json::to_string(result)
        .map_err(|e| TrainError::Ledger { line: 0, detail: e.to_string() })?;
    writeln!(file, "{line}")?;
    Ok(())
}

/// Reads every run back from a JSONL ledger.
pub fn read_ledger(path: &Path) -> Result<Vec<RunResult>, TrainError> {
    let file = std::fs::File::open(path)?;
    let mut results = Vec::new();
    for (i, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let r: RunResult = serde_json::from_str(&line).map_err(|e| TrainError::Ledger {
            line: i + 1,
            detail: e.to_string(),
        })?;
        results.push(r);
    }
    Ok(results)
}

#[cfg(test)]
mod tests;
