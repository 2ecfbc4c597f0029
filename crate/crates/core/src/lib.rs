//! Core library for entropy-regularized extractive question answering.
//!
//! The pipeline: load a QA corpus ([`corpus`]), derive span-preserving
//! perturbed views of each example ([`perturb`]), train a span predictor
//! whose objective subtracts weighted answer-distribution entropy on those
//! views ([`model`], [`trainer`]), and report entropy/F1 across a grid of
//! training configurations and test perturbations ([`metrics`]).

pub mod corpus;
pub mod metrics;
pub mod model;
pub mod perturb;
pub mod rng;
pub mod selfcheck;
pub mod synth;
pub mod trainer;

pub use corpus::{
    GoldAnswer, QAExample, Token, TokenizedExample, Vocab, DEFAULT_MAX_CONTEXT_LEN,
};
pub use metrics::{
    CrossMatrix, EntropyMode, ReportFormat, SpanDistribution, TrainSetup,
};
pub use model::{ModelConfig, ModelParams, MAX_ANSWER_LEN};
pub use perturb::{FunctionWordLexicon, PerturbationKind, PerturbedExample};
pub use trainer::{RunResult, TrainConfig};
