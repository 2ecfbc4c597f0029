//! Span-distribution entropy, SQuAD F1/EM, confidence drop, and
//! cross-perturbation result matrices.
//!
//! Entropies are in nats throughout; the 11.9 ceiling for a length-384
//! context only holds under the natural logarithm.

use crate::perturb::PerturbationKind;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

/// Per-position start/end probability vectors over a context of length L.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpanDistribution {
    pub p_start: Vec<f64>,
    pub p_end: Vec<f64>,
}

pub const DISTRIBUTION_SUM_TOL: f64 = 1e-6;

#[derive(Debug, thiserror::Error)]
pub enum MetricsError {
    #[error("invalid {which} distribution: sums to {sum} (|sum-1| > 1e-6) or has negative mass")]
    InvalidDistribution { which: &'static str, sum: f64 },
    #[error("distribution length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("empty record list")]
    Empty,
    #[error("ragged seed coverage: {0}")]
    RaggedMatrix(String),
}

impl SpanDistribution {
    pub fn len(&self) -> usize {
        self.p_start.len()
    }

    pub fn is_empty(&self) -> bool {
        self.p_start.is_empty()
    }

    pub fn validate(&self) -> Result<(), MetricsError> {
        for (which, v) in [("start", &self.p_start), ("end", &self.p_end)] {
            let sum: f64 = v.iter().sum();
            if (sum - 1.0).abs() > DISTRIBUTION_SUM_TOL || v.iter().any(|&p| p < 0.0) {
                return Err(MetricsError::InvalidDistribution { which, sum });
            }
        }
        Ok(())
    }
}

/// How the per-example entropy is computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum EntropyMode {
    /// Full Shannon entropy over all start and end positions,
    /// H(start) + H(end). Its maximum for length L is 2·ln L.
    #[default]
    Full,
    /// Surprisal-weighted probability of the gold span only,
    /// -p(y) ln p(y) with p(y) = p_start[s]·p_end[e].
    Gold,
}

impl FromStr for EntropyMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "full" => Ok(EntropyMode::Full),
            "gold" => Ok(EntropyMode::Gold),
            other => Err(format!("unknown entropy mode: {other}")),
        }
    }
}

fn shannon(v: &[f64]) -> f64 {
    v.iter()
        .map(|&p| if p > 0.0 { -p * p.ln() } else { 0.0 })
        .sum()
}

/// H(p_start) + H(p_end) in nats, with 0·ln 0 = 0.
pub fn span_entropy(dist: &SpanDistribution) -> Result<f64, MetricsError> {
    dist.validate()?;
    Ok(shannon(&dist.p_start) + shannon(&dist.p_end))
}

/// Gold-span surprisal term -p(y) ln p(y).
pub fn gold_entropy(dist: &SpanDistribution, gold: (usize, usize)) -> Result<f64, MetricsError> {
    dist.validate()?;
    let p = dist.p_start[gold.0] * dist.p_end[gold.1];
    Ok(if p > 0.0 { -p * p.ln() } else { 0.0 })
}

/// Mean span entropy over a dataset.
pub fn dataset_entropy(dists: &[SpanDistribution]) -> Result<f64, MetricsError> {
    if dists.is_empty() {
        return Err(MetricsError::Empty);
    }
    let mut total = 0.0;
    for d in dists {
        total += span_entropy(d)?;
    }
    Ok(total / dists.len() as f64)
}

/// SQuAD answer normalization: lowercase, strip punctuation characters,
/// drop standalone articles, collapse whitespace.
pub fn normalize_answer(s: &str) -> String {
    let lowered: String = s
        .to_lowercase()
        .chars()
        .map(|c| if c.is_alphanumeric() || c.is_whitespace() { c } else { ' ' })
        .collect();
    lowered
        .split_whitespace()
        .filter(|w| !matches!(*w, "a" | "an" | "the"))
        .collect::<Vec<_>>()
        .join(" ")
}

fn token_bag(s: &str) -> BTreeMap<&str, usize> {
    let mut bag = BTreeMap::new();
    for w in s.split_whitespace() {
        *bag.entry(w).or_insert(0) += 1;
    }
    bag
}

fn f1_single(pred: &str, gold: &str) -> f64 {
    let pred_norm = normalize_answer(pred);
    let gold_norm = normalize_answer(gold);
    let pred_bag = token_bag(&pred_norm);
    let gold_bag = token_bag(&gold_norm);
    if pred_bag.is_empty() && gold_bag.is_empty() {
        return 1.0;
    }
    if pred_bag.is_empty() || gold_bag.is_empty() {
        return 0.0;
    }
    let overlap: usize = pred_bag
        .iter()
        .map(|(w, &c)| c.min(gold_bag.get(w).copied().unwrap_or(0)))
        .sum();
    if overlap == 0 {
        return 0.0;
    }
    let pred_len: usize = pred_bag.values().sum();
    let gold_len: usize = gold_bag.values().sum();
    let precision = overlap as f64 / pred_len as f64;
    let recall = overlap as f64 / gold_len as f64;
    2.0 * precision * recall / (precision + recall)
}

/// Max token-bag F1 over the gold answers.
pub fn squad_f1(pred: &str, golds: &[String]) -> f64 {
    assert!(!golds.is_empty(), "golds must be nonempty");
    golds
        .iter()
        .map(|g| f1_single(pred, g))
        .fold(0.0, f64::max)
}

/// 1.0 iff the normalized prediction equals any normalized gold.
pub fn squad_em(pred: &str, golds: &[String]) -> f64 {
    assert!(!golds.is_empty(), "golds must be nonempty");
    let p = normalize_answer(pred);
    if golds.iter().any(|g| normalize_answer(g) == p) {
        1.0
    } else {
        0.0
    }
}

/// One scored prediction, as written to evaluation reports.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub example_id: String,
    pub kind: PerturbationKind,
    pub pred_text: String,
    pub pred_span: (usize, usize),
    /// p(ŷ|x) = max_start × max_end over feasible spans.
    pub confidence: f64,
    pub entropy: f64,
    pub f1: f64,
    pub em: f64,
}

/// Drop in the probability assigned to the clean argmax span after the
/// input is perturbed: d = p_clean(ŷ) - p_perturbed(ŷ). Range [-1, 1].
pub fn confidence_drop(
    clean: &SpanDistribution,
    perturbed: &SpanDistribution,
) -> Result<f64, MetricsError> {
    clean.validate()?;
    perturbed.validate()?;
    if clean.len() != perturbed.len() {
        return Err(MetricsError::LengthMismatch {
            left: clean.len(),
            right: perturbed.len(),
        });
    }
    let (s, e, p_clean) = crate::model::predict_span(clean, crate::model::MAX_ANSWER_LEN);
    let p_perturbed = perturbed.p_start[s] * perturbed.p_end[e];
    Ok(p_clean - p_perturbed)
}

/// Training-configuration row labels of the cross matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum TrainSetup {
    /// Plain cross-entropy training.
    None,
    /// Entropy term for one perturbation.
    Single(PerturbationKind),
    /// Entropy terms for all four perturbations.
    All,
}

impl TrainSetup {
    /// The six rows of the cross matrix, in report order.
    pub fn matrix_rows() -> Vec<TrainSetup> {
        let mut rows = vec![TrainSetup::None];
        rows.extend(crate::perturb::PERTURBATIONS.iter().map(|&k| TrainSetup::Single(k)));
        rows.push(TrainSetup::All);
        rows
    }

    pub fn active_kinds(&self) -> Vec<PerturbationKind> {
        match self {
            TrainSetup::None => vec![],
            TrainSetup::Single(k) => vec![*k],
            TrainSetup::All => crate::perturb::PERTURBATIONS.to_vec(),
        }
    }
}

impl fmt::Display for TrainSetup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TrainSetup::None => f.write_str("none"),
            TrainSetup::Single(k) => f.write_str(k.name()),
            TrainSetup::All => f.write_str("all"),
        }
    }
}

impl FromStr for TrainSetup {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "none" => Ok(TrainSetup::None),
            "all" => Ok(TrainSetup::All),
            other => PerturbationKind::from_str(other).map(TrainSetup::Single),
        }
    }
}

// Serialized as the row label ("none", "del_func", ..., "all") so ledgers
// and config files stay human-editable.
impl Serialize for TrainSetup {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for TrainSetup {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// One (training config, seed, test perturbation) measurement.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunPoint {
    pub train: TrainSetup,
    pub seed: u64,
    pub test: PerturbationKind,
    pub entropy: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellStat {
    pub mean: f64,
    /// Population standard deviation over seeds (0 for a single run).
    pub std: f64,
}

fn cell_stat(values: &[f64]) -> CellStat {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    CellStat { mean, std: var.sqrt() }
}

/// The (training config × test perturbation) grid of entropy and F1
/// statistics over seeds.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CrossMatrix {
    pub rows: Vec<TrainSetup>,
    pub cols: Vec<PerturbationKind>,
    pub entropy: Vec<Vec<CellStat>>,
    pub f1: Vec<Vec<CellStat>>,
    pub seeds_per_cell: usize,
}

impl CrossMatrix {
    pub fn cell(&self, row: TrainSetup, col: PerturbationKind) -> Option<(CellStat, CellStat)> {
        let r = self.rows.iter().position(|&x| x == row)?;
        let c = self.cols.iter().position(|&x| x == col)?;
        Some((self.entropy[r][c], self.f1[r][c]))
    }
}

/// Aggregates run points into a matrix. Every (row, col) cell present in
/// the input must cover the same number of seeds.
pub fn build_matrix(runs: &[RunPoint]) -> Result<CrossMatrix, MetricsError> {
    if runs.is_empty() {
        return Err(MetricsError::Empty);
    }
    let mut rows: Vec<TrainSetup> = TrainSetup::matrix_rows()
        .into_iter()
        .filter(|r| runs.iter().any(|p| p.train == *r))
        .collect();
    if rows.is_empty() {
        rows = vec![runs[0].train];
    }
    let cols: Vec<PerturbationKind> = crate::perturb::TEST_KINDS
        .iter()
        .copied()
        .filter(|c| runs.iter().any(|p| p.test == *c))
        .collect();
    let mut entropy = Vec::new();
    let mut f1 = Vec::new();
    let mut seed_count: Option<usize> = None;
    let mut missing = Vec::new();
    for &row in &rows {
        let mut e_row = Vec::new();
        let mut f_row = Vec::new();
        for &col in &cols {
            let cell: Vec<&RunPoint> = runs
                .iter()
                .filter(|p| p.train == row && p.test == col)
                .collect();
            if cell.is_empty() {
                missing.push(format!("({row}, {col})"));
                e_row.push(CellStat { mean: f64::NAN, std: f64::NAN });
                f_row.push(CellStat { mean: f64::NAN, std: f64::NAN });
                continue;
            }
            match seed_count {
                None => seed_count = Some(cell.len()),
                Some(n) if n != cell.len() => {
                    return Err(MetricsError::RaggedMatrix(format!(
                        "cell ({row}, {col}) has {} seeds, expected {n}",
                        cell.len()
                    )))
                }
                _ => {}
            }
            let e_vals: Vec<f64> = cell.iter().map(|p| p.entropy).collect();
            let f_vals: Vec<f64> = cell.iter().map(|p| p.f1).collect();
            e_row.push(cell_stat(&e_vals));
            f_row.push(cell_stat(&f_vals));
        }
        entropy.push(e_row);
        f1.push(f_row);
    }
    if !missing.is_empty() {
        return Err(MetricsError::RaggedMatrix(format!(
            "missing cells: {}",
            missing.join(", ")
        )));
    }
    Ok(CrossMatrix {
        rows,
        cols,
        entropy,
        f1,
        seeds_per_cell: seed_count.unwrap_or(0),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Text,
    Tsv,
    Markdown,
}

impl FromStr for ReportFormat {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "text" => Ok(ReportFormat::Text),
            "tsv" => Ok(ReportFormat::Tsv),
            "md" | "markdown" => Ok(ReportFormat::Markdown),
            other => Err(format!("unknown report format: {other}")),
        }
    }
}

impl CrossMatrix {
    /// Renders one metric grid ("entropy" or "f1") in the requested format.
    /// Cells show mean ± population std over seeds.
    pub fn render(&self, metric: &str, format: ReportFormat) -> String {
        let grid = match metric {
            "entropy" => &self.entropy,
            "f1" => &self.f1,
            other => panic!("unknown metric {other}"),
        };
        let header: Vec<String> = std::iter::once("train\u{2193} / test\u{2192}".to_string())
            .chain(self.cols.iter().map(|c| c.to_string()))
            .collect();
        let mut body: Vec<Vec<String>> = Vec::new();
        for (r, row) in self.rows.iter().enumerate() {
            let mut line = vec![row.to_string()];
            for cell in &grid[r] {
                line.push(format!("{:.2}\u{00b1}{:.2}", cell.mean, cell.std));
            }
            body.push(line);
        }
        match format {
            ReportFormat::Tsv => {
                let mut out = header.join("\t");
                out.push('\n');
                for line in body {
                    out.push_str(&line.join("\t"));
                    out.push('\n');
                }
                out
            }
            ReportFormat::Markdown => {
                let mut out = format!("| {} |\n", header.join(" | "));
                out.push_str(&format!("|{}\n", " --- |".repeat(header.len())));
                for line in body {
                    out.push_str(&format!("| {} |\n", line.join(" | ")));
                }
                out
            }
            ReportFormat::Text => {
                let mut widths = vec![0usize; header.len()];
                for line in std::iter::once(&header).chain(body.iter()) {
                    for (i, cell) in line.iter().enumerate() {
                        widths[i] = widths[i].max(cell.chars().count());
                    }
                }
                let fmt_line = |line: &[String]| {
                    line.iter()
                        .enumerate()
                        .map(|(i, c)| format!("{:w$}", c, w = widths[i]))
                        .collect::<Vec<_>>()
                        .join("  ")
                };
                let mut out = fmt_line(&header);
                out.push('\n');
                for line in &body {
                    out.push_str(&fmt_line(line));
                    out.push('\n');
                }
                out
            }
        }
    }
}
