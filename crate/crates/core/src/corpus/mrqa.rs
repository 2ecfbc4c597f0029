//! MRQA shared-task jsonl ingestion.
//!
//! One JSON object per line: a context record with a `qas` list whose
//! entries carry `detected_answers` with `char_spans` (inclusive codepoint
//! spans). An optional first line holding a `header` object is skipped.

use super::{char_slice, CorpusError, GoldAnswer, QAExample};
use serde::Deserialize;
use std::path::Path;

#[derive(Debug, Deserialize)]
struct MrqaRecord {
    context: String,
    qas: Vec<MrqaQa>,
}

#[derive(Debug, Deserialize)]
struct MrqaQa {
    #[serde(alias = "id")]
    qid: String,
    question: String,
    #[serde(default)]
    detected_answers: Vec<MrqaDetected>,
}

#[derive(Debug, Deserialize)]
struct MrqaDetected {
    #[serde(default)]
    char_spans: Vec<(usize, usize)>,
}

/// Loads an MRQA-format jsonl file. Same lenient/strict policy as
/// [`super::load_squad`].
pub fn load_mrqa(
    path: &Path,
    mode: super::LoadMode,
) -> Result<(Vec<QAExample>, Vec<String>), CorpusError> {
    let raw = std::fs::read_to_string(path).map_err(|e| CorpusError::io(path, e))?;
    let mut examples = Vec::new();
    let mut skipped = Vec::new();
    for (lineno, line) in raw.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let value: serde_json::Value =
            serde_json::from_str(line).map_err(|e| CorpusError::Parse {
                path: path.display().to_string(),
                line: lineno + 1,
                column: e.column(),
                detail: e.to_string(),
            })?;
        if value.get("header").is_some() {
            continue;
        }
        let record: MrqaRecord =
            serde_json::from_value(value).map_err(|e| CorpusError::Parse {
                path: path.display().to_string(),
                line: lineno + 1,
                column: 0,
                detail: format!("not an MRQA context record: {e}"),
            })?;
        for qa in record.qas {
            match to_example(&record.context, qa) {
                Ok(ex) => examples.push(ex),
                Err(e) => match mode {
                    super::LoadMode::Strict => return Err(e),
                    super::LoadMode::Lenient => {
                        if let CorpusError::Validation { id, .. } = &e {
                            skipped.push(id.clone());
                        }
                    }
                },
            }
        }
    }
    Ok((examples, skipped))
}

fn to_example(context: &str, qa: MrqaQa) -> Result<QAExample, CorpusError> {
    let mut answers = Vec::new();
    for det in &qa.detected_answers {
        for &(start, end) in &det.char_spans {
            let text = char_slice(context, start, end + 1).ok_or_else(|| {
                CorpusError::Validation {
                    id: qa.qid.clone(),
                    detail: format!("char span ({start}, {end}) out of context range"),
                }
            })?;
            answers.push(GoldAnswer {
                text,
                char_start: start,
            });
        }
    }
    if answers.is_empty() {
        return Err(CorpusError::Validation {
            id: qa.qid.clone(),
            detail: "no detected answer spans".into(),
        });
    }
    Ok(QAExample {
        id: qa.qid,
        title: None,
        context: context.to_string(),
        question: qa.question,
        answers,
    })
}
