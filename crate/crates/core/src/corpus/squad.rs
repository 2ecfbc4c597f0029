//! SQuAD v1.1 JSON reading and writing.

use super::{CorpusError, GoldAnswer, QAExample};
use serde::{Deserialize, Serialize};
use std::collections::HashSet;
use std::path::Path;

#[derive(Debug, Serialize, Deserialize)]
struct SquadFile {
    #[serde(skip_serializing_if = "Option::is_none")]
    version: Option<String>,
    data: Vec<SquadArticle>,
}

#[derive(Debug, Serialize, Deserialize)]
struct SquadArticle {
    #[serde(skip_serializing_if = "Option::is_none")]
    title: Option<String>,
    paragraphs: Vec<SquadParagraph>,
}

#[derive(Debug, Serialize, Deserialize)]
struct SquadParagraph {
    context: String,
    qas: Vec<SquadQa>,
}

#[derive(Debug, Serialize, Deserialize)]
struct SquadQa {
    id: String,
    question: String,
    answers: Vec<SquadAnswer>,
}

#[derive(Debug, Serialize, Deserialize)]
struct SquadAnswer {
    text: String,
    answer_start: usize,
}

/// Validation failure handling for ingestion.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LoadMode {
    /// Skip invalid examples, reporting their ids.
    Lenient,
    /// First invalid example aborts the load.
    Strict,
}

/// Loads a SQuAD v1.1 JSON file. Returns the examples plus the ids of
/// examples skipped for validation failures (always empty in strict mode).
pub fn load_squad(
    path: &Path,
    mode: LoadMode,
) -> Result<(Vec<QAExample>, Vec<String>), CorpusError> {
    let raw = std::fs::read_to_string(path).map_err(|e| CorpusError::io(path, e))?;
    let file: SquadFile = serde_json::from_str(&raw).map_err(|e| CorpusError::Parse {
        path: path.display().to_string(),
        line: e.line(),
        column: e.column(),
        detail: e.to_string(),
    })?;
    let mut examples = Vec::new();
    let mut skipped = Vec::new();
    let mut seen_ids: HashSet<String> = HashSet::new();
    for article in file.data {
        for para in article.paragraphs {
            for qa in para.qas {
                let example = QAExample {
                    id: qa.id,
                    title: article.title.clone(),
                    context: para.context.clone(),
                    question: qa.question,
                    answers: qa
                        .answers
                        .into_iter()
                        .map(|a| GoldAnswer {
                            text: a.text,
                            char_start: a.answer_start,
                        })
                        .collect(),
                };
                match validate(&example, &mut seen_ids) {
                    Ok(()) => examples.push(example),
                    Err(e) => match mode {
                        LoadMode::Strict => return Err(e),
                        LoadMode::Lenient => skipped.push(example.id),
                    },
                }
            }
        }
    }
    Ok((examples, skipped))
}

fn validate(example: &QAExample, seen_ids: &mut HashSet<String>) -> Result<(), CorpusError> {
    if example.id.is_empty() {
        return Err(CorpusError::Validation {
            id: "<empty>".into(),
            detail: "empty example id".into(),
        });
    }
    if !seen_ids.insert(example.id.clone()) {
        return Err(CorpusError::Validation {
            id: example.id.clone(),
            detail: "duplicate example id".into(),
        });
    }
    if example.answers.is_empty() {
        return Err(CorpusError::Validation {
            id: example.id.clone(),
            detail: "example has no answers".into(),
        });
    }
    for ans in &example.answers {
        if !ans.matches(&example.context) {
            return Err(CorpusError::Validation {
                id: example.id.clone(),
                detail: format!(
                    "answer text {:?} does not occur at answer_start {}",
                    ans.text, ans.char_start
                ),
            });
        }
    }
    Ok(())
}

/// Serializes examples back to SQuAD v1.1 JSON. Consecutive examples with
/// the same title group into one article; each example keeps its own
/// paragraph (contexts may diverge after perturbation).
pub fn save_squad(path: &Path, examples: &[QAExample]) -> Result<(), CorpusError> {
    let mut articles: Vec<SquadArticle> = Vec::new();
    for ex in examples {
        let para = SquadParagraph {
            context: ex.context.clone(),
            qas: vec![SquadQa {
                id: ex.id.clone(),
                question: ex.question.clone(),
                answers: ex
                    .answers
                    .iter()
                    .map(|a| SquadAnswer {
                        text: a.text.clone(),
                        answer_start: a.char_start,
                    })
                    .collect(),
            }],
        };
        match articles.last_mut() {
            Some(last) if last.title == ex.title => last.paragraphs.push(para),
            _ => articles.push(SquadArticle {
                title: ex.title.clone(),
                paragraphs: vec![para],
            }),
        }
    }
    let file = SquadFile {
        version: Some("1.1".into()),
        data: articles,
    };
    let json = serde_json::to_string_pretty(&file).expect("squad serialization");
    std::fs::write(path, json).map_err(|e| CorpusError::io(path, e))
}
