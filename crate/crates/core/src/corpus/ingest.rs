//! JSON ingestion for target-domain and auxiliary-domain QA collections.
//!
//! Target questions: `[{question_id, title, body, candidate_doc_ids, answer}]`
//! where `answer` is `{doc_id, start_char, end_char}` or `null`.
//! Auxiliary questions: `[{question_id, text, doc_id, answer}]` where `answer`
//! is `{start_char, end_char}` or `null`. Both reference a corpus file
//! `[{doc_id, text}]`. Character ranges are `[start_char, end_char)`.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{AnswerSpan, Dataset, Document, DomainTag, QAExample, Question, Split};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetFormat {
    TargetQaJson,
    AuxiliaryQaJson,
}

#[derive(Debug, Clone)]
pub struct IngestOptions {
    pub name: String,
    pub split: Split,
    pub domain_tag: DomainTag,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawDocument {
    pub doc_id: String,
    pub text: String,
}

fn read_array(path: &Path) -> Result<Vec<Value>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let value: Value = serde_json::from_slice(&bytes).map_err(|e| Error::json(path, e))?;
    match value {
        Value::Array(items) => Ok(items),
        _ => Err(Error::MalformedRecord {
            index: 0,
            field: "<top-level array>".into(),
        }),
    }
}

fn str_field<'a>(rec: &'a Value, index: usize, field: &str) -> Result<&'a str> {
    rec.get(field)
        .and_then(Value::as_str)
        .ok_or_else(|| Error::MalformedRecord {
            index,
            field: field.to_string(),
        })
}

fn usize_field(rec: &Value, index: usize, prefix: &str, field: &str) -> Result<usize> {
    rec.get(field)
        .and_then(Value::as_u64)
        .map(|v| v as usize)
        .ok_or_else(|| Error::MalformedRecord {
            index,
            field: format!("{prefix}{field}"),
        })
}

/// `Ok(None)` when the answer is `null`; a missing key is an error.
fn answer_field(rec: &Value, index: usize) -> Result<Option<&Value>> {
    match rec.get("answer") {
        None => Err(Error::MalformedRecord {
            index,
            field: "answer".into(),
        }),
        Some(Value::Null) => Ok(None),
        Some(v @ Value::Object(_)) => Ok(Some(v)),
        Some(_) => Err(Error::MalformedRecord {
            index,
            field: "answer".into(),
        }),
    }
}

pub fn load_corpus(path: &Path) -> Result<BTreeMap<String, Document>> {
    let mut docs = BTreeMap::new();
    for (index, rec) in read_array(path)?.iter().enumerate() {
        let doc_id = str_field(rec, index, "doc_id")?;
        let text = str_field(rec, index, "text")?;
        if docs.contains_key(doc_id) {
            return Err(Error::MalformedRecord {
                index,
                field: "doc_id".into(),
            });
        }
        docs.insert(doc_id.to_string(), Document::new(doc_id, text));
    }
    Ok(docs)
}

pub fn write_corpus(path: &Path, docs: &[RawDocument]) -> Result<()> {
    let json = serde_json::to_vec_pretty(docs).map_err(|e| Error::json(path, e))?;
    fs::write(path, json).map_err(|e| Error::io(path, e))
}

fn gold_span(
    docs: &BTreeMap<String, Document>,
    answer: &Value,
    doc_id: &str,
    index: usize,
    dangling: &mut BTreeSet<String>,
) -> Result<Option<AnswerSpan>> {
    let start = usize_field(answer, index, "answer.", "start_char")?;
    let end = usize_field(answer, index, "answer.", "end_char")?;
    let Some(doc) = docs.get(doc_id) else {
        dangling.insert(doc_id.to_string());
        return Ok(None);
    };
    let (s, e) = doc
        .char_span_to_token_span(start, end)
        .map_err(|_| Error::MalformedRecord {
            index,
            field: "answer.start_char/end_char".into(),
        })?;
    Ok(Some(AnswerSpan::new(doc_id, s, e)))
}

/// Loads a question file against its corpus file and checks every dataset
/// invariant. Dangling document references are collected across the whole
/// file and reported together.
pub fn ingest_dataset(
    questions: &Path,
    corpus: &Path,
    format: DatasetFormat,
    options: &IngestOptions,
) -> Result<Dataset> {
    let documents = load_corpus(corpus)?;
    let records = read_array(questions)?;
    let mut examples = Vec::with_capacity(records.len());
    let mut dangling = BTreeSet::new();

    for (index, rec) in records.iter().enumerate() {
        let question_id = str_field(rec, index, "question_id")?;
        let (question, candidates, gold) = match format {
            DatasetFormat::TargetQaJson => {
                let title = str_field(rec, index, "title")?;
                let body = str_field(rec, index, "body")?;
                let candidates = rec
                    .get("candidate_doc_ids")
                    .and_then(Value::as_array)
                    .and_then(|ids| {
                        ids.iter()
                            .map(|v| v.as_str().map(str::to_string))
                            .collect::<Option<Vec<_>>>()
                    })
                    .ok_or_else(|| Error::MalformedRecord {
                        index,
                        field: "candidate_doc_ids".into(),
                    })?;
                let gold = match answer_field(rec, index)? {
                    None => None,
                    Some(ans) => {
                        let doc_id = str_field(ans, index, "doc_id").map_err(|_| {
                            Error::MalformedRecord {
                                index,
                                field: "answer.doc_id".into(),
                            }
                        })?;
                        gold_span(&documents, ans, doc_id, index, &mut dangling)?
                    }
                };
                (Question::new(question_id, title, body), candidates, gold)
            }
            DatasetFormat::AuxiliaryQaJson => {
                let text = str_field(rec, index, "text")?;
                let doc_id = str_field(rec, index, "doc_id")?;
                let gold = match answer_field(rec, index)? {
                    None => None,
                    Some(ans) => gold_span(&documents, ans, doc_id, index, &mut dangling)?,
                };
                (
                    Question::new(question_id, text, ""),
                    vec![doc_id.to_string()],
                    gold,
                )
            }
        };
        if question.is_empty() {
            return Err(Error::MalformedRecord {
                index,
                field: match format {
                    DatasetFormat::TargetQaJson => "title".into(),
                    DatasetFormat::AuxiliaryQaJson => "text".into(),
                },
            });
        }
        for id in &candidates {
            if !documents.contains_key(id) {
                dangling.insert(id.clone());
            }
        }
        let answerable = gold.is_some();
        examples.push(QAExample {
            question,
            candidate_doc_ids: candidates,
            gold,
            answerable,
        });
    }
    if !dangling.is_empty() {
        return Err(Error::DanglingDocIds(dangling.into_iter().collect()));
    }

    let dataset = Dataset {
        name: options.name.clone(),
        split: options.split,
        examples,
        documents,
        domain_tag: options.domain_tag,
    };
    dataset.validate()?;
    Ok(dataset)
}
