//! Inference: candidate documents to blocks, block scores, ranked answers,
//! prediction rows and evaluation.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::chunking::{make_blocks, project_span_to_document, BlockLabel, ChunkConfig};
use crate::corpus::{Dataset, QAExample, Vocabulary};
use crate::error::{Error, Result};
use crate::heads::{normalize_across_blocks, predict_span, SpanConstraints};
use crate::metrics::{self, EvalReport, GoldAnswer};
use crate::model::JointModel;
use crate::ranking::{
    rank_answers, PredictionRecord, PredictionRow, QuestionRanking, RankOptions, RankingStrategy,
};
use crate::retrieval::InvertedIndex;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InferenceConfig {
    pub chunk: ChunkConfig,
    pub span: SpanConstraints,
    /// Normalize reader scores over all blocks of a document instead of
    /// per block.
    pub global_norm: bool,
    /// Pool size when candidates come from the fallback index.
    pub pool_k: usize,
}

impl Default for InferenceConfig {
    fn default() -> Self {
        Self {
            chunk: ChunkConfig::default(),
            span: SpanConstraints::default(),
            global_norm: false,
            pool_k: 20,
        }
    }
}

/// Block records of one question, independent of the ranking strategy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredQuestion {
    pub question_id: String,
    pub records: Vec<PredictionRecord>,
}

fn candidates(
    example: &QAExample,
    fallback: Option<&InvertedIndex>,
    k: usize,
) -> Result<Vec<String>> {
    if !example.candidate_doc_ids.is_empty() {
        return Ok(example.candidate_doc_ids.clone());
    }
    match fallback {
        Some(index) => Ok(index
            .retrieve_question(&example.question, k, false)
            .into_iter()
            .map(|(d, _)| d)
            .collect()),
        None => Err(Error::MissingCandidates(
            example.question.question_id.clone(),
        )),
    }
}

/// Scores every block of every candidate document of one question.
pub fn score_question(
    model: &JointModel,
    example: &QAExample,
    dataset: &Dataset,
    vocab: &Vocabulary,
    config: &InferenceConfig,
    fallback: Option<&InvertedIndex>,
) -> Result<ScoredQuestion> {
    let qid = &example.question.question_id;
    let mut records = Vec::new();
    for doc_id in candidates(example, fallback, config.pool_k)? {
        let doc = dataset
            .document(&doc_id)
            .ok_or_else(|| Error::DanglingDocIds(vec![doc_id.clone()]))?;
        let blocks = make_blocks(&example.question, doc, vocab, &config.chunk)?;
        let mut forwards = Vec::with_capacity(blocks.len());
        for block in &blocks {
            forwards.push(model.forward(block, false)?);
        }
        if config.global_norm {
            let mut readers: Vec<_> = forwards.iter().map(|f| f.reader.clone()).collect();
            normalize_across_blocks(&mut readers);
            for (f, r) in forwards.iter_mut().zip(readers) {
                f.reader = r;
            }
        }
        for (block, fwd) in blocks.iter().zip(&forwards) {
            let (s, e) = predict_span(&fwd.reader, &config.span);
            let span = project_span_to_document(block, &BlockLabel::Span { start: s, end: e })?;
            records.push(PredictionRecord {
                question_id: qid.clone(),
                doc_id: doc_id.clone(),
                block_index: block.block_index,
                span,
                p_s: fwd.reader.p_start[s],
                p_e: fwd.reader.p_end[e],
                p_s0: fwd.reader.p_start[0],
                p_e0: fwd.reader.p_end[0],
                p_dr: fwd.matcher.p_dr,
                score: 0.0,
                strategy: Default::default(),
            });
        }
    }
    Ok(ScoredQuestion {
        question_id: qid.clone(),
        records,
    })
}

pub fn score_dataset(
    model: &JointModel,
    dataset: &Dataset,
    vocab: &Vocabulary,
    config: &InferenceConfig,
    fallback: Option<&InvertedIndex>,
) -> Result<Vec<ScoredQuestion>> {
    dataset
        .examples
        .iter()
        .map(|ex| score_question(model, ex, dataset, vocab, config, fallback))
        .collect()
}

pub fn rank_dataset(
    scored: &[ScoredQuestion],
    strategy: &RankingStrategy,
    options: &RankOptions,
) -> Vec<QuestionRanking> {
    scored
        .iter()
        .map(|q| rank_answers(&q.question_id, &q.records, strategy, options))
        .collect()
}

/// Prediction-file rows with character offsets into the source documents.
pub fn prediction_rows(
    rankings: &[QuestionRanking],
    dataset: &Dataset,
) -> Result<Vec<PredictionRow>> {
    let mut rows = Vec::new();
    for ranking in rankings {
        for answer in &ranking.answers {
            let span = answer.record.as_ref().and_then(|r| r.span.as_ref());
            let row = match span {
                None => PredictionRow {
                    question_id: ranking.question_id.clone(),
                    rank: answer.rank,
                    doc_id: None,
                    start_char: None,
                    end_char: None,
                    score: answer.score,
                    no_answer: true,
                },
                Some(span) => {
                    let doc = dataset
                        .document(&span.doc_id)
                        .ok_or_else(|| Error::DanglingDocIds(vec![span.doc_id.clone()]))?;
                    let (s, e) = doc.token_span_to_char_span(span.start, span.end)?;
                    PredictionRow {
                        question_id: ranking.question_id.clone(),
                        rank: answer.rank,
                        doc_id: Some(span.doc_id.clone()),
                        start_char: Some(s),
                        end_char: Some(e),
                        score: answer.score,
                        no_answer: false,
                    }
                }
            };
            rows.push(row);
        }
    }
    Ok(rows)
}

pub fn document_rankings(rankings: &[QuestionRanking]) -> BTreeMap<String, Vec<String>> {
    rankings
        .iter()
        .map(|r| {
            (
                r.question_id.clone(),
                r.documents.iter().map(|d| d.0.clone()).collect(),
            )
        })
        .collect()
}

/// Full evaluation of ranked predictions against a dataset's gold answers.
pub fn evaluate_rankings(
    rankings: &[QuestionRanking],
    dataset: &Dataset,
    ks: &[usize],
) -> Result<EvalReport> {
    let rows = prediction_rows(rankings, dataset)?;
    let answers = metrics::project_predictions(&rows, dataset)?;
    metrics::evaluate(
        &answers,
        &document_rankings(rankings),
        &GoldAnswer::from_dataset(dataset),
        ks,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{AnswerSpan, Document, DomainTag, Question, Split};
    use crate::encoder::EncoderConfig;
    use crate::heads::Pooling;
    use crate::model::ModelConfig;

    fn dataset(pools: bool) -> Dataset {
        let mut documents = BTreeMap::new();
        for (id, text) in [
            ("a", "red fish swims . the key means blue sky ."),
            ("b", "green grass grows tall"),
            ("c", "key"),
        ] {
            documents.insert(id.to_string(), Document::new(id, text));
        }
        let examples = vec![
            QAExample {
                question: Question::new("q1", "key", "what"),
                candidate_doc_ids: if pools {
                    vec!["a".into(), "b".into()]
                } else {
                    vec![]
                },
                gold: Some(AnswerSpan::new("a", 7, 9)),
                answerable: true,
            },
            QAExample {
                question: Question::new("q2", "grass", ""),
                candidate_doc_ids: if pools {
                    vec!["b".into(), "c".into()]
                } else {
                    vec![]
                },
                gold: None,
                answerable: false,
            },
        ];
        Dataset {
            name: "p".into(),
            split: Split::Test,
            examples,
            documents,
            domain_tag: DomainTag::Target,
        }
    }

    fn model(vocab: &Vocabulary) -> JointModel {
        let cfg = ModelConfig {
            encoder: EncoderConfig {
                vocab_size: vocab.len(),
                d: 8,
                layers: 1,
                heads: 2,
                max_len: 16,
                ffn_dim: 16,
                seed: 1,
            },
            pooling: Pooling::Cls,
        };
        JointModel::new(cfg, 2).unwrap()
    }

    fn config() -> InferenceConfig {
        InferenceConfig {
            chunk: ChunkConfig {
                max_len: 16,
                stride: 3,
            },
            ..Default::default()
        }
    }

    #[test]
    fn end_to_end_rows_and_report() {
        let ds = dataset(true);
        let vocab = Vocabulary::build(ds.token_stream());
        let m = model(&vocab);
        let scored = score_dataset(&m, &ds, &vocab, &config(), None).unwrap();
        assert!(scored[0].records.len() >= ds.examples[0].candidate_doc_ids.len());
        let opts = RankOptions {
            k: 5,
            ..Default::default()
        };
        let rankings = rank_dataset(&scored, &RankingStrategy::default(), &opts);
        let rows = prediction_rows(&rankings, &ds).unwrap();
        for r in &rows {
            assert_eq!(r.no_answer, r.doc_id.is_none());
            if let (Some(d), Some(s), Some(e)) = (&r.doc_id, r.start_char, r.end_char) {
                assert!(s < e && e <= ds.documents[d].text.len());
            }
        }
        let report = evaluate_rankings(&rankings, &ds, &[1, 5]).unwrap();
        assert_eq!(report.questions, 2);
        assert_eq!(report.answerable, 1);
        assert!(report.per_question[0].doc_rank.is_some());
    }

    #[test]
    fn high_threshold_abstains_everywhere() {
        let ds = dataset(true);
        let vocab = Vocabulary::build(ds.token_stream());
        let scored = score_dataset(&model(&vocab), &ds, &vocab, &config(), None).unwrap();
        let opts = RankOptions {
            k: 1,
            threshold: f64::INFINITY,
        };
        let rows = prediction_rows(
            &rank_dataset(&scored, &RankingStrategy::default(), &opts),
            &ds,
        )
        .unwrap();
        assert!(rows.iter().all(|r| r.no_answer));
    }

    #[test]
    fn empty_pools_need_an_index() {
        let ds = dataset(false);
        let vocab = Vocabulary::build(ds.token_stream());
        let m = model(&vocab);
        assert!(matches!(
            score_dataset(&m, &ds, &vocab, &config(), None),
            Err(Error::MissingCandidates(_))
        ));
        let index = InvertedIndex::build(ds.documents.values()).unwrap();
        let scored = score_dataset(&m, &ds, &vocab, &config(), Some(&index)).unwrap();
        assert!(scored[1].records.iter().any(|r| r.doc_id == "b"));
    }

    #[test]
    fn global_norm_keeps_one_distribution_per_document() {
        let ds = dataset(true);
        let vocab = Vocabulary::build(ds.token_stream());
        let cfg = InferenceConfig {
            global_norm: true,
            ..config()
        };
        let scored = score_dataset(&model(&vocab), &ds, &vocab, &cfg, None).unwrap();
        assert!(scored[0]
            .records
            .iter()
            .all(|r| r.p_s <= 1.0 && r.p_s0 <= 1.0));
    }
}
