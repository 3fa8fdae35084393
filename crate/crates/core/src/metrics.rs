//! Answer and document evaluation: token-overlap F1 (Ma-F1, F1@K, HA_F1@K),
//! MRR, recall at K, and the span error taxonomy.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::corpus::{AnswerSpan, Dataset};
use crate::error::{Error, Result};
use crate::ranking::PredictionRow;

/// Gold answer of one question; `answer` is `None` when unanswerable.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoldAnswer {
    pub question_id: String,
    pub answer: Option<AnswerSpan>,
}

impl GoldAnswer {
    pub fn is_answerable(&self) -> bool {
        self.answer.as_ref().is_some_and(|a| !a.no_answer)
    }

    pub fn from_dataset(dataset: &Dataset) -> Vec<GoldAnswer> {
        dataset
            .examples
            .iter()
            .map(|ex| GoldAnswer {
                question_id: ex.question.question_id.clone(),
                answer: if ex.answerable { ex.gold.clone() } else { None },
            })
            .collect()
    }
}

fn real_span(span: Option<&AnswerSpan>) -> Option<&AnswerSpan> {
    span.filter(|s| !s.no_answer)
}

/// Token-overlap F1 between two inclusive spans. `None` (or the sentinel)
/// means abstention: both abstaining scores 1, exactly one scores 0.
pub fn span_f1(pred: Option<&AnswerSpan>, gold: Option<&AnswerSpan>) -> f64 {
    match (real_span(pred), real_span(gold)) {
        (None, None) => 1.0,
        (Some(p), Some(g)) => {
            if p.doc_id != g.doc_id {
                return 0.0;
            }
            let lo = p.start.max(g.start);
            let hi = p.end.min(g.end);
            if hi < lo {
                return 0.0;
            }
            let overlap = (hi - lo + 1) as f64;
            let precision = overlap / p.token_len() as f64;
            let recall = overlap / g.token_len() as f64;
            2.0 * precision * recall / (precision + recall)
        }
        _ => 0.0,
    }
}

/// Ranked answers of one question in gold token coordinates; `None` entries
/// are abstentions.
pub type AnswerList = Vec<Option<AnswerSpan>>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionF1 {
    pub question_id: String,
    pub answerable: bool,
    pub f1_top1: f64,
    /// Best F1 among the top K answers, per K.
    pub best_at: BTreeMap<usize, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct F1Summary {
    pub ma_f1: f64,
    pub f1_at: BTreeMap<usize, f64>,
    pub ha_f1_at: BTreeMap<usize, f64>,
    pub per_question: Vec<QuestionF1>,
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// Ma-F1 (macro top-1 F1 over all questions), F1@K (macro best-of-K over all
/// questions) and HA_F1@K (the same over answerable questions only).
pub fn ma_f1(
    predictions: &BTreeMap<String, AnswerList>,
    gold: &[GoldAnswer],
    ks: &[usize],
) -> Result<F1Summary> {
    let mut per_question = Vec::with_capacity(gold.len());
    for g in gold {
        let answers = predictions
            .get(&g.question_id)
            .filter(|a| !a.is_empty())
            .ok_or_else(|| Error::MissingPrediction(g.question_id.clone()))?;
        let f1s: Vec<f64> = answers
            .iter()
            .map(|a| span_f1(a.as_ref(), g.answer.as_ref()))
            .collect();
        let best_at = ks
            .iter()
            .map(|&k| (k, f1s.iter().take(k.max(1)).copied().fold(0.0, f64::max)))
            .collect();
        per_question.push(QuestionF1 {
            question_id: g.question_id.clone(),
            answerable: g.is_answerable(),
            f1_top1: f1s[0],
            best_at,
        });
    }
    let f1_at = ks
        .iter()
        .map(|&k| (k, mean(per_question.iter().map(|q| q.best_at[&k]))))
        .collect();
    let ha_f1_at = ks
        .iter()
        .map(|&k| {
            (
                k,
                mean(
                    per_question
                        .iter()
                        .filter(|q| q.answerable)
                        .map(|q| q.best_at[&k]),
                ),
            )
        })
        .collect();
    Ok(F1Summary {
        ma_f1: mean(per_question.iter().map(|q| q.f1_top1)),
        f1_at,
        ha_f1_at,
        per_question,
    })
}

/// 1-based rank of the gold document in each answerable question's ranking.
pub fn gold_doc_ranks(
    doc_rankings: &BTreeMap<String, Vec<String>>,
    gold: &[GoldAnswer],
) -> BTreeMap<String, Option<usize>> {
    gold.iter()
        .filter(|g| g.is_answerable())
        .map(|g| {
            let doc = &g.answer.as_ref().expect("answerable").doc_id;
            let rank = doc_rankings
                .get(&g.question_id)
                .and_then(|r| r.iter().position(|d| d == doc))
                .map(|p| p + 1);
            (g.question_id.clone(), rank)
        })
        .collect()
}

/// MRR and recall at each K over answerable questions. A gold document
/// missing from the ranking contributes zero everywhere.
pub fn mrr_recall(
    doc_rankings: &BTreeMap<String, Vec<String>>,
    gold: &[GoldAnswer],
    ks: &[usize],
) -> (f64, BTreeMap<usize, f64>) {
    let ranks = gold_doc_ranks(doc_rankings, gold);
    let mrr = mean(ranks.values().map(|r| r.map_or(0.0, |r| 1.0 / r as f64)));
    let recall = ks
        .iter()
        .map(|&k| {
            (
                k,
                mean(
                    ranks
                        .values()
                        .map(|r| if r.is_some_and(|r| r <= k) { 1.0 } else { 0.0 }),
                ),
            )
        })
        .collect();
    (mrr, recall)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorClass {
    /// Unanswerable question on which the system abstained.
    Correct,
    WrongDoc,
    SpanMismatch,
    SpanTooSmall,
    SpanTooLarge,
    CorrectSpan,
}

impl ErrorClass {
    pub fn as_str(&self) -> &'static str {
        match self {
            ErrorClass::Correct => "correct",
            ErrorClass::WrongDoc => "wrong_doc",
            ErrorClass::SpanMismatch => "span_mismatch",
            ErrorClass::SpanTooSmall => "span_too_small",
            ErrorClass::SpanTooLarge => "span_too_large",
            ErrorClass::CorrectSpan => "correct_span",
        }
    }
}

impl fmt::Display for ErrorClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Classifies a top-1 prediction. Strictly inside the gold span is too
/// small, strictly around it is too large; any shared boundary that is not
/// an exact match is a mismatch. Unanswerable questions are `Correct` when
/// the system abstains and `WrongDoc` otherwise.
pub fn classify(top1: Option<&AnswerSpan>, gold: Option<&AnswerSpan>) -> ErrorClass {
    let (pred, gold) = match (real_span(top1), real_span(gold)) {
        (None, None) => return ErrorClass::Correct,
        (Some(_), None) | (None, Some(_)) => return ErrorClass::WrongDoc,
        (Some(p), Some(g)) => (p, g),
    };
    if pred.doc_id != gold.doc_id {
        ErrorClass::WrongDoc
    } else if pred.start == gold.start && pred.end == gold.end {
        ErrorClass::CorrectSpan
    } else if pred.start > gold.start && pred.end < gold.end {
        ErrorClass::SpanTooSmall
    } else if pred.start < gold.start && pred.end > gold.end {
        ErrorClass::SpanTooLarge
    } else {
        ErrorClass::SpanMismatch
    }
}

/// Histogram of error classes over answerable questions.
pub fn error_taxonomy(per_question: &[QuestionReport]) -> BTreeMap<ErrorClass, usize> {
    let mut hist = BTreeMap::new();
    for q in per_question.iter().filter(|q| q.answerable) {
        *hist.entry(q.error_class).or_insert(0) += 1;
    }
    hist
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionReport {
    pub question_id: String,
    pub answerable: bool,
    pub f1_top1: f64,
    pub best_f1_at_k: BTreeMap<usize, f64>,
    pub doc_rank: Option<usize>,
    pub error_class: ErrorClass,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub questions: usize,
    pub answerable: usize,
    pub ma_f1: f64,
    pub f1_at: BTreeMap<usize, f64>,
    pub ha_f1_at: BTreeMap<usize, f64>,
    pub mrr: f64,
    pub recall_at: BTreeMap<usize, f64>,
    pub taxonomy: BTreeMap<ErrorClass, usize>,
    pub per_question: Vec<QuestionReport>,
}

impl EvalReport {
    /// Plain-text summary table.
    pub fn table(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "questions {} (answerable {})\n",
            self.questions, self.answerable
        ));
        out.push_str(&format!("{:<12}{:>10.4}\n", "Ma-F1", self.ma_f1));
        for (k, v) in &self.f1_at {
            out.push_str(&format!("{:<12}{:>10.4}\n", format!("F1@{k}"), v));
        }
        for (k, v) in &self.ha_f1_at {
            out.push_str(&format!("{:<12}{:>10.4}\n", format!("HA_F1@{k}"), v));
        }
        out.push_str(&format!("{:<12}{:>10.4}\n", "MRR", self.mrr));
        for (k, v) in &self.recall_at {
            out.push_str(&format!("{:<12}{:>10.4}\n", format!("R@{k}"), v));
        }
        for (class, n) in &self.taxonomy {
            out.push_str(&format!("{:<16}{:>6}\n", class.as_str(), n));
        }
        out
    }
}

/// Builds the full report from per-question answer lists (gold token
/// coordinates) and document rankings.
pub fn evaluate(
    answers: &BTreeMap<String, AnswerList>,
    doc_rankings: &BTreeMap<String, Vec<String>>,
    gold: &[GoldAnswer],
    ks: &[usize],
) -> Result<EvalReport> {
    let f1 = ma_f1(answers, gold, ks)?;
    let (mrr, recall_at) = mrr_recall(doc_rankings, gold, ks);
    let ranks = gold_doc_ranks(doc_rankings, gold);
    let per_question: Vec<QuestionReport> = gold
        .iter()
        .zip(&f1.per_question)
        .map(|(g, q)| QuestionReport {
            question_id: g.question_id.clone(),
            answerable: q.answerable,
            f1_top1: q.f1_top1,
            best_f1_at_k: q.best_at.clone(),
            doc_rank: ranks.get(&g.question_id).copied().flatten(),
            error_class: classify(answers[&g.question_id][0].as_ref(), g.answer.as_ref()),
        })
        .collect();
    Ok(EvalReport {
        questions: gold.len(),
        answerable: gold.iter().filter(|g| g.is_answerable()).count(),
        ma_f1: f1.ma_f1,
        f1_at: f1.f1_at,
        ha_f1_at: f1.ha_f1_at,
        mrr,
        recall_at,
        taxonomy: error_taxonomy(&per_question),
        per_question,
    })
}

/// Projects prediction rows onto the gold tokenization through character
/// offsets, ordered by rank. Rows naming an unknown document keep their
/// document id with an empty token range, so they can only score zero.
pub fn project_predictions(
    rows: &[PredictionRow],
    dataset: &Dataset,
) -> Result<BTreeMap<String, AnswerList>> {
    let mut sorted: Vec<&PredictionRow> = rows.iter().collect();
    sorted.sort_by(|a, b| a.question_id.cmp(&b.question_id).then(a.rank.cmp(&b.rank)));
    let mut out: BTreeMap<String, AnswerList> = BTreeMap::new();
    for row in sorted {
        let span = match (&row.doc_id, row.start_char, row.end_char, row.no_answer) {
            (_, _, _, true) => None,
            (Some(doc_id), Some(s), Some(e), false) => match dataset.document(doc_id) {
                Some(doc) => {
                    let (ts, te) = doc.char_span_to_token_span(s, e)?;
                    Some(AnswerSpan::new(doc_id.clone(), ts, te))
                }
                None => Some(AnswerSpan::new(doc_id.clone(), usize::MAX, usize::MAX)),
            },
            _ => {
                return Err(Error::InvalidSpan(format!(
                    "prediction for `{}` at rank {} lacks a document span",
                    row.question_id, row.rank
                )))
            }
        };
        out.entry(row.question_id.clone()).or_default().push(span);
    }
    Ok(out)
}

/// Document ranking implied by the order of answer rows: distinct documents
/// by first appearance.
pub fn rankings_from_rows(rows: &[PredictionRow]) -> BTreeMap<String, Vec<String>> {
    let mut sorted: Vec<&PredictionRow> = rows.iter().collect();
    sorted.sort_by(|a, b| a.question_id.cmp(&b.question_id).then(a.rank.cmp(&b.rank)));
    let mut out: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for row in sorted {
        let list = out.entry(row.question_id.clone()).or_default();
        if let Some(doc) = &row.doc_id {
            if !list.contains(doc) {
                list.push(doc.clone());
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn span(doc: &str, s: usize, e: usize) -> Option<AnswerSpan> {
        Some(AnswerSpan::new(doc, s, e))
    }

    fn gold(qid: &str, answer: Option<AnswerSpan>) -> GoldAnswer {
        GoldAnswer {
            question_id: qid.into(),
            answer,
        }
    }

    #[test]
    fn f1_examples() {
        assert_eq!(
            span_f1(span("d", 5, 15).as_ref(), span("d", 5, 15).as_ref()),
            1.0
        );
        assert_eq!(
            span_f1(span("d", 5, 9).as_ref(), span("d", 5, 15).as_ref()),
            0.625
        );
        assert_eq!(span_f1(None, None), 1.0);
        assert_eq!(span_f1(None, span("d", 1, 2).as_ref()), 0.0);
        assert_eq!(span_f1(span("d", 1, 2).as_ref(), None), 0.0);
        assert_eq!(
            span_f1(span("e", 5, 15).as_ref(), span("d", 5, 15).as_ref()),
            0.0
        );
        assert_eq!(span_f1(Some(&AnswerSpan::no_answer("d")), None), 1.0);
    }

    #[test]
    fn ma_f1_examples() {
        let g = vec![gold("a", span("d", 1, 1)), gold("b", span("d", 1, 1))];
        let p = BTreeMap::from([
            ("a".to_string(), vec![span("d", 1, 1)]),
            ("b".to_string(), vec![None]),
        ]);
        assert_eq!(ma_f1(&p, &g, &[1]).unwrap().ma_f1, 0.5);

        let g = vec![gold("a", span("d", 5, 15))];
        let list = vec![
            span("d", 20, 21),
            span("d", 5, 9),
            span("d", 14, 20),
            None,
            span("x", 5, 15),
        ];
        let p = BTreeMap::from([("a".to_string(), list)]);
        let s = ma_f1(&p, &g, &[1, 5]).unwrap();
        assert_eq!(s.f1_at[&5], 0.625);
        assert_eq!(s.f1_at[&1], s.ma_f1);

        let g = vec![gold("a", span("d", 1, 1)), gold("u", None)];
        let p = BTreeMap::from([
            ("a".to_string(), vec![span("d", 1, 3)]),
            ("u".to_string(), vec![None]),
        ]);
        let s = ma_f1(&p, &g, &[1]).unwrap();
        assert_eq!(s.per_question[1].f1_top1, 1.0);
        assert_eq!(s.ha_f1_at[&1], 0.5);

        assert!(matches!(
            ma_f1(&BTreeMap::new(), &g, &[1]),
            Err(Error::MissingPrediction(_))
        ));
    }

    #[test]
    fn mrr_examples() {
        let g: Vec<_> = ["a", "b", "c"]
            .iter()
            .map(|q| gold(q, span("g", 0, 0)))
            .collect();
        let mk = |pos: usize| {
            let mut r: Vec<String> = (0..5).map(|i| format!("n{i}")).collect();
            r.insert(pos - 1, "g".into());
            r
        };
        let rankings = BTreeMap::from([
            ("a".into(), mk(1)),
            ("b".into(), mk(2)),
            ("c".into(), mk(4)),
        ]);
        let (mrr, r) = mrr_recall(&rankings, &g, &[1, 5]);
        assert!((mrr - 1.75 / 3.0).abs() < 1e-12);
        assert!((mrr - 0.5833).abs() < 1e-4);
        assert!((r[&1] - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(r[&5], 1.0);

        let missing = BTreeMap::from([("a".to_string(), vec!["x".to_string()])]);
        let (mrr, r) = mrr_recall(&missing, &g[..1], &[1, 5]);
        assert_eq!((mrr, r[&1], r[&5]), (0.0, 0.0, 0.0));
    }

    #[test]
    fn taxonomy_examples() {
        let g = span("d", 5, 15);
        assert_eq!(
            classify(span("d", 6, 10).as_ref(), g.as_ref()),
            ErrorClass::SpanTooSmall
        );
        assert_eq!(
            classify(span("d", 3, 20).as_ref(), g.as_ref()),
            ErrorClass::SpanTooLarge
        );
        assert_eq!(
            classify(span("d", 2, 8).as_ref(), g.as_ref()),
            ErrorClass::SpanMismatch
        );
        assert_eq!(
            classify(span("d", 5, 10).as_ref(), g.as_ref()),
            ErrorClass::SpanMismatch
        );
        assert_eq!(
            classify(span("d", 5, 15).as_ref(), g.as_ref()),
            ErrorClass::CorrectSpan
        );
        assert_eq!(
            classify(span("e", 5, 15).as_ref(), g.as_ref()),
            ErrorClass::WrongDoc
        );
        assert_eq!(classify(None, g.as_ref()), ErrorClass::WrongDoc);
        assert_eq!(classify(None, None), ErrorClass::Correct);
    }

    proptest! {
        #[test]
        fn f1_at_k_is_monotone(spans in proptest::collection::vec(proptest::option::of((0usize..20, 0usize..6)), 1..8)) {
            let list: AnswerList = spans.into_iter().map(|o| o.map(|(s, l)| AnswerSpan::new("d", s, s + l))).collect();
            let p = BTreeMap::from([("q".to_string(), list)]);
            let s = ma_f1(&p, &[gold("q", span("d", 4, 10))], &[1, 2, 3, 5, 8]).unwrap();
            let best: Vec<f64> = s.per_question[0].best_at.values().copied().collect();
            prop_assert!(best.windows(2).all(|w| w[0] <= w[1]));
            prop_assert_eq!(s.ma_f1, s.f1_at[&1]);
        }

        #[test]
        fn taxonomy_partitions_answerable(cases in proptest::collection::vec((0usize..3, 0usize..10, 0usize..5, proptest::bool::ANY), 1..20)) {
            let mut answers = BTreeMap::new();
            let mut golds = Vec::new();
            for (i, &(doc, s, l, answerable)) in cases.iter().enumerate() {
                let qid = format!("q{i}");
                answers.insert(qid.clone(), vec![span(&format!("d{doc}"), s, s + l)]);
                golds.push(gold(&qid, answerable.then(|| AnswerSpan::new("d0", 3, 6))));
            }
            let report = evaluate(&answers, &BTreeMap::new(), &golds, &[1]).unwrap();
            prop_assert_eq!(report.taxonomy.values().sum::<usize>(), report.answerable);
        }
    }
}
