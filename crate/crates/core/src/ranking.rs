//! Snippet ranking: reading score with the no-answer correction, joint score
//! variants, per-document aggregation and top-K answer lists.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::AnswerSpan;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyName {
    /// `α·p_DR + (1-α)·S_reader`
    #[default]
    OursWithDoc,
    /// `p_s + p_e - p_s[0] - p_e[0]`
    OursWithoutDoc,
    /// `α·p_DR + p_s + p_e`
    Wklm,
    /// `p_DR · p_s · p_e`
    MpBert,
}

impl StrategyName {
    pub const ALL: [StrategyName; 4] = [
        StrategyName::OursWithDoc,
        StrategyName::OursWithoutDoc,
        StrategyName::Wklm,
        StrategyName::MpBert,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            StrategyName::OursWithDoc => "ours_with_doc",
            StrategyName::OursWithoutDoc => "ours_without_doc",
            StrategyName::Wklm => "wklm",
            StrategyName::MpBert => "mp_bert",
        }
    }

    pub fn uses_alpha(&self) -> bool {
        matches!(self, StrategyName::OursWithDoc | StrategyName::Wklm)
    }
}

impl FromStr for StrategyName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        StrategyName::ALL
            .into_iter()
            .find(|n| n.as_str() == s)
            .ok_or_else(|| Error::UnknownStrategy(s.to_string()))
    }
}

impl fmt::Display for StrategyName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankingStrategy {
    pub name: StrategyName,
    pub alpha: f64,
}

impl Default for RankingStrategy {
    fn default() -> Self {
        Self {
            name: StrategyName::OursWithDoc,
            alpha: 0.5,
        }
    }
}

impl RankingStrategy {
    pub fn new(name: StrategyName, alpha: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(Error::InvalidConfig(format!(
                "alpha {alpha} outside [0, 1]"
            )));
        }
        Ok(Self { name, alpha })
    }

    pub fn parse(name: &str, alpha: f64) -> Result<Self> {
        Self::new(name.parse()?, alpha)
    }
}

/// Head outputs for the best span of one block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub question_id: String,
    pub doc_id: String,
    pub block_index: usize,
    /// Predicted span in document token coordinates; `None` for no-answer.
    pub span: Option<AnswerSpan>,
    pub p_s: f64,
    pub p_e: f64,
    pub p_s0: f64,
    pub p_e0: f64,
    pub p_dr: f64,
    pub score: f64,
    pub strategy: StrategyName,
}

impl PredictionRecord {
    /// Recomputes `score` under `strategy`.
    pub fn rescore(&mut self, strategy: &RankingStrategy) {
        self.score = joint_score(self, strategy);
        self.strategy = strategy.name;
    }

    fn start(&self) -> usize {
        self.span.as_ref().map_or(0, |s| s.start)
    }
}

/// `(p_start[s] + p_end[e]) - (p_start[0] + p_end[0])`.
pub fn reading_score(r: &PredictionRecord) -> f64 {
    if r.span.is_none() {
        return 0.0;
    }
    (r.p_s + r.p_e) - (r.p_s0 + r.p_e0)
}

pub fn joint_score(r: &PredictionRecord, strategy: &RankingStrategy) -> f64 {
    let alpha = strategy.alpha;
    match strategy.name {
        StrategyName::OursWithDoc => alpha * r.p_dr + (1.0 - alpha) * reading_score(r),
        StrategyName::OursWithoutDoc => reading_score(r),
        StrategyName::Wklm => alpha * r.p_dr + r.p_s + r.p_e,
        StrategyName::MpBert => r.p_dr * r.p_s * r.p_e,
    }
}

/// Highest score first; ties by doc id, span start, then block index.
fn by_rank(a: &PredictionRecord, b: &PredictionRecord) -> Ordering {
    b.score
        .total_cmp(&a.score)
        .then_with(|| a.doc_id.cmp(&b.doc_id))
        .then_with(|| a.start().cmp(&b.start()))
        .then_with(|| a.block_index.cmp(&b.block_index))
}

/// Best block record of one document; ties go to the lower block index.
pub fn aggregate_document(records: &[PredictionRecord]) -> Result<PredictionRecord> {
    let mut best: Option<&PredictionRecord> = None;
    for r in records {
        best = match best {
            None => Some(r),
            Some(b)
                if r.score > b.score || (r.score == b.score && r.block_index < b.block_index) =>
            {
                Some(r)
            }
            keep => keep,
        };
    }
    best.cloned().ok_or(Error::EmptyInput("document records"))
}

/// Keeps one record per (doc, span), the highest scoring.
pub fn dedup_spans(records: &[PredictionRecord]) -> Vec<PredictionRecord> {
    let mut best: BTreeMap<(String, Option<(usize, usize)>), PredictionRecord> = BTreeMap::new();
    for r in records {
        let key = (r.doc_id.clone(), r.span.as_ref().map(|s| (s.start, s.end)));
        match best.get(&key) {
            Some(b) if by_rank(b, r) != Ordering::Greater => {}
            _ => {
                best.insert(key, r.clone());
            }
        }
    }
    best.into_values().collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankOptions {
    pub k: usize,
    /// Abstain when the best span score falls below this threshold.
    pub threshold: f64,
}

impl Default for RankOptions {
    fn default() -> Self {
        Self {
            k: 5,
            threshold: f64::NEG_INFINITY,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedAnswer {
    pub rank: usize,
    /// `None` for the abstention row.
    pub record: Option<PredictionRecord>,
    pub score: f64,
}

impl RankedAnswer {
    pub fn is_no_answer(&self) -> bool {
        self.record.as_ref().is_none_or(|r| r.span.is_none())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionRanking {
    pub question_id: String,
    pub answers: Vec<RankedAnswer>,
    /// Documents by aggregated (max block) score.
    pub documents: Vec<(String, f64)>,
}

/// Ranks every block record of one question. Records are re-scored under
/// `strategy`. Span answers are deduplicated by document span; an abstention
/// row leads the list when no span exists or the best span scores below the
/// threshold.
pub fn rank_answers(
    question_id: &str,
    records: &[PredictionRecord],
    strategy: &RankingStrategy,
    options: &RankOptions,
) -> QuestionRanking {
    let scored: Vec<PredictionRecord> = records
        .iter()
        .cloned()
        .map(|mut r| {
            r.rescore(strategy);
            r
        })
        .collect();

    let mut by_doc: BTreeMap<&str, f64> = BTreeMap::new();
    for r in &scored {
        let e = by_doc.entry(r.doc_id.as_str()).or_insert(f64::NEG_INFINITY);
        *e = e.max(r.score);
    }
    let mut documents: Vec<(String, f64)> = by_doc
        .into_iter()
        .map(|(d, s)| (d.to_string(), s))
        .collect();
    documents.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));

    let spans: Vec<PredictionRecord> = scored
        .iter()
        .filter(|r| r.span.is_some())
        .cloned()
        .collect();
    let mut candidates = dedup_spans(&spans);
    candidates.sort_by(by_rank);

    let abstain = candidates
        .first()
        .is_none_or(|best| best.score < options.threshold);
    let mut answers = Vec::with_capacity(options.k);
    if abstain {
        let score = candidates.first().map_or(0.0, |c| c.score);
        answers.push(RankedAnswer {
            rank: 1,
            record: None,
            score,
        });
    }
    for c in candidates {
        if answers.len() >= options.k {
            break;
        }
        answers.push(RankedAnswer {
            rank: answers.len() + 1,
            score: c.score,
            record: Some(c),
        });
    }
    QuestionRanking {
        question_id: question_id.to_string(),
        answers,
        documents,
    }
}

/// Threshold maximizing mean top-1 F1 on a validation set. Each entry is
/// `(best span score, F1 of that span, answerable)`; abstaining earns 1 on
/// unanswerable questions and 0 otherwise. Ties pick the lowest threshold.
pub fn tune_threshold(entries: &[(f64, f64, bool)]) -> f64 {
    let mut candidates: Vec<f64> = entries.iter().map(|e| e.0).collect();
    candidates.push(f64::NEG_INFINITY);
    candidates.push(f64::INFINITY);
    candidates.sort_by(f64::total_cmp);
    candidates.dedup();
    let mut best = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    for tau in candidates {
        let value: f64 = entries
            .iter()
            .map(|&(score, f1, answerable)| {
                if score < tau {
                    if answerable {
                        0.0
                    } else {
                        1.0
                    }
                } else {
                    f1
                }
            })
            .sum();
        if value > best.1 {
            best = (tau, value);
        }
    }
    best.0
}

/// One line of the prediction file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRow {
    pub question_id: String,
    pub rank: usize,
    pub doc_id: Option<String>,
    pub start_char: Option<usize>,
    pub end_char: Option<usize>,
    pub score: f64,
    pub no_answer: bool,
}

pub fn write_predictions(path: &Path, rows: &[PredictionRow]) -> Result<()> {
    let mut out = Vec::new();
    for row in rows {
        serde_json::to_writer(&mut out, row).map_err(|e| Error::json(path, e))?;
        out.push(b'\n');
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&out).map_err(|e| Error::io(path, e))
}

pub fn read_predictions(path: &Path) -> Result<Vec<PredictionRow>> {
    let f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rows = Vec::new();
    for line in BufReader::new(f).lines() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        rows.push(serde_json::from_str(&line).map_err(|e| Error::json(path, e))?);
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(doc: &str, block: usize, span: Option<(usize, usize)>, p: [f64; 5]) -> PredictionRecord {
        PredictionRecord {
            question_id: "q".into(),
            doc_id: doc.into(),
            block_index: block,
            span: span.map(|(s, e)| AnswerSpan::new(doc, s, e)),
            p_s: p[0],
            p_e: p[1],
            p_s0: p[2],
            p_e0: p[3],
            p_dr: p[4],
            score: 0.0,
            strategy: StrategyName::OursWithDoc,
        }
    }

    #[test]
    fn reading_score_examples() {
        let r = rec("d", 1, Some((3, 4)), [0.7, 0.6, 0.1, 0.2, 0.5]);
        assert!((reading_score(&r) - 1.0).abs() < 1e-12);
        let none = rec("d", 1, None, [0.4, 0.3, 0.4, 0.3, 0.5]);
        assert_eq!(reading_score(&none), 0.0);
        // All mass on the CLS slot: the span terms vanish.
        let dead = rec("d", 1, Some((3, 3)), [0.0, 0.0, 1.0, 1.0, 0.5]);
        assert_eq!(reading_score(&dead), -2.0);
    }

    #[test]
    fn joint_score_examples() {
        let r = rec("d", 1, Some((3, 4)), [0.7, 0.6, 0.1, 0.2, 0.8]);
        let s = |name, alpha| joint_score(&r, &RankingStrategy::new(name, alpha).unwrap());
        assert!((s(StrategyName::OursWithDoc, 0.5) - 0.9).abs() < 1e-12);
        assert!((s(StrategyName::OursWithoutDoc, 0.5) - 1.0).abs() < 1e-12);
        assert!((s(StrategyName::Wklm, 0.5) - (0.4 + 1.3)).abs() < 1e-12);
        assert!((s(StrategyName::MpBert, 0.5) - 0.8 * 0.7 * 0.6).abs() < 1e-12);
        let zero = rec("d", 1, Some((3, 4)), [0.7, 0.0, 0.1, 0.2, 0.8]);
        assert_eq!(
            joint_score(
                &zero,
                &RankingStrategy::new(StrategyName::MpBert, 0.5).unwrap()
            ),
            0.0
        );
    }

    #[test]
    fn strategy_parsing() {
        assert_eq!("wklm".parse::<StrategyName>().unwrap(), StrategyName::Wklm);
        assert!(matches!(
            "bm25".parse::<StrategyName>(),
            Err(Error::UnknownStrategy(_))
        ));
        assert!(RankingStrategy::new(StrategyName::Wklm, 1.5).is_err());
    }

    #[test]
    fn alpha_one_orders_by_match_probability() {
        let strat = RankingStrategy::new(StrategyName::OursWithDoc, 1.0).unwrap();
        let records = vec![
            rec("a", 1, Some((1, 2)), [0.9, 0.9, 0.0, 0.0, 0.2]),
            rec("b", 1, Some((1, 2)), [0.1, 0.1, 0.5, 0.5, 0.7]),
            rec("c", 1, Some((1, 2)), [0.5, 0.5, 0.1, 0.1, 0.4]),
        ];
        let ranked = rank_answers("q", &records, &strat, &RankOptions::default());
        let docs: Vec<_> = ranked.documents.iter().map(|d| d.0.as_str()).collect();
        assert_eq!(docs, vec!["b", "c", "a"]);
    }

    #[test]
    fn aggregation() {
        let mut one = rec("d", 1, Some((1, 2)), [0.5; 5]);
        one.score = 0.4;
        assert_eq!(aggregate_document(std::slice::from_ref(&one)).unwrap(), one);
        let mut two = rec("d", 2, Some((3, 4)), [0.5; 5]);
        two.score = 0.9;
        assert_eq!(
            aggregate_document(&[one.clone(), two.clone()])
                .unwrap()
                .block_index,
            2
        );
        two.score = 0.4;
        assert_eq!(aggregate_document(&[two, one]).unwrap().block_index, 1);
        assert!(aggregate_document(&[]).is_err());
    }

    #[test]
    fn overlapping_blocks_deduplicate_by_span() {
        let strat = RankingStrategy::default();
        let a = rec("d", 1, Some((40, 45)), [0.6, 0.6, 0.1, 0.1, 0.5]);
        let b = rec("d", 2, Some((40, 45)), [0.8, 0.7, 0.1, 0.1, 0.5]);
        let c = rec("e", 1, Some((3, 4)), [0.2, 0.2, 0.1, 0.1, 0.5]);
        let ranked = rank_answers(
            "q",
            &[a, b, c],
            &strat,
            &RankOptions {
                k: 5,
                ..Default::default()
            },
        );
        assert_eq!(ranked.answers.len(), 2);
        let top = ranked.answers[0].record.as_ref().unwrap();
        assert_eq!((top.doc_id.as_str(), top.block_index), ("d", 2));
    }

    #[test]
    fn gold_at_rank_four_of_five() {
        let strat = RankingStrategy::new(StrategyName::OursWithoutDoc, 0.5).unwrap();
        let records: Vec<_> = (0..6)
            .map(|i| {
                rec(
                    &format!("d{i}"),
                    1,
                    Some((1, 1)),
                    [0.9 - 0.1 * i as f64, 0.5, 0.0, 0.0, 0.5],
                )
            })
            .collect();
        let ranked = rank_answers(
            "q",
            &records,
            &strat,
            &RankOptions {
                k: 5,
                ..Default::default()
            },
        );
        let docs: Vec<_> = ranked.documents.iter().map(|d| d.0.clone()).collect();
        let rank = docs.iter().position(|d| d == "d3").unwrap() + 1;
        assert_eq!(rank, 4);
        assert!(rank <= 5 && rank > 1);
        assert_eq!(ranked.answers.len(), 5);
    }

    #[test]
    fn all_no_answer_abstains() {
        let records = vec![
            rec("a", 1, None, [0.4, 0.4, 0.4, 0.4, 0.3]),
            rec("b", 1, None, [0.5; 5]),
        ];
        let ranked = rank_answers(
            "q",
            &records,
            &RankingStrategy::default(),
            &RankOptions::default(),
        );
        assert_eq!(ranked.answers.len(), 1);
        assert!(ranked.answers[0].is_no_answer());
        assert_eq!(ranked.documents.len(), 2);
    }

    #[test]
    fn high_threshold_abstains_first() {
        let records = vec![rec("a", 1, Some((2, 3)), [0.4, 0.4, 0.1, 0.1, 0.3])];
        let opts = RankOptions {
            k: 3,
            threshold: 10.0,
        };
        let ranked = rank_answers("q", &records, &RankingStrategy::default(), &opts);
        assert!(ranked.answers[0].is_no_answer());
        assert_eq!(ranked.answers.len(), 2);
    }

    #[test]
    fn threshold_tuning() {
        // Two answerable questions answered well at high scores, one
        // unanswerable at a low score: abstaining below 0.5 is optimal.
        let entries = [(0.9, 1.0, true), (0.8, 0.5, true), (0.2, 0.0, false)];
        let tau = tune_threshold(&entries);
        assert!(tau > 0.2 && tau <= 0.8);
        assert_eq!(tune_threshold(&[(0.3, 1.0, true)]), f64::NEG_INFINITY);
    }

    #[test]
    fn prediction_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.jsonl");
        let rows = vec![
            PredictionRow {
                question_id: "q".into(),
                rank: 1,
                doc_id: None,
                start_char: None,
                end_char: None,
                score: 0.1,
                no_answer: true,
            },
            PredictionRow {
                question_id: "q".into(),
                rank: 2,
                doc_id: Some("d".into()),
                start_char: Some(3),
                end_char: Some(9),
                score: 0.05,
                no_answer: false,
            },
        ];
        write_predictions(&path, &rows).unwrap();
        assert_eq!(read_predictions(&path).unwrap(), rows);
    }
}
