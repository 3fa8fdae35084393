//! BM25 lexical retrieval producing per-question candidate pools.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::corpus::{Dataset, Document, Question};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Self { k1: 1.2, b: 0.75 }
    }
}

impl Bm25Params {
    /// Lucene-style idf, always positive.
    pub fn idf(&self, doc_freq: usize, doc_count: usize) -> f64 {
        let df = doc_freq as f64;
        (1.0 + (doc_count as f64 - df + 0.5) / (df + 0.5)).ln()
    }

    pub fn term_score(&self, tf: usize, doc_len: usize, avg_doc_length: f64, idf: f64) -> f64 {
        if tf == 0 {
            return 0.0;
        }
        let tf = tf as f64;
        let norm = 1.0 - self.b + self.b * doc_len as f64 / avg_doc_length;
        idf * tf * (self.k1 + 1.0) / (tf + self.k1 * norm)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvertedIndex {
    pub postings: BTreeMap<String, Vec<(String, usize)>>,
    pub doc_lengths: BTreeMap<String, usize>,
    pub avg_doc_length: f64,
    pub doc_count: usize,
    #[serde(default)]
    pub params: Bm25Params,
}

fn normalize(token: &str) -> String {
    token.to_lowercase()
}

impl InvertedIndex {
    pub fn build<'a, I>(documents: I) -> Result<Self>
    where
        I: IntoIterator<Item = &'a Document>,
    {
        Self::build_with(documents, Bm25Params::default())
    }

    pub fn build_with<'a, I>(documents: I, params: Bm25Params) -> Result<Self>
    where
        I: IntoIterator<Item = &'a Document>,
    {
        let mut postings: BTreeMap<String, Vec<(String, usize)>> = BTreeMap::new();
        let mut doc_lengths = BTreeMap::new();
        for doc in documents {
            let mut tf: BTreeMap<String, usize> = BTreeMap::new();
            for tok in &doc.tokens {
                *tf.entry(normalize(tok)).or_default() += 1;
            }
            for (term, count) in tf {
                postings
                    .entry(term)
                    .or_default()
                    .push((doc.doc_id.clone(), count));
            }
            doc_lengths.insert(doc.doc_id.clone(), doc.len());
        }
        if doc_lengths.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        for list in postings.values_mut() {
            list.sort();
        }
        let doc_count = doc_lengths.len();
        let avg_doc_length = doc_lengths.values().sum::<usize>() as f64 / doc_count as f64;
        Ok(Self {
            postings,
            doc_lengths,
            avg_doc_length,
            doc_count,
            params,
        })
    }

    /// BM25 score of every document with at least one matching query term.
    pub fn scores<S: AsRef<str>>(&self, query_tokens: &[S]) -> HashMap<&str, f64> {
        let mut scores: HashMap<&str, f64> = HashMap::new();
        // Guard against an all-empty corpus (avg length 0).
        let avg = self.avg_doc_length.max(f64::MIN_POSITIVE);
        for tok in query_tokens {
            let Some(list) = self.postings.get(&normalize(tok.as_ref())) else {
                continue;
            };
            let idf = self.params.idf(list.len(), self.doc_count);
            for (doc_id, tf) in list {
                let dl = self.doc_lengths[doc_id];
                *scores.entry(doc_id.as_str()).or_default() +=
                    self.params.term_score(*tf, dl, avg, idf);
            }
        }
        scores
    }

    /// Top-`k` documents by score (descending, ties by doc id ascending). When
    /// `pad` is set and fewer than `k` documents match, the list is filled with
    /// the lowest unused doc ids at score 0.
    pub fn retrieve<S: AsRef<str>>(
        &self,
        query_tokens: &[S],
        k: usize,
        pad: bool,
    ) -> Vec<(String, f64)> {
        let mut ranked: Vec<(&str, f64)> = self
            .scores(query_tokens)
            .into_iter()
            .filter(|(_, s)| *s > 0.0)
            .collect();
        ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        ranked.truncate(k);
        let mut out: Vec<(String, f64)> = ranked
            .into_iter()
            .map(|(d, s)| (d.to_string(), s))
            .collect();
        if pad && out.len() < k {
            let taken: std::collections::HashSet<String> =
                out.iter().map(|(d, _)| d.clone()).collect();
            let fill = self
                .doc_lengths
                .keys()
                .filter(|d| !taken.contains(*d))
                .take(k - out.len())
                .map(|d| (d.clone(), 0.0))
                .collect::<Vec<_>>();
            out.extend(fill);
        }
        out
    }

    pub fn retrieve_question(
        &self,
        question: &Question,
        k: usize,
        pad: bool,
    ) -> Vec<(String, f64)> {
        let query = crate::corpus::tokenize(&question.query_text()).tokens;
        self.retrieve(&query, k, pad)
    }
}

/// Extends every candidate pool to `k` documents with BM25 hits, keeping the
/// existing candidates (and so the gold document) in front.
pub fn augment_pools(dataset: &mut Dataset, index: &InvertedIndex, k: usize) {
    for ex in &mut dataset.examples {
        if ex.candidate_doc_ids.len() >= k {
            continue;
        }
        let hits = index.retrieve_question(&ex.question, k + ex.candidate_doc_ids.len(), true);
        for (doc_id, _) in hits {
            if ex.candidate_doc_ids.len() >= k {
                break;
            }
            if !ex.candidate_doc_ids.contains(&doc_id) {
                ex.candidate_doc_ids.push(doc_id);
            }
        }
    }
}
