//! QA data model: documents, questions, answer spans and datasets.

mod ingest;
mod tokenize;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use ingest::{
    ingest_dataset, load_corpus, write_corpus, DatasetFormat, IngestOptions, RawDocument,
};
pub use tokenize::{
    tokenize, BasicTokenizer, Tokenized, Tokenizer, Vocabulary, CLS_ID, CLS_TOKEN, PAD_ID,
    PAD_TOKEN, SEP_ID, SEP_TOKEN, UNK_ID, UNK_TOKEN,
};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub doc_id: String,
    pub text: String,
    pub tokens: Vec<String>,
    pub char_offsets: Vec<(usize, usize)>,
}

impl Document {
    pub fn new(doc_id: impl Into<String>, text: impl Into<String>) -> Self {
        Self::with_tokenizer(doc_id, text, &BasicTokenizer)
    }

    pub fn with_tokenizer(
        doc_id: impl Into<String>,
        text: impl Into<String>,
        tokenizer: &dyn Tokenizer,
    ) -> Self {
        let text = text.into();
        let Tokenized {
            tokens,
            char_offsets,
        } = tokenizer.tokenize(&text);
        Self {
            doc_id: doc_id.into(),
            text,
            tokens,
            char_offsets,
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Minimal token range covering the character range `[start_char, end_char)`.
    pub fn char_span_to_token_span(
        &self,
        start_char: usize,
        end_char: usize,
    ) -> Result<(usize, usize)> {
        let text_len = self.text.chars().count();
        if start_char > end_char || end_char > text_len {
            return Err(Error::InvalidSpan(format!(
                "character range [{start_char}, {end_char}) outside text of length {text_len}"
            )));
        }
        let mut hit = self
            .char_offsets
            .iter()
            .enumerate()
            .filter(|(_, &(s, e))| {
                if start_char == end_char {
                    s <= start_char && start_char < e
                } else {
                    s < end_char && e > start_char
                }
            })
            .map(|(i, _)| i);
        let first = hit.next().ok_or(Error::SpanInWhitespace {
            start: start_char,
            end: end_char,
        })?;
        let last = hit.next_back().unwrap_or(first);
        Ok((first, last))
    }

    /// Character range `[start, end)` spanned by tokens `start..=end`.
    pub fn token_span_to_char_span(&self, start: usize, end: usize) -> Result<(usize, usize)> {
        if start > end || end >= self.len() {
            return Err(Error::InvalidSpan(format!(
                "token span ({start}, {end}) outside document `{}` of {} tokens",
                self.doc_id,
                self.len()
            )));
        }
        Ok((self.char_offsets[start].0, self.char_offsets[end].1))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Question {
    pub question_id: String,
    pub title: String,
    pub body: String,
    pub tokens: Vec<String>,
}

impl Question {
    /// Title and body tokens joined by a single `[SEP]` token (omitted when the
    /// body is empty).
    pub fn new(
        question_id: impl Into<String>,
        title: impl Into<String>,
        body: impl Into<String>,
    ) -> Self {
        let title = title.into();
        let body = body.into();
        let mut tokens = tokenize(&title).tokens;
        let body_tokens = tokenize(&body).tokens;
        if !body_tokens.is_empty() {
            if !tokens.is_empty() {
                tokens.push(SEP_TOKEN.to_string());
            }
            tokens.extend(body_tokens);
        }
        Self {
            question_id: question_id.into(),
            title,
            body,
            tokens,
        }
    }

    /// Title followed by body, as sent to the lexical retriever.
    pub fn query_text(&self) -> String {
        if self.body.is_empty() {
            self.title.clone()
        } else {
            format!("{} {}", self.title, self.body)
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

/// Inclusive token span `[start, end]` inside a document. The no-answer
/// sentinel is `(0, 0)` with `no_answer` set.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AnswerSpan {
    pub doc_id: String,
    pub start: usize,
    pub end: usize,
    #[serde(default)]
    pub no_answer: bool,
}

impl AnswerSpan {
    pub fn new(doc_id: impl Into<String>, start: usize, end: usize) -> Self {
        Self {
            doc_id: doc_id.into(),
            start,
            end,
            no_answer: false,
        }
    }

    pub fn no_answer(doc_id: impl Into<String>) -> Self {
        Self {
            doc_id: doc_id.into(),
            start: 0,
            end: 0,
            no_answer: true,
        }
    }

    /// Number of tokens covered; zero for the sentinel.
    pub fn token_len(&self) -> usize {
        if self.no_answer {
            0
        } else {
            self.end - self.start + 1
        }
    }

    pub fn validate(&self, doc: &Document) -> Result<()> {
        if self.no_answer {
            return if self.start == 0 && self.end == 0 {
                Ok(())
            } else {
                Err(Error::InvalidSpan("no-answer span must be (0, 0)".into()))
            };
        }
        if self.start > self.end || self.end >= doc.len() {
            return Err(Error::InvalidSpan(format!(
                "({}, {}) outside document `{}` of {} tokens",
                self.start,
                self.end,
                doc.doc_id,
                doc.len()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QAExample {
    pub question: Question,
    pub candidate_doc_ids: Vec<String>,
    pub gold: Option<AnswerSpan>,
    pub answerable: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Validation,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Validation => "validation",
            Split::Test => "test",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DomainTag {
    Auxiliary,
    Target,
}

impl fmt::Display for DomainTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DomainTag::Auxiliary => "auxiliary",
            DomainTag::Target => "target",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetCounts {
    pub questions: usize,
    pub answerable: usize,
    pub unanswerable: usize,
    pub documents: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub name: String,
    pub split: Split,
    pub examples: Vec<QAExample>,
    pub documents: BTreeMap<String, Document>,
    pub domain_tag: DomainTag,
}

impl Dataset {
    pub fn counts(&self) -> DatasetCounts {
        let answerable = self.examples.iter().filter(|e| e.answerable).count();
        DatasetCounts {
            questions: self.examples.len(),
            answerable,
            unanswerable: self.examples.len() - answerable,
            documents: self.documents.len(),
        }
    }

    pub fn document(&self, doc_id: &str) -> Option<&Document> {
        self.documents.get(doc_id)
    }

    /// Checks every structural invariant: referential integrity, gold spans
    /// inside their documents and in the candidate pool, nonempty questions.
    pub fn validate(&self) -> Result<()> {
        let mut dangling = BTreeSet::new();
        for (index, ex) in self.examples.iter().enumerate() {
            if ex.question.is_empty() {
                return Err(Error::MalformedRecord {
                    index,
                    field: "question".into(),
                });
            }
            for id in &ex.candidate_doc_ids {
                if !self.documents.contains_key(id) {
                    dangling.insert(id.clone());
                }
            }
            match (&ex.gold, ex.answerable) {
                (Some(gold), true) => {
                    match self.documents.get(&gold.doc_id) {
                        Some(doc) => gold.validate(doc)?,
                        None => {
                            dangling.insert(gold.doc_id.clone());
                        }
                    }
                    if gold.no_answer || !ex.candidate_doc_ids.contains(&gold.doc_id) {
                        return Err(Error::MalformedRecord {
                            index,
                            field: "answer.doc_id".into(),
                        });
                    }
                }
                (None, false) => {}
                _ => {
                    return Err(Error::MalformedRecord {
                        index,
                        field: "answer".into(),
                    })
                }
            }
        }
        if !dangling.is_empty() {
            return Err(Error::DanglingDocIds(dangling.into_iter().collect()));
        }
        Ok(())
    }

    /// Reads a dataset saved by [`Dataset::save`] and validates it.
    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        let dataset: Dataset = serde_json::from_slice(&bytes).map_err(|e| Error::json(path, e))?;
        dataset.validate()?;
        Ok(dataset)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        let bytes = serde_json::to_vec(self).map_err(|e| Error::json(path, e))?;
        fs::write(path, bytes).map_err(|e| Error::io(path, e))
    }

    /// Every token string in questions and documents, for vocabulary building.
    pub fn token_stream(&self) -> impl Iterator<Item = &str> {
        self.examples
            .iter()
            .flat_map(|e| e.question.tokens.iter())
            .chain(self.documents.values().flat_map(|d| d.tokens.iter()))
            .map(String::as_str)
    }
}

/// Registry of loaded datasets keyed by (name, split).
#[derive(Debug, Default)]
pub struct Catalog {
    datasets: BTreeMap<(String, Split), Dataset>,
}

impl Catalog {
    pub fn insert(&mut self, dataset: Dataset) -> Result<()> {
        let key = (dataset.name.clone(), dataset.split);
        if self.datasets.contains_key(&key) {
            return Err(Error::DuplicateSplit {
                name: key.0,
                split: key.1.to_string(),
            });
        }
        self.datasets.insert(key, dataset);
        Ok(())
    }

    pub fn get(&self, name: &str, split: Split) -> Option<&Dataset> {
        self.datasets.get(&(name.to_string(), split))
    }

    pub fn iter(&self) -> impl Iterator<Item = &Dataset> {
        self.datasets.values()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn exact_token_span() {
        let doc = Document::new("d", "install fix pack");
        assert_eq!(doc.char_span_to_token_span(0, 7).unwrap(), (0, 0));
        assert_eq!(doc.char_span_to_token_span(8, 16).unwrap(), (1, 2));
    }

    #[test]
    fn mid_token_start_expands_to_cover() {
        let doc = Document::new("d", "install fix pack");
        assert_eq!(doc.char_span_to_token_span(3, 11).unwrap(), (0, 1));
    }

    #[test]
    fn whitespace_only_span_is_rejected() {
        let doc = Document::new("d", "install   fix");
        assert!(matches!(
            doc.char_span_to_token_span(8, 9),
            Err(Error::SpanInWhitespace { .. })
        ));
        assert!(doc.char_span_to_token_span(0, 99).is_err());
    }

    #[test]
    fn question_joins_title_and_body() {
        let q = Question::new("q1", "Install fails", "error code 12");
        assert_eq!(
            q.tokens,
            vec!["Install", "fails", "[SEP]", "error", "code", "12"]
        );
        let q = Question::new("q2", "only a title", "");
        assert_eq!(q.len(), 3);
    }

    #[test]
    fn catalog_rejects_duplicate_split() {
        let ds = Dataset {
            name: "techqa".into(),
            split: Split::Train,
            examples: vec![],
            documents: BTreeMap::new(),
            domain_tag: DomainTag::Target,
        };
        let mut cat = Catalog::default();
        cat.insert(ds.clone()).unwrap();
        assert!(matches!(cat.insert(ds), Err(Error::DuplicateSplit { .. })));
    }

    proptest! {
        #[test]
        fn covering_span_contains_input(words in proptest::collection::vec("[a-z]{1,6}", 1..12), a in 0usize..200, b in 0usize..200) {
            let text = words.join("  ");
            let doc = Document::new("d", text.clone());
            let n = text.chars().count();
            let (s, e) = (a.min(b) % (n + 1), a.max(b) % (n + 1));
            let (s, e) = (s.min(e), s.max(e));
            if let Ok((ts, te)) = doc.char_span_to_token_span(s, e) {
                let (cs, ce) = doc.token_span_to_char_span(ts, te).unwrap();
                let chars: Vec<char> = text.chars().collect();
                for (i, c) in chars.iter().enumerate().take(e).skip(s) {
                    if !c.is_whitespace() {
                        prop_assert!(cs <= i && i < ce);
                    }
                }
                if s == e {
                    prop_assert!(cs <= s && s < ce);
                }
            }
        }
    }
}
