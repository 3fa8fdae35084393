//! Synthetic two-domain QA corpus with planted lexical answer patterns.
//!
//! Every document is a run of filler sentences plus planted sentences of the
//! form `keyword marker w1 .. wk .`. A question names one keyword; its answer
//! is the `w1 .. wk .` run after that keyword's marker. Auxiliary and target
//! domains draw filler from vocabularies that share about half their words
//! and use disjoint keyword sets; both use the same marker word. Target
//! keywords come from a small reused set, so every validation keyword also
//! occurs in training documents; candidate pools never hold a second
//! document planted with the question's keyword.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::corpus::{
    write_corpus, AnswerSpan, Dataset, Document, DomainTag, QAExample, Question, RawDocument, Split,
};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub seed: u64,
    pub aux_questions: usize,
    pub target_train: usize,
    pub target_validation: usize,
    pub pool_size: usize,
    pub unanswerable_fraction: f64,
    /// Filler words per vocabulary part (shared, target-only, auxiliary-only).
    pub words_per_part: usize,
    /// Target document length range in tokens.
    pub target_doc_len: (usize, usize),
    pub aux_doc_len: (usize, usize),
    /// Background distractor documents in the target corpus.
    pub background_docs: usize,
    /// Per-question negatives that mention the keyword without the marker.
    pub hard_negatives: usize,
    /// Distinct target keywords shared by questions and background documents.
    pub target_keywords: usize,
    /// Word count range of a planted answer, excluding its closing period.
    pub answer_words: (usize, usize),
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            aux_questions: 400,
            target_train: 800,
            target_validation: 100,
            pool_size: 20,
            unanswerable_fraction: 0.25,
            words_per_part: 120,
            target_doc_len: (30, 80),
            aux_doc_len: (20, 50),
            background_docs: 300,
            hard_negatives: 2,
            target_keywords: 80,
            answer_words: (8, 14),
        }
    }
}

/// Question records in the ingest JSON formats plus their corpora.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthFiles {
    pub aux_questions: Vec<Value>,
    pub aux_corpus: Vec<RawDocument>,
    pub target_train_questions: Vec<Value>,
    pub target_validation_questions: Vec<Value>,
    pub target_corpus: Vec<RawDocument>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthCorpus {
    pub aux: Dataset,
    pub target_train: Dataset,
    pub target_validation: Dataset,
    pub files: SynthFiles,
}

/// Paths written by [`SynthCorpus::write`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SynthPaths {
    pub aux_questions: PathBuf,
    pub aux_corpus: PathBuf,
    pub target_train_questions: PathBuf,
    pub target_validation_questions: PathBuf,
    pub target_corpus: PathBuf,
}

struct Lexicon {
    marker: String,
    target_filler: Vec<String>,
    aux_filler: Vec<String>,
    target_keywords: Vec<String>,
    aux_keywords: Vec<String>,
    answer_words: (usize, usize),
}

const CONSONANTS: &[u8] = b"bdfgklmnprstvz";
const VOWELS: &[u8] = b"aeiou";

fn syllables() -> Vec<String> {
    let mut out = Vec::new();
    for &c in CONSONANTS {
        for &v in VOWELS {
            out.push(format!("{}{}", c as char, v as char));
        }
    }
    out
}

fn lexicon(
    rng: &mut ChaCha8Rng,
    cfg: &SynthConfig,
    keywords_needed: (usize, usize),
) -> Result<Lexicon> {
    let syl = syllables();
    let mut two: Vec<String> = syl
        .iter()
        .flat_map(|a| syl.iter().map(move |b| format!("{a}{b}")))
        .collect();
    two.shuffle(rng);
    let parts = cfg.words_per_part;
    if 3 * parts + 1 > two.len() {
        return Err(Error::InvalidConfig(format!(
            "words_per_part {parts} too large"
        )));
    }
    let marker = two[0].clone();
    let shared = &two[1..1 + parts];
    let target_only = &two[1 + parts..1 + 2 * parts];
    let aux_only = &two[1 + 2 * parts..1 + 3 * parts];

    let mut three = Vec::new();
    while three.len() < keywords_needed.0 + keywords_needed.1 {
        let w = format!(
            "{}{}{}",
            syl[rng.gen_range(0..syl.len())],
            syl[rng.gen_range(0..syl.len())],
            syl[rng.gen_range(0..syl.len())]
        );
        if !three.contains(&w) {
            three.push(w);
        }
    }
    let aux_keywords = three.split_off(keywords_needed.0);
    Ok(Lexicon {
        marker,
        target_filler: shared.iter().chain(target_only).cloned().collect(),
        aux_filler: shared.iter().chain(aux_only).cloned().collect(),
        target_keywords: three,
        aux_keywords,
        answer_words: cfg.answer_words,
    })
}

/// Incremental document text with token-aligned character offsets.
#[derive(Default)]
struct DocBuilder {
    text: String,
    tokens: usize,
}

impl DocBuilder {
    fn push(&mut self, word: &str) -> (usize, usize) {
        if !self.text.is_empty() {
            self.text.push(' ');
        }
        let start = self.text.len();
        self.text.push_str(word);
        self.tokens += 1;
        (start, self.text.len())
    }

    fn sentence(&mut self, rng: &mut ChaCha8Rng, filler: &[String], extra: Option<&str>) {
        let n = rng.gen_range(4..=9);
        let slot = extra.map(|_| rng.gen_range(0..n));
        for i in 0..n {
            if slot == Some(i) {
                self.push(extra.unwrap());
            } else {
                self.push(pick(rng, filler));
            }
        }
        self.push(".");
    }

    /// `keyword marker w1 .. wk .`; returns the character range of `w1 .. .`.
    fn planted(
        &mut self,
        rng: &mut ChaCha8Rng,
        filler: &[String],
        words: (usize, usize),
        keyword: &str,
        marker: &str,
    ) -> (usize, usize) {
        self.push(keyword);
        self.push(marker);
        let k = rng.gen_range(words.0..=words.1);
        let start = self.push(pick(rng, filler)).0;
        for _ in 1..k {
            self.push(pick(rng, filler));
        }
        let end = self.push(".").1;
        (start, end)
    }
}

fn pick<'a>(rng: &mut ChaCha8Rng, words: &'a [String]) -> &'a str {
    &words[rng.gen_range(0..words.len())]
}

/// One document of roughly `len` tokens with planted sentences for
/// `planted` keywords and filler mentions of `mentions`. Returns the text
/// and the answer character range of the first planted keyword.
fn document(
    rng: &mut ChaCha8Rng,
    lex: &Lexicon,
    filler: &[String],
    len: (usize, usize),
    planted: &[&str],
    mentions: &[&str],
) -> (String, Option<(usize, usize)>) {
    let target = rng.gen_range(len.0..=len.1);
    let mut b = DocBuilder::default();
    let mut pending_planted: Vec<&str> = planted.to_vec();
    let mut pending_mentions: Vec<&str> = mentions.to_vec();
    let mut answer = None;
    let sentences_estimate = (target / 7).max(planted.len() + mentions.len() + 1);
    let mut sentence = 0;
    while b.tokens < target || !pending_planted.is_empty() || !pending_mentions.is_empty() {
        let remaining = sentences_estimate.saturating_sub(sentence).max(1);
        let due = pending_planted.len() + pending_mentions.len();
        if due > 0 && (rng.gen_range(0..remaining) < due || b.tokens >= target) {
            if !pending_planted.is_empty() && (pending_mentions.is_empty() || rng.gen_bool(0.5)) {
                let kw = pending_planted.remove(0);
                let span = b.planted(rng, filler, lex.answer_words, kw, &lex.marker);
                if Some(kw) == planted.first().copied() {
                    answer = Some(span);
                }
            } else {
                let kw = pending_mentions.remove(0);
                b.sentence(rng, filler, Some(kw));
            }
        } else {
            b.sentence(rng, filler, None);
        }
        sentence += 1;
    }
    (b.text, answer)
}

fn build_dataset(
    name: &str,
    split: Split,
    domain_tag: DomainTag,
    records: &[Value],
    corpus: &[RawDocument],
    auxiliary: bool,
) -> Dataset {
    let documents: BTreeMap<String, Document> = corpus
        .iter()
        .map(|d| (d.doc_id.clone(), Document::new(&d.doc_id, &d.text)))
        .collect();
    let examples = records
        .iter()
        .map(|r| {
            let qid = r["question_id"].as_str().expect("synthetic id");
            let (question, pool, doc_of_answer) = if auxiliary {
                let doc = r["doc_id"].as_str().expect("synthetic doc").to_string();
                (
                    Question::new(qid, r["text"].as_str().unwrap(), ""),
                    vec![doc.clone()],
                    Some(doc),
                )
            } else {
                let pool: Vec<String> = r["candidate_doc_ids"]
                    .as_array()
                    .unwrap()
                    .iter()
                    .map(|v| v.as_str().unwrap().to_string())
                    .collect();
                let doc = r["answer"]["doc_id"].as_str().map(str::to_string);
                (
                    Question::new(
                        qid,
                        r["title"].as_str().unwrap(),
                        r["body"].as_str().unwrap(),
                    ),
                    pool,
                    doc,
                )
            };
            let gold = match (&r["answer"], doc_of_answer) {
                (Value::Object(a), Some(doc_id)) => {
                    let doc = &documents[&doc_id];
                    let s = a["start_char"].as_u64().unwrap() as usize;
                    let e = a["end_char"].as_u64().unwrap() as usize;
                    let (ts, te) = doc
                        .char_span_to_token_span(s, e)
                        .expect("token-aligned span");
                    Some(AnswerSpan::new(doc_id, ts, te))
                }
                _ => None,
            };
            QAExample {
                question,
                candidate_doc_ids: pool,
                answerable: gold.is_some(),
                gold,
            }
        })
        .collect();
    Dataset {
        name: name.to_string(),
        split,
        examples,
        documents,
        domain_tag,
    }
}

pub fn generate(cfg: &SynthConfig) -> Result<SynthCorpus> {
    if cfg.pool_size < cfg.hard_negatives + 2 {
        return Err(Error::InvalidConfig(
            "pool_size too small for the hard negatives".into(),
        ));
    }
    if cfg.background_docs + cfg.hard_negatives < cfg.pool_size {
        return Err(Error::InvalidConfig(
            "not enough background documents to fill a pool".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let n_target = cfg.target_train + cfg.target_validation;
    if cfg.answer_words.0 == 0 || cfg.answer_words.0 > cfg.answer_words.1 {
        return Err(Error::InvalidConfig(
            "answer_words must be a nonempty range of positive counts".into(),
        ));
    }
    if cfg.target_keywords < 2 {
        return Err(Error::InvalidConfig(
            "at least two target keywords are needed".into(),
        ));
    }
    let lex = lexicon(&mut rng, cfg, (cfg.target_keywords, 2 * cfg.aux_questions))?;

    // Auxiliary: one document per question holding its answer and one
    // distractor planted sentence, plus hard negatives mentioning the keyword.
    let mut aux_corpus = Vec::with_capacity(cfg.aux_questions);
    let mut aux_questions = Vec::with_capacity(cfg.aux_questions);
    for i in 0..cfg.aux_questions {
        let kw = lex.aux_keywords[i].as_str();
        let distractor = lex.aux_keywords[cfg.aux_questions + i].as_str();
        let mut planted = vec![kw, distractor];
        let first_is_answer = rng.gen_bool(0.5);
        if !first_is_answer {
            planted.swap(0, 1);
        }
        let (text, span) = document(
            &mut rng,
            &lex,
            &lex.aux_filler,
            cfg.aux_doc_len,
            &planted,
            &[],
        );
        let doc_id = format!("aux-d{i:04}");
        let answer_span = if first_is_answer {
            span.expect("answer planted")
        } else {
            locate_answer(&text, kw, &lex.marker)
        };
        aux_questions.push(json!({
            "question_id": format!("aux-q{i:04}"),
            "text": format!("{kw} {} {}", pick(&mut rng, &lex.aux_filler), pick(&mut rng, &lex.aux_filler)),
            "doc_id": doc_id,
            "answer": {"start_char": answer_span.0, "end_char": answer_span.1},
        }));
        aux_corpus.push(RawDocument { doc_id, text });
        for h in 0..cfg.hard_negatives {
            let other =
                lex.aux_keywords[cfg.aux_questions + rng.gen_range(0..cfg.aux_questions)].as_str();
            let (text, _) = document(
                &mut rng,
                &lex,
                &lex.aux_filler,
                cfg.aux_doc_len,
                &[other],
                &[kw],
            );
            aux_corpus.push(RawDocument {
                doc_id: format!("aux-h{i:04}-{h}"),
                text,
            });
        }
    }

    // Target: background documents each planted with one keyword.
    let n_kw = lex.target_keywords.len();
    let mut target_corpus = Vec::new();
    let mut background = Vec::with_capacity(cfg.background_docs);
    for i in 0..cfg.background_docs {
        let k = rng.gen_range(0..n_kw);
        let (text, _) = document(
            &mut rng,
            &lex,
            &lex.target_filler,
            cfg.target_doc_len,
            &[lex.target_keywords[k].as_str()],
            &[],
        );
        let doc_id = format!("tgt-b{i:04}");
        background.push((doc_id.clone(), k));
        target_corpus.push(RawDocument { doc_id, text });
    }
    let other_keyword = |rng: &mut ChaCha8Rng, k: usize| -> usize {
        let o = rng.gen_range(0..n_kw - 1);
        if o >= k {
            o + 1
        } else {
            o
        }
    };

    let mut records = Vec::with_capacity(n_target);
    for q in 0..n_target {
        let k = rng.gen_range(0..n_kw);
        let kw = lex.target_keywords[k].as_str();
        let answerable = !rng.gen_bool(cfg.unanswerable_fraction);
        let mut pool = Vec::with_capacity(cfg.pool_size);
        let mut answer = Value::Null;
        if answerable {
            let distractor = lex.target_keywords[other_keyword(&mut rng, k)].as_str();
            let (text, span) = document(
                &mut rng,
                &lex,
                &lex.target_filler,
                cfg.target_doc_len,
                &[kw, distractor],
                &[],
            );
            let (s, e) = span.expect("answer planted");
            let doc_id = format!("tgt-g{q:04}");
            answer = json!({"doc_id": doc_id, "start_char": s, "end_char": e});
            pool.push(doc_id.clone());
            target_corpus.push(RawDocument { doc_id, text });
        }
        for h in 0..cfg.hard_negatives {
            let distractor = lex.target_keywords[other_keyword(&mut rng, k)].as_str();
            let (text, _) = document(
                &mut rng,
                &lex,
                &lex.target_filler,
                cfg.target_doc_len,
                &[distractor],
                &[kw],
            );
            let doc_id = format!("tgt-h{q:04}-{h}");
            pool.push(doc_id.clone());
            target_corpus.push(RawDocument { doc_id, text });
        }
        let mut fill: Vec<&String> = background
            .iter()
            .filter(|(_, bk)| *bk != k)
            .map(|(d, _)| d)
            .collect();
        if fill.len() + pool.len() < cfg.pool_size {
            return Err(Error::InvalidConfig(
                "not enough background documents to fill a pool".into(),
            ));
        }
        fill.shuffle(&mut rng);
        pool.extend(fill.into_iter().take(cfg.pool_size - pool.len()).cloned());
        pool.shuffle(&mut rng);
        let title = format!(
            "{kw} {} {}",
            pick(&mut rng, &lex.target_filler),
            pick(&mut rng, &lex.target_filler)
        );
        let body = format!(
            "{} {} {}",
            pick(&mut rng, &lex.target_filler),
            pick(&mut rng, &lex.target_filler),
            pick(&mut rng, &lex.target_filler)
        );
        records.push(json!({
            "question_id": format!("tgt-q{q:04}"),
            "title": title,
            "body": body,
            "candidate_doc_ids": pool,
            "answer": answer,
        }));
    }
    anonymize_target_ids(&mut rng, &mut target_corpus, &mut records);
    let validation = records.split_off(cfg.target_train);

    let files = SynthFiles {
        aux_questions,
        aux_corpus,
        target_train_questions: records,
        target_validation_questions: validation,
        target_corpus,
    };
    Ok(SynthCorpus {
        aux: build_dataset(
            "synth-aux",
            Split::Train,
            DomainTag::Auxiliary,
            &files.aux_questions,
            &files.aux_corpus,
            true,
        ),
        target_train: build_dataset(
            "synth-target",
            Split::Train,
            DomainTag::Target,
            &files.target_train_questions,
            &files.target_corpus,
            false,
        ),
        target_validation: build_dataset(
            "synth-target",
            Split::Validation,
            DomainTag::Target,
            &files.target_validation_questions,
            &files.target_corpus,
            false,
        ),
        files,
    })
}

/// Replaces role-revealing target document ids with shuffled opaque ones,
/// so that id order carries no signal about which document is gold.
fn anonymize_target_ids(rng: &mut ChaCha8Rng, corpus: &mut [RawDocument], records: &mut [Value]) {
    let mut numbers: Vec<usize> = (0..corpus.len()).collect();
    numbers.shuffle(rng);
    let rename: BTreeMap<String, String> = corpus
        .iter()
        .zip(&numbers)
        .map(|(d, n)| (d.doc_id.clone(), format!("tgt-d{n:05}")))
        .collect();
    for d in corpus.iter_mut() {
        d.doc_id = rename[&d.doc_id].clone();
    }
    corpus.sort_by(|a, b| a.doc_id.cmp(&b.doc_id));
    for r in records.iter_mut() {
        if let Some(pool) = r["candidate_doc_ids"].as_array_mut() {
            for id in pool.iter_mut() {
                *id = Value::String(rename[id.as_str().expect("string id")].clone());
            }
        }
        if let Some(doc) = r["answer"].get_mut("doc_id") {
            *doc = Value::String(rename[doc.as_str().expect("string id")].clone());
        }
    }
}

/// Character range after `keyword marker` in `text`.
fn locate_answer(text: &str, keyword: &str, marker: &str) -> (usize, usize) {
    let needle = format!("{keyword} {marker} ");
    let start = text.find(&needle).expect("planted sentence") + needle.len();
    let end = start + text[start..].find('.').expect("sentence end") + 1;
    (start, end)
}

impl SynthCorpus {
    pub fn write(&self, dir: &Path) -> Result<SynthPaths> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let paths = SynthPaths {
            aux_questions: dir.join("aux_questions.json"),
            aux_corpus: dir.join("aux_corpus.json"),
            target_train_questions: dir.join("target_train.json"),
            target_validation_questions: dir.join("target_validation.json"),
            target_corpus: dir.join("target_corpus.json"),
        };
        let write_json = |path: &Path, value: &Vec<Value>| -> Result<()> {
            let bytes = serde_json::to_vec_pretty(value).map_err(|e| Error::json(path, e))?;
            fs::write(path, bytes).map_err(|e| Error::io(path, e))
        };
        write_json(&paths.aux_questions, &self.files.aux_questions)?;
        write_json(
            &paths.target_train_questions,
            &self.files.target_train_questions,
        )?;
        write_json(
            &paths.target_validation_questions,
            &self.files.target_validation_questions,
        )?;
        write_corpus(&paths.aux_corpus, &self.files.aux_corpus)?;
        write_corpus(&paths.target_corpus, &self.files.target_corpus)?;
        Ok(paths)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    fn small() -> SynthConfig {
        SynthConfig {
            aux_questions: 30,
            target_train: 30,
            target_validation: 10,
            background_docs: 40,
            ..Default::default()
        }
    }

    #[test]
    fn datasets_validate_and_have_expected_shape() {
        let c = generate(&small()).unwrap();
        for ds in [&c.aux, &c.target_train, &c.target_validation] {
            ds.validate().unwrap();
        }
        assert_eq!(c.target_train.examples.len(), 30);
        assert!(c
            .target_train
            .examples
            .iter()
            .all(|e| e.candidate_doc_ids.len() == 20));
        assert!(c
            .aux
            .examples
            .iter()
            .all(|e| e.candidate_doc_ids.len() == 1 && e.answerable));
        let unanswerable = c
            .target_train
            .examples
            .iter()
            .chain(&c.target_validation.examples)
            .filter(|e| !e.answerable)
            .count();
        assert!((3..=20).contains(&unanswerable), "{unanswerable}");
    }

    #[test]
    fn answers_follow_the_planted_pattern() {
        let c = generate(&small()).unwrap();
        for ds in [&c.aux, &c.target_train] {
            for ex in ds.examples.iter().filter(|e| e.answerable) {
                let gold = ex.gold.as_ref().unwrap();
                let doc = &ds.documents[&gold.doc_id];
                assert_eq!(doc.tokens[gold.end], ".");
                assert_eq!(doc.tokens[gold.start - 2], ex.question.tokens[0]);
                assert!((9..=15).contains(&gold.token_len()));
            }
        }
    }

    #[test]
    fn only_the_gold_document_plants_the_question_keyword() {
        let c = generate(&small()).unwrap();
        let first = c
            .target_train
            .examples
            .iter()
            .find(|e| e.answerable)
            .unwrap();
        let gold = first.gold.as_ref().unwrap();
        let marker = c.target_train.documents[&gold.doc_id].tokens[gold.start - 1].clone();
        for ds in [&c.target_train, &c.target_validation] {
            for ex in &ds.examples {
                let kw = &ex.question.tokens[0];
                for doc_id in &ex.candidate_doc_ids {
                    let planted = ds.documents[doc_id]
                        .tokens
                        .windows(2)
                        .any(|w| &w[0] == kw && w[1] == marker);
                    let is_gold = ex.gold.as_ref().is_some_and(|g| &g.doc_id == doc_id);
                    assert_eq!(planted, is_gold, "{} / {doc_id}", ex.question.question_id);
                }
            }
        }
    }

    #[test]
    fn validation_keywords_occur_in_training() {
        let c = generate(&small()).unwrap();
        let train: BTreeSet<&String> = c
            .target_train
            .examples
            .iter()
            .map(|e| &e.question.tokens[0])
            .collect();
        let seen = c
            .target_validation
            .examples
            .iter()
            .filter(|e| train.contains(&e.question.tokens[0]))
            .count();
        assert!(seen > 0);
    }

    #[test]
    fn vocabularies_overlap_by_about_half() {
        let c = generate(&small()).unwrap();
        let words = |ds: &Dataset| -> BTreeSet<String> {
            ds.documents
                .values()
                .flat_map(|d| d.tokens.iter().cloned())
                .collect()
        };
        let aux = words(&c.aux);
        let tgt = words(&c.target_train);
        let shared = aux.intersection(&tgt).count() as f64;
        let ratio = shared / tgt.len() as f64;
        assert!((0.3..0.7).contains(&ratio), "{ratio}");
    }

    #[test]
    fn deterministic_in_seed() {
        assert_eq!(
            generate(&small()).unwrap().files,
            generate(&small()).unwrap().files
        );
        let other = SynthConfig { seed: 1, ..small() };
        assert_ne!(
            generate(&small()).unwrap().files,
            generate(&other).unwrap().files
        );
    }

    #[test]
    fn written_files_ingest_to_the_same_datasets() {
        use crate::corpus::{ingest_dataset, DatasetFormat, IngestOptions};
        let c = generate(&small()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = c.write(dir.path()).unwrap();
        let aux = ingest_dataset(
            &p.aux_questions,
            &p.aux_corpus,
            DatasetFormat::AuxiliaryQaJson,
            &IngestOptions {
                name: "synth-aux".into(),
                split: Split::Train,
                domain_tag: DomainTag::Auxiliary,
            },
        )
        .unwrap();
        assert_eq!(aux, c.aux);
        let val = ingest_dataset(
            &p.target_validation_questions,
            &p.target_corpus,
            DatasetFormat::TargetQaJson,
            &IngestOptions {
                name: "synth-target".into(),
                split: Split::Validation,
                domain_tag: DomainTag::Target,
            },
        )
        .unwrap();
        assert_eq!(val, c.target_validation);
    }
}
