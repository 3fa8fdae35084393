//! Sliding-window blocks over a (question, document) pair.
//!
//! Each block is `[CLS] question [SEP] window [SEP] [PAD]...` of exactly `m`
//! positions. Windows advance `t` document tokens at a time; the window
//! capacity is `m - n - 3` because the three markers take positions too.
//! Document coordinates are 0-based token indices; [`DocWindow::one_based`]
//! gives the inclusive 1-based form `(i_start, i_end)`.

use serde::{Deserialize, Serialize};

use crate::corpus::{AnswerSpan, Document, Question, Vocabulary, CLS_ID, PAD_ID, SEP_ID};
use crate::error::{Error, Result};

/// Number of marker positions in every block: `[CLS]` and two `[SEP]`s.
pub const MARKERS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChunkConfig {
    /// Total sequence length `m`.
    pub max_len: usize,
    /// Stride `t` between consecutive window starts.
    pub stride: usize,
}

impl Default for ChunkConfig {
    fn default() -> Self {
        Self {
            max_len: 512,
            stride: 192,
        }
    }
}

/// Half-open range `[start, end)` of document token indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DocWindow {
    pub start: usize,
    pub end: usize,
}

impl DocWindow {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end == self.start
    }

    pub fn contains(&self, start: usize, end: usize) -> bool {
        start >= self.start && end < self.end
    }

    /// Inclusive 1-based `(i_start, i_end)`.
    pub fn one_based(&self) -> (usize, usize) {
        (self.start + 1, self.end)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlockLabel {
    NoAnswer,
    /// Inclusive sequence positions inside the document region.
    Span {
        start: usize,
        end: usize,
    },
}

impl BlockLabel {
    /// Sequence positions as used by the reader loss; `(0, 0)` for no-answer.
    pub fn positions(&self) -> (usize, usize) {
        match *self {
            BlockLabel::NoAnswer => (0, 0),
            BlockLabel::Span { start, end } => (start, end),
        }
    }

    pub fn is_positive(&self) -> bool {
        matches!(self, BlockLabel::Span { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Block {
    pub question_id: String,
    pub doc_id: String,
    /// 1-based block number within the document.
    pub block_index: usize,
    pub token_ids: Vec<usize>,
    /// 0 for `[CLS] question [SEP]`, 1 for the document window and its `[SEP]`.
    pub segment_ids: Vec<usize>,
    pub question_len: usize,
    pub window: DocWindow,
    pub label: BlockLabel,
}

impl Block {
    pub fn len(&self) -> usize {
        self.token_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.token_ids.is_empty()
    }

    /// Sequence position of the first document token.
    pub fn doc_offset(&self) -> usize {
        self.question_len + 2
    }

    /// Sequence positions `[start, end)` holding document tokens.
    pub fn doc_region(&self) -> std::ops::Range<usize> {
        let off = self.doc_offset();
        off..off + self.window.len()
    }

    /// Number of non-pad positions.
    pub fn real_len(&self) -> usize {
        self.token_ids.iter().filter(|&&t| t != PAD_ID).count()
    }

    pub fn attention_mask(&self) -> Vec<bool> {
        self.token_ids.iter().map(|&t| t != PAD_ID).collect()
    }
}

/// Document windows for a document of `doc_len` tokens and a question of
/// `question_len` tokens.
pub fn windows(
    doc_len: usize,
    question_len: usize,
    config: &ChunkConfig,
) -> Result<Vec<DocWindow>> {
    let m = config.max_len;
    if m < MARKERS + 2 || question_len + MARKERS + 1 > m {
        return Err(Error::QuestionTooLong {
            len: question_len,
            max: m.saturating_sub(MARKERS + 1),
        });
    }
    let capacity = m - question_len - MARKERS;
    let t = config.stride;
    if t == 0 || t > capacity {
        return Err(Error::InvalidConfig(format!(
            "stride {t} must be in 1..={capacity} (window capacity for m={m}, n={question_len})"
        )));
    }
    if doc_len <= capacity {
        return Ok(vec![DocWindow {
            start: 0,
            end: doc_len,
        }]);
    }
    let count = 1 + (doc_len - capacity).div_ceil(t);
    Ok((0..count)
        .map(|i| DocWindow {
            start: i * t,
            end: (capacity + i * t).min(doc_len),
        })
        .collect())
}

/// Block count `b` for a document of `doc_len` tokens.
pub fn block_count(doc_len: usize, question_len: usize, config: &ChunkConfig) -> Result<usize> {
    windows(doc_len, question_len, config).map(|w| w.len())
}

pub fn make_blocks(
    question: &Question,
    document: &Document,
    vocab: &Vocabulary,
    config: &ChunkConfig,
) -> Result<Vec<Block>> {
    let question_ids = vocab.ids(&question.tokens);
    let doc_ids = vocab.ids(&document.tokens);
    make_blocks_from_ids(
        &question.question_id,
        &question_ids,
        &document.doc_id,
        &doc_ids,
        config,
    )
}

pub fn make_blocks_from_ids(
    question_id: &str,
    question_ids: &[usize],
    doc_id: &str,
    doc_ids: &[usize],
    config: &ChunkConfig,
) -> Result<Vec<Block>> {
    let m = config.max_len;
    let n = question_ids.len();
    let wins = windows(doc_ids.len(), n, config)?;
    Ok(wins
        .into_iter()
        .enumerate()
        .map(|(i, window)| {
            let mut token_ids = Vec::with_capacity(m);
            let mut segment_ids = Vec::with_capacity(m);
            token_ids.push(CLS_ID);
            token_ids.extend_from_slice(question_ids);
            token_ids.push(SEP_ID);
            segment_ids.resize(token_ids.len(), 0);
            token_ids.extend_from_slice(&doc_ids[window.start..window.end]);
            token_ids.push(SEP_ID);
            segment_ids.resize(token_ids.len(), 1);
            token_ids.resize(m, PAD_ID);
            segment_ids.resize(m, 0);
            Block {
                question_id: question_id.to_string(),
                doc_id: doc_id.to_string(),
                block_index: i + 1,
                token_ids,
                segment_ids,
                question_len: n,
                window,
                label: BlockLabel::NoAnswer,
            }
        })
        .collect())
}

/// Block-local label for a document span. Only full containment counts;
/// a span straddling the window edge is a negative block.
pub fn project_span_to_block(block: &Block, span: &AnswerSpan) -> BlockLabel {
    if span.no_answer || span.doc_id != block.doc_id || !block.window.contains(span.start, span.end)
    {
        return BlockLabel::NoAnswer;
    }
    let shift = block.doc_offset();
    BlockLabel::Span {
        start: span.start - block.window.start + shift,
        end: span.end - block.window.start + shift,
    }
}

/// Inverse of [`project_span_to_block`]. `Ok(None)` for the no-answer label.
pub fn project_span_to_document(block: &Block, label: &BlockLabel) -> Result<Option<AnswerSpan>> {
    let (start, end) = match *label {
        BlockLabel::NoAnswer => return Ok(None),
        BlockLabel::Span { start: 0, end: 0 } => return Ok(None),
        BlockLabel::Span { start, end } => (start, end),
    };
    let region = block.doc_region();
    if start > end || !region.contains(&start) || !region.contains(&end) {
        return Err(Error::InvalidSpan(format!(
            "block positions ({start}, {end}) outside document region {region:?}"
        )));
    }
    let base = block.window.start;
    let off = block.doc_offset();
    Ok(Some(AnswerSpan::new(
        block.doc_id.clone(),
        start - off + base,
        end - off + base,
    )))
}

/// Sets every block's label from the gold span; returns the number of
/// positive blocks (zero means the span straddles every window edge).
pub fn label_blocks(blocks: &mut [Block], gold: Option<&AnswerSpan>) -> usize {
    let mut positives = 0;
    for block in blocks.iter_mut() {
        block.label = match gold {
            Some(span) => project_span_to_block(block, span),
            None => BlockLabel::NoAnswer,
        };
        positives += block.label.is_positive() as usize;
    }
    positives
}
