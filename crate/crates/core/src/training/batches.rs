//! Labelled training blocks and the per-epoch batch stream with negative
//! sampling.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::chunking::{label_blocks, make_blocks, Block, ChunkConfig};
use crate::corpus::{Dataset, Vocabulary};
use crate::error::{Error, Result};
use crate::losses::{dr_class_weights, ClassWeights};

use super::objective::TrainItem;

/// Which blocks count as matching positives.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DrLabelMode {
    /// Every block of the gold document.
    #[default]
    Document,
    /// Only blocks that fully contain the gold span.
    Span,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabelledBlock {
    pub block: Block,
    pub dr_label: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuestionBlocks {
    pub question_id: String,
    pub blocks: Vec<LabelledBlock>,
}

impl QuestionBlocks {
    fn split(&self) -> (Vec<usize>, Vec<usize>) {
        (0..self.blocks.len()).partition(|&i| self.blocks[i].dr_label)
    }
}

/// Every block of every (question, candidate) pair with reader and matcher
/// labels.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainingSet {
    pub questions: Vec<QuestionBlocks>,
}

/// Reference to one block: (question index, block index).
pub type BlockRef = (usize, usize);

impl TrainingSet {
    pub fn block(&self, r: BlockRef) -> &LabelledBlock {
        &self.questions[r.0].blocks[r.1]
    }

    pub fn item(&self, r: BlockRef) -> TrainItem<'_> {
        let b = self.block(r);
        TrainItem::from_block(&b.block, b.dr_label)
    }

    pub fn len(&self) -> usize {
        self.questions.iter().map(|q| q.blocks.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// (matching positives, matching negatives) over all blocks.
    pub fn label_counts(&self) -> (usize, usize) {
        let pos = self
            .questions
            .iter()
            .flat_map(|q| &q.blocks)
            .filter(|b| b.dr_label)
            .count();
        (pos, self.len() - pos)
    }
}

pub fn prepare_training_set(
    dataset: &Dataset,
    vocab: &Vocabulary,
    chunk: &ChunkConfig,
    mode: DrLabelMode,
) -> Result<TrainingSet> {
    let mut questions = Vec::with_capacity(dataset.examples.len());
    for ex in &dataset.examples {
        let gold = ex.gold.as_ref().filter(|g| ex.answerable && !g.no_answer);
        let mut blocks = Vec::new();
        for doc_id in &ex.candidate_doc_ids {
            let doc = dataset
                .document(doc_id)
                .ok_or_else(|| Error::DanglingDocIds(vec![doc_id.clone()]))?;
            let mut doc_blocks = make_blocks(&ex.question, doc, vocab, chunk)?;
            let is_gold_doc = gold.is_some_and(|g| &g.doc_id == doc_id);
            label_blocks(&mut doc_blocks, gold.filter(|_| is_gold_doc));
            blocks.extend(doc_blocks.into_iter().map(|block| {
                let dr_label = match mode {
                    DrLabelMode::Document => is_gold_doc,
                    DrLabelMode::Span => block.label.is_positive(),
                };
                LabelledBlock { block, dr_label }
            }));
        }
        questions.push(QuestionBlocks {
            question_id: ex.question.question_id.clone(),
            blocks,
        });
    }
    Ok(TrainingSet { questions })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BatchConfig {
    pub batch_size: usize,
    /// Negative blocks sampled per positive block.
    pub negative_ratio: usize,
}

impl Default for BatchConfig {
    fn default() -> Self {
        Self {
            batch_size: 16,
            negative_ratio: 3,
        }
    }
}

fn epoch_rng(seed: u64, epoch: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ (epoch as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

fn sample_from<R: Rng>(rng: &mut R, pool: &[BlockRef], n: usize) -> Vec<BlockRef> {
    if pool.is_empty() {
        return Vec::new();
    }
    let mut shuffled = pool.to_vec();
    shuffled.shuffle(rng);
    let mut out: Vec<BlockRef> = shuffled.into_iter().take(n).collect();
    while out.len() < n {
        out.push(pool[rng.gen_range(0..pool.len())]);
    }
    out
}

/// Batches of one epoch. Every positive block appears once, followed by
/// `negative_ratio` negatives from the same question (from any question
/// when its own pool is empty). Questions without positives contribute one
/// group of `negative_ratio` of their own negatives. Groups are shuffled
/// and then cut into batches; the stream depends only on `seed` and `epoch`.
pub fn build_batches(
    set: &TrainingSet,
    config: &BatchConfig,
    seed: u64,
    epoch: usize,
) -> Vec<Vec<BlockRef>> {
    let mut rng = epoch_rng(seed, epoch);
    let all_negatives: Vec<BlockRef> = set
        .questions
        .iter()
        .enumerate()
        .flat_map(|(qi, q)| q.split().1.into_iter().map(move |bi| (qi, bi)))
        .collect();
    let mut groups: Vec<Vec<BlockRef>> = Vec::new();
    for (qi, q) in set.questions.iter().enumerate() {
        let (pos, neg) = q.split();
        let own: Vec<BlockRef> = neg.into_iter().map(|bi| (qi, bi)).collect();
        let pool = if own.is_empty() { &all_negatives } else { &own };
        if pos.is_empty() {
            if !own.is_empty() {
                groups.push(sample_from(&mut rng, &own, config.negative_ratio));
            }
            continue;
        }
        for bi in pos {
            let mut group = vec![(qi, bi)];
            group.extend(sample_from(&mut rng, pool, config.negative_ratio));
            groups.push(group);
        }
    }
    groups.shuffle(&mut rng);
    let flat: Vec<BlockRef> = groups.into_iter().flatten().collect();
    flat.chunks(config.batch_size.max(1))
        .map(<[BlockRef]>::to_vec)
        .collect()
}

/// Matching class weights for a stage. `Auto` counts labels over the first
/// epoch's sampled stream.
pub fn resolve_class_weights(
    set: &TrainingSet,
    batches: &[Vec<BlockRef>],
    weights: ClassWeights,
) -> Result<(f64, f64)> {
    match weights {
        ClassWeights::Fixed { w_pos, w_neg } => Ok((w_pos, w_neg)),
        ClassWeights::Auto => {
            let pos = batches
                .iter()
                .flatten()
                .filter(|&&r| set.block(r).dr_label)
                .count();
            let total: usize = batches.iter().map(Vec::len).sum();
            dr_class_weights(pos, total - pos)
        }
    }
}
