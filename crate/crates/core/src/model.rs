//! Encoder plus reader and matcher heads over one shared parameter set.

use ndarray::{Array2, ArrayView1, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::chunking::Block;
use crate::encoder::{
    normal_matrix, Encoder, EncoderConfig, EncoderPass, Gradients, ParameterSet, INIT_STD,
};
use crate::error::{Error, Result};
use crate::heads::{self, MatchScore, Pooling, ReaderScores};

pub const HEAD_START: &str = "heads.reader.start";
pub const HEAD_END: &str = "heads.reader.end";
pub const HEAD_MATCH: &str = "heads.matcher.weight";

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ModelConfig {
    pub encoder: EncoderConfig,
    pub pooling: Pooling,
}

#[derive(Debug, Clone)]
pub struct BlockForward {
    pub encoder: EncoderPass,
    pub reader: ReaderScores,
    pub matcher: MatchScore,
}

/// Loss gradients w.r.t. the three head outputs of one block.
#[derive(Debug, Clone, Default)]
pub struct OutputGrads {
    pub start_logits: Vec<f64>,
    pub end_logits: Vec<f64>,
    pub dr_logit: f64,
}

#[derive(Debug, Clone)]
pub struct JointModel {
    pub config: ModelConfig,
    pub params: ParameterSet,
    encoder: Encoder,
    w_start: usize,
    w_end: usize,
    w_dr: usize,
}

impl JointModel {
    /// Fresh encoder from `config.encoder.seed`; heads from `head_seed`.
    pub fn new(config: ModelConfig, head_seed: u64) -> Result<Self> {
        let mut params = ParameterSet::new();
        let encoder = Encoder::init(config.encoder.clone(), &mut params)?;
        let d = config.encoder.d;
        let w_start = params.push(HEAD_START, Array2::zeros((1, d)));
        let w_end = params.push(HEAD_END, Array2::zeros((1, d)));
        let w_dr = params.push(HEAD_MATCH, Array2::zeros((1, d)));
        let mut model = Self {
            config,
            params,
            encoder,
            w_start,
            w_end,
            w_dr,
        };
        model.reinit_heads(head_seed);
        Ok(model)
    }

    /// Wraps a parameter set that already holds every tensor (checkpoint load).
    pub fn from_params(config: ModelConfig, params: ParameterSet) -> Result<Self> {
        let encoder = Encoder::attach(config.encoder.clone(), &params)?;
        let d = config.encoder.d;
        let head = |name: &str| -> Result<usize> {
            let id = params
                .id(name)
                .ok_or_else(|| Error::MissingTensor(name.to_string()))?;
            let found = params.value(id).shape().to_vec();
            if found != [1, d] {
                return Err(Error::ShapeMismatch {
                    name: name.to_string(),
                    expected: vec![1, d],
                    found,
                });
            }
            Ok(id)
        };
        let (w_start, w_end, w_dr) = (head(HEAD_START)?, head(HEAD_END)?, head(HEAD_MATCH)?);
        Ok(Self {
            config,
            params,
            encoder,
            w_start,
            w_end,
            w_dr,
        })
    }

    pub fn encoder(&self) -> &Encoder {
        &self.encoder
    }

    pub fn head_ids(&self) -> [usize; 3] {
        [self.w_start, self.w_end, self.w_dr]
    }

    pub fn encoder_ids(&self) -> Vec<usize> {
        self.encoder.tensor_ids()
    }

    pub fn reinit_heads(&mut self, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = self.config.encoder.d;
        for id in self.head_ids() {
            self.params.param_mut(id).value = normal_matrix(&mut rng, 1, d, INIT_STD);
        }
    }

    /// Top `k` layers plus both heads trainable; see [`Encoder::freeze_layers`].
    pub fn freeze_layers(&mut self, k: usize) -> Result<()> {
        self.encoder.freeze_layers(&mut self.params, k)?;
        for id in self.head_ids() {
            self.params.param_mut(id).trainable = true;
        }
        Ok(())
    }

    fn row(&self, id: usize) -> ArrayView1<'_, f64> {
        self.params.value(id).index_axis(Axis(0), 0)
    }

    pub fn forward(&self, block: &Block, record: bool) -> Result<BlockForward> {
        let pass = self.encoder.forward(&self.params, block, record)?;
        let reader = heads::reader_forward(
            pass.output.h.view(),
            self.row(self.w_start),
            self.row(self.w_end),
            heads::reader_mask(block),
        );
        let matcher =
            heads::matcher_forward(&pass.output, self.row(self.w_dr), self.config.pooling);
        Ok(BlockForward {
            encoder: pass,
            reader,
            matcher,
        })
    }

    /// Accumulates parameter gradients for one block into `grads`.
    pub fn backward(
        &self,
        fwd: &BlockForward,
        out: &OutputGrads,
        grads: &mut Gradients,
    ) -> Result<()> {
        if fwd.encoder.tape.is_none() {
            return Err(Error::NoTape);
        }
        let m = fwd.reader.len();
        let zeros = vec![0.0; m];
        let ds = if out.start_logits.is_empty() {
            &zeros
        } else {
            &out.start_logits
        };
        let de = if out.end_logits.is_empty() {
            &zeros
        } else {
            &out.end_logits
        };
        let hg = heads::heads_backward(
            &fwd.encoder.output,
            self.row(self.w_start),
            self.row(self.w_end),
            self.row(self.w_dr),
            self.config.pooling,
            ds,
            de,
            out.dr_logit,
        );
        for (id, g) in [
            (self.w_start, &hg.d_w_start),
            (self.w_end, &hg.d_w_end),
            (self.w_dr, &hg.d_w_dr),
        ] {
            if self.params.is_trainable(id) {
                let mut row = grads.tensors[id].row_mut(0);
                row += g;
            }
        }
        self.encoder
            .backward(&self.params, &fwd.encoder, &hg.d_h, grads)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chunking::{make_blocks_from_ids, ChunkConfig};

    fn model() -> JointModel {
        let cfg = ModelConfig {
            encoder: EncoderConfig {
                vocab_size: 30,
                d: 8,
                layers: 2,
                heads: 2,
                max_len: 16,
                ffn_dim: 16,
                seed: 1,
            },
            pooling: Pooling::Mean,
        };
        JointModel::new(cfg, 2).unwrap()
    }

    #[test]
    fn forward_probabilities_are_normalized() {
        let m = model();
        let b = make_blocks_from_ids(
            "q",
            &[5],
            "d",
            &[10, 11, 12],
            &ChunkConfig {
                max_len: 16,
                stride: 2,
            },
        )
        .unwrap()
        .remove(0);
        let f = m.forward(&b, false).unwrap();
        let total: f64 = f.reader.p_start.iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
        for (i, &p) in f.reader.p_start.iter().enumerate() {
            if !(i == 0 || b.doc_region().contains(&i)) {
                assert_eq!(p, 0.0);
            }
        }
        assert!(f.matcher.p_dr > 0.0 && f.matcher.p_dr < 1.0);
    }

    #[test]
    fn freezing_keeps_heads_trainable() {
        let mut m = model();
        m.freeze_layers(0).unwrap();
        for p in m.params.iter() {
            assert_eq!(p.trainable, p.name.starts_with("heads."), "{}", p.name);
        }
    }

    #[test]
    fn head_reinit_leaves_encoder_untouched() {
        let mut m = model();
        let before = m.params.clone();
        m.reinit_heads(99);
        for (a, b) in before.iter().zip(m.params.iter()) {
            assert_eq!(
                a.value == b.value,
                !a.name.starts_with("heads."),
                "{}",
                a.name
            );
        }
    }

    #[test]
    fn round_trip_through_params() {
        let m = model();
        let again = JointModel::from_params(m.config.clone(), m.params.clone()).unwrap();
        assert_eq!(again.params.content_hash(), m.params.content_hash());
        let mut wrong = m.config.clone();
        wrong.encoder.d = 4;
        wrong.encoder.ffn_dim = 16;
        assert!(matches!(
            JointModel::from_params(wrong, m.params.clone()),
            Err(Error::ShapeMismatch { .. })
        ));
    }
}
