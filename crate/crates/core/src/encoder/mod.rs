//! Contextual encoder: a BERT-style post-norm transformer over one block.
//!
//! `encode` returns the per-token matrix `H` (m×d) with CLS and mean pooled
//! vectors. A recorded pass keeps the activations needed by `backward`,
//! which propagates an output gradient `dL/dH` into every trainable tensor.
//! All arithmetic is f64 and single-threaded, so results are bitwise
//! reproducible for a fixed parameter set.

mod params;

use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::chunking::Block;
use crate::corpus::PAD_ID;
use crate::error::{Error, Result};

pub use params::{normal_matrix, Gradients, Param, ParameterSet};

const LN_EPS: f64 = 1e-5;
pub const INIT_STD: f64 = 0.02;
const SEGMENTS: usize = 2;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub vocab_size: usize,
    /// Representation width `d`.
    pub d: usize,
    pub layers: usize,
    pub heads: usize,
    /// Sequence length `m`.
    pub max_len: usize,
    /// Feed-forward inner width.
    pub ffn_dim: usize,
    pub seed: u64,
}

impl EncoderConfig {
    /// Desk-scale defaults: 2 layers, 4 heads, d = 64, m = 128.
    pub fn desk(vocab_size: usize) -> Self {
        Self {
            vocab_size,
            d: 64,
            layers: 2,
            heads: 4,
            max_len: 128,
            ffn_dim: 256,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.heads == 0 || !self.d.is_multiple_of(self.heads) {
            return Err(Error::InvalidConfig(format!(
                "d = {} not divisible by {} heads",
                self.d, self.heads
            )));
        }
        if self.max_len < 16 {
            return Err(Error::InvalidConfig(format!(
                "max_len {} < 16",
                self.max_len
            )));
        }
        if self.vocab_size == 0 || self.ffn_dim == 0 {
            return Err(Error::InvalidConfig("empty vocabulary or ffn width".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderOutput {
    /// Per-token representations `H` (m×d).
    pub h: Array2<f64>,
    pub h_cls: Array1<f64>,
    /// Mean over non-pad rows of `H`.
    pub h_mean: Array1<f64>,
    /// True at non-pad positions.
    pub mask: Vec<bool>,
}

impl EncoderOutput {
    pub fn real_tokens(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }
}

#[derive(Debug, Clone)]
struct NormTape {
    xhat: Array2<f64>,
    inv_std: Array1<f64>,
}

#[derive(Debug, Clone)]
struct LayerTape {
    input: Array2<f64>,
    q: Array2<f64>,
    k: Array2<f64>,
    v: Array2<f64>,
    attn: Vec<Array2<f64>>,
    ctx: Array2<f64>,
    norm1: NormTape,
    x1: Array2<f64>,
    ff_pre: Array2<f64>,
    ff_act: Array2<f64>,
    norm2: NormTape,
}

/// Activations recorded by a training-mode forward pass.
#[derive(Debug, Clone)]
pub struct Tape {
    token_ids: Vec<usize>,
    segment_ids: Vec<usize>,
    embed_norm: NormTape,
    layers: Vec<LayerTape>,
}

#[derive(Debug, Clone)]
pub struct EncoderPass {
    pub output: EncoderOutput,
    pub tape: Option<Tape>,
}

#[derive(Debug, Clone, Copy)]
struct LayerIds {
    wq: usize,
    bq: usize,
    wk: usize,
    bk: usize,
    wv: usize,
    bv: usize,
    wo: usize,
    bo: usize,
    ln1_g: usize,
    ln1_b: usize,
    w1: usize,
    b1: usize,
    w2: usize,
    b2: usize,
    ln2_g: usize,
    ln2_b: usize,
}

impl LayerIds {
    fn all(&self) -> [usize; 16] {
        [
            self.wq, self.bq, self.wk, self.bk, self.wv, self.bv, self.wo, self.bo, self.ln1_g,
            self.ln1_b, self.w1, self.b1, self.w2, self.b2, self.ln2_g, self.ln2_b,
        ]
    }
}

#[derive(Debug, Clone, Copy)]
struct EmbedIds {
    token: usize,
    position: usize,
    segment: usize,
    ln_g: usize,
    ln_b: usize,
}

impl EmbedIds {
    fn all(&self) -> [usize; 5] {
        [
            self.token,
            self.position,
            self.segment,
            self.ln_g,
            self.ln_b,
        ]
    }
}

/// Index layout of encoder tensors inside a [`ParameterSet`]. Tensor names
/// are prefixed `encoder.`.
#[derive(Debug, Clone)]
pub struct Encoder {
    config: EncoderConfig,
    embed: EmbedIds,
    layers: Vec<LayerIds>,
}

pub fn layer_prefix(layer: usize) -> String {
    format!("encoder.layer.{layer}.")
}

impl Encoder {
    /// Adds freshly initialized encoder tensors to `params`.
    pub fn init(config: EncoderConfig, params: &mut ParameterSet) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let d = config.d;
        let f = config.ffn_dim;
        let mut normal = |rows, cols| normal_matrix(&mut rng, rows, cols, INIT_STD);
        let embed = EmbedIds {
            token: params.push("encoder.embed.token", normal(config.vocab_size, d)),
            position: params.push("encoder.embed.position", normal(config.max_len, d)),
            segment: params.push("encoder.embed.segment", normal(SEGMENTS, d)),
            ln_g: params.push("encoder.embed.norm.gamma", Array2::ones((1, d))),
            ln_b: params.push("encoder.embed.norm.beta", Array2::zeros((1, d))),
        };
        let mut layers = Vec::with_capacity(config.layers);
        for l in 0..config.layers {
            let p = layer_prefix(l);
            let mut add = |name: &str, value: Array2<f64>| params.push(format!("{p}{name}"), value);
            layers.push(LayerIds {
                wq: add("attn.query.weight", normal(d, d)),
                bq: add("attn.query.bias", Array2::zeros((1, d))),
                wk: add("attn.key.weight", normal(d, d)),
                bk: add("attn.key.bias", Array2::zeros((1, d))),
                wv: add("attn.value.weight", normal(d, d)),
                bv: add("attn.value.bias", Array2::zeros((1, d))),
                wo: add("attn.output.weight", normal(d, d)),
                bo: add("attn.output.bias", Array2::zeros((1, d))),
                ln1_g: add("attn.norm.gamma", Array2::ones((1, d))),
                ln1_b: add("attn.norm.beta", Array2::zeros((1, d))),
                w1: add("ffn.inner.weight", normal(d, f)),
                b1: add("ffn.inner.bias", Array2::zeros((1, f))),
                w2: add("ffn.outer.weight", normal(f, d)),
                b2: add("ffn.outer.bias", Array2::zeros((1, d))),
                ln2_g: add("ffn.norm.gamma", Array2::ones((1, d))),
                ln2_b: add("ffn.norm.beta", Array2::zeros((1, d))),
            });
        }
        Ok(Self {
            config,
            embed,
            layers,
        })
    }

    /// Rebuilds the layout for a parameter set that already holds the tensors.
    pub fn attach(config: EncoderConfig, params: &ParameterSet) -> Result<Self> {
        config.validate()?;
        let id = |name: String, shape: (usize, usize)| -> Result<usize> {
            let i = params
                .id(&name)
                .ok_or_else(|| Error::MissingTensor(name.clone()))?;
            let found = params.value(i).shape().to_vec();
            if found != [shape.0, shape.1] {
                return Err(Error::ShapeMismatch {
                    name,
                    expected: vec![shape.0, shape.1],
                    found,
                });
            }
            Ok(i)
        };
        let d = config.d;
        let f = config.ffn_dim;
        let embed = EmbedIds {
            token: id("encoder.embed.token".into(), (config.vocab_size, d))?,
            position: id("encoder.embed.position".into(), (config.max_len, d))?,
            segment: id("encoder.embed.segment".into(), (SEGMENTS, d))?,
            ln_g: id("encoder.embed.norm.gamma".into(), (1, d))?,
            ln_b: id("encoder.embed.norm.beta".into(), (1, d))?,
        };
        let mut layers = Vec::with_capacity(config.layers);
        for l in 0..config.layers {
            let p = layer_prefix(l);
            let n = |s: &str| format!("{p}{s}");
            layers.push(LayerIds {
                wq: id(n("attn.query.weight"), (d, d))?,
                bq: id(n("attn.query.bias"), (1, d))?,
                wk: id(n("attn.key.weight"), (d, d))?,
                bk: id(n("attn.key.bias"), (1, d))?,
                wv: id(n("attn.value.weight"), (d, d))?,
                bv: id(n("attn.value.bias"), (1, d))?,
                wo: id(n("attn.output.weight"), (d, d))?,
                bo: id(n("attn.output.bias"), (1, d))?,
                ln1_g: id(n("attn.norm.gamma"), (1, d))?,
                ln1_b: id(n("attn.norm.beta"), (1, d))?,
                w1: id(n("ffn.inner.weight"), (d, f))?,
                b1: id(n("ffn.inner.bias"), (1, f))?,
                w2: id(n("ffn.outer.weight"), (f, d))?,
                b2: id(n("ffn.outer.bias"), (1, d))?,
                ln2_g: id(n("ffn.norm.gamma"), (1, d))?,
                ln2_b: id(n("ffn.norm.beta"), (1, d))?,
            });
        }
        Ok(Self {
            config,
            embed,
            layers,
        })
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.config
    }

    /// Ids of every encoder tensor, embeddings first.
    pub fn tensor_ids(&self) -> Vec<usize> {
        let mut ids = self.embed.all().to_vec();
        for l in &self.layers {
            ids.extend(l.all());
        }
        ids
    }

    pub fn embedding_ids(&self) -> Vec<usize> {
        self.embed.all().to_vec()
    }

    pub fn layer_ids(&self, layer: usize) -> Vec<usize> {
        self.layers[layer].all().to_vec()
    }

    fn check_block(&self, block: &Block) -> Result<()> {
        let m = self.config.max_len;
        if block.token_ids.len() != m || block.segment_ids.len() != m {
            return Err(Error::InvalidConfig(format!(
                "block length {} does not match encoder length {m}",
                block.token_ids.len()
            )));
        }
        if let Some(&id) = block
            .token_ids
            .iter()
            .find(|&&t| t >= self.config.vocab_size)
        {
            return Err(Error::TokenOutOfRange {
                id,
                vocab_size: self.config.vocab_size,
            });
        }
        if let Some(&s) = block.segment_ids.iter().find(|&&s| s >= SEGMENTS) {
            return Err(Error::InvalidConfig(format!("segment id {s} out of range")));
        }
        if block.token_ids.iter().all(|&t| t == PAD_ID) {
            return Err(Error::EmptyBlock);
        }
        Ok(())
    }

    /// Inference-mode forward pass.
    pub fn encode(&self, params: &ParameterSet, block: &Block) -> Result<EncoderOutput> {
        self.forward(params, block, false).map(|p| p.output)
    }

    pub fn forward(
        &self,
        params: &ParameterSet,
        block: &Block,
        record: bool,
    ) -> Result<EncoderPass> {
        self.check_block(block)?;
        let cfg = &self.config;
        let (m, d) = (cfg.max_len, cfg.d);
        let mask: Vec<bool> = block.token_ids.iter().map(|&t| t != PAD_ID).collect();

        let tok = params.value(self.embed.token);
        let pos = params.value(self.embed.position);
        let seg = params.value(self.embed.segment);
        let mut e = Array2::<f64>::zeros((m, d));
        for i in 0..m {
            let mut row = e.row_mut(i);
            row += &tok.row(block.token_ids[i]);
            row += &pos.row(i);
            row += &seg.row(block.segment_ids[i]);
        }
        let (mut x, embed_norm) = layer_norm(
            &e,
            params.value(self.embed.ln_g),
            params.value(self.embed.ln_b),
        );

        let mut layer_tapes = Vec::new();
        for ids in &self.layers {
            let (out, tape) = self.layer_forward(params, ids, x, &mask);
            x = out;
            if record {
                layer_tapes.push(tape);
            }
        }

        let h_cls = x.row(0).to_owned();
        let real = mask.iter().filter(|&&b| b).count() as f64;
        let mut h_mean = Array1::<f64>::zeros(d);
        for (i, _) in mask.iter().enumerate().filter(|(_, &b)| b) {
            h_mean += &x.row(i);
        }
        h_mean /= real;

        let tape = record.then(|| Tape {
            token_ids: block.token_ids.clone(),
            segment_ids: block.segment_ids.clone(),
            embed_norm,
            layers: layer_tapes,
        });
        Ok(EncoderPass {
            output: EncoderOutput {
                h: x,
                h_cls,
                h_mean,
                mask,
            },
            tape,
        })
    }

    fn layer_forward(
        &self,
        params: &ParameterSet,
        ids: &LayerIds,
        input: Array2<f64>,
        mask: &[bool],
    ) -> (Array2<f64>, LayerTape) {
        let cfg = &self.config;
        let dh = cfg.d / cfg.heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let v = |id| params.value(id);

        let q = input.dot(v(ids.wq)) + v(ids.bq);
        let k = input.dot(v(ids.wk)) + v(ids.bk);
        let val = input.dot(v(ids.wv)) + v(ids.bv);

        let mut ctx = Array2::<f64>::zeros(input.raw_dim());
        let mut attn = Vec::with_capacity(cfg.heads);
        for h in 0..cfg.heads {
            let cols = s![.., h * dh..(h + 1) * dh];
            let scores = q.slice(cols).dot(&k.slice(cols).t()) * scale;
            let probs = masked_softmax_rows(&scores, mask);
            ctx.slice_mut(cols).assign(&probs.dot(&val.slice(cols)));
            attn.push(probs);
        }
        let o = ctx.dot(v(ids.wo)) + v(ids.bo);
        let (x1, norm1) = layer_norm(&(&input + &o), v(ids.ln1_g), v(ids.ln1_b));

        let ff_pre = x1.dot(v(ids.w1)) + v(ids.b1);
        let ff_act = ff_pre.mapv(gelu);
        let ff_out = ff_act.dot(v(ids.w2)) + v(ids.b2);
        let (x2, norm2) = layer_norm(&(&x1 + &ff_out), v(ids.ln2_g), v(ids.ln2_b));

        let tape = LayerTape {
            input,
            q,
            k,
            v: val,
            attn,
            ctx,
            norm1,
            x1,
            ff_pre,
            ff_act,
            norm2,
        };
        (x2, tape)
    }

    /// Accumulates `dL/dθ` into `grads` for every trainable encoder tensor,
    /// given `d_h = dL/dH`. Frozen tensors are left untouched, and
    /// propagation stops below the lowest trainable layer.
    pub fn backward(
        &self,
        params: &ParameterSet,
        pass: &EncoderPass,
        d_h: &Array2<f64>,
        grads: &mut Gradients,
    ) -> Result<()> {
        let tape = pass.tape.as_ref().ok_or(Error::NoTape)?;
        let embed_trainable = self.embed.all().iter().any(|&i| params.is_trainable(i));
        // needs_below[l]: some tensor in layers < l (or the embeddings) is trainable.
        let mut needs_below = vec![embed_trainable; self.layers.len() + 1];
        for l in 0..self.layers.len() {
            needs_below[l + 1] =
                needs_below[l] || self.layers[l].all().iter().any(|&i| params.is_trainable(i));
        }

        let mut dx = d_h.clone();
        for l in (0..self.layers.len()).rev() {
            if !needs_below[l + 1] {
                return Ok(());
            }
            dx = self.layer_backward(params, &self.layers[l], &tape.layers[l], &dx, grads);
        }
        if !embed_trainable {
            return Ok(());
        }

        let de = layer_norm_backward(
            &dx,
            &tape.embed_norm,
            params,
            self.embed.ln_g,
            self.embed.ln_b,
            grads,
        );
        for (i, row) in de.axis_iter(Axis(0)).enumerate() {
            if params.is_trainable(self.embed.token) {
                let mut g = grads.tensors[self.embed.token].row_mut(tape.token_ids[i]);
                g += &row;
            }
            if params.is_trainable(self.embed.position) {
                let mut g = grads.tensors[self.embed.position].row_mut(i);
                g += &row;
            }
            if params.is_trainable(self.embed.segment) {
                let mut g = grads.tensors[self.embed.segment].row_mut(tape.segment_ids[i]);
                g += &row;
            }
        }
        Ok(())
    }

    fn layer_backward(
        &self,
        params: &ParameterSet,
        ids: &LayerIds,
        tape: &LayerTape,
        d_out: &Array2<f64>,
        grads: &mut Gradients,
    ) -> Array2<f64> {
        let cfg = &self.config;
        let dh = cfg.d / cfg.heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let v = |id| params.value(id);

        // x2 = LN2(x1 + ffn(x1))
        let d_sum2 = layer_norm_backward(d_out, &tape.norm2, params, ids.ln2_g, ids.ln2_b, grads);
        linear_param_grads(params, grads, ids.w2, ids.b2, &tape.ff_act, &d_sum2);
        let d_act = d_sum2.dot(&v(ids.w2).t());
        let d_pre = &d_act * &tape.ff_pre.mapv(gelu_grad);
        linear_param_grads(params, grads, ids.w1, ids.b1, &tape.x1, &d_pre);
        let d_x1 = &d_sum2 + &d_pre.dot(&v(ids.w1).t());

        // x1 = LN1(input + attn(input))
        let d_sum1 = layer_norm_backward(&d_x1, &tape.norm1, params, ids.ln1_g, ids.ln1_b, grads);
        linear_param_grads(params, grads, ids.wo, ids.bo, &tape.ctx, &d_sum1);
        let d_ctx = d_sum1.dot(&v(ids.wo).t());

        let mut d_q = Array2::<f64>::zeros(tape.q.raw_dim());
        let mut d_k = Array2::<f64>::zeros(tape.k.raw_dim());
        let mut d_v = Array2::<f64>::zeros(tape.v.raw_dim());
        for h in 0..cfg.heads {
            let cols = s![.., h * dh..(h + 1) * dh];
            let probs = &tape.attn[h];
            let d_ctx_h = d_ctx.slice(cols);
            let d_probs = d_ctx_h.dot(&tape.v.slice(cols).t());
            d_v.slice_mut(cols).assign(&probs.t().dot(&d_ctx_h));
            let d_scores = softmax_rows_backward(probs, &d_probs) * scale;
            d_q.slice_mut(cols)
                .assign(&d_scores.dot(&tape.k.slice(cols)));
            d_k.slice_mut(cols)
                .assign(&d_scores.t().dot(&tape.q.slice(cols)));
        }
        linear_param_grads(params, grads, ids.wq, ids.bq, &tape.input, &d_q);
        linear_param_grads(params, grads, ids.wk, ids.bk, &tape.input, &d_k);
        linear_param_grads(params, grads, ids.wv, ids.bv, &tape.input, &d_v);

        d_sum1 + d_q.dot(&v(ids.wq).t()) + d_k.dot(&v(ids.wk).t()) + d_v.dot(&v(ids.wv).t())
    }

    /// Makes the top `k` layers trainable and freezes the rest; embeddings
    /// stay trainable only when `k` covers every layer. Head tensors are not
    /// touched.
    pub fn freeze_layers(&self, params: &mut ParameterSet, k: usize) -> Result<()> {
        let layers = self.layers.len();
        if k > layers {
            return Err(Error::LayerOutOfRange { k, layers });
        }
        for id in self.embed.all() {
            params.param_mut(id).trainable = k == layers;
        }
        for (l, ids) in self.layers.iter().enumerate() {
            let trainable = l >= layers - k;
            for id in ids.all() {
                params.param_mut(id).trainable = trainable;
            }
        }
        Ok(())
    }
}

fn linear_param_grads(
    params: &ParameterSet,
    grads: &mut Gradients,
    w: usize,
    b: usize,
    input: &Array2<f64>,
    d_out: &Array2<f64>,
) {
    if params.is_trainable(w) {
        grads.tensors[w] += &input.t().dot(d_out);
    }
    if params.is_trainable(b) {
        grads.tensors[b] += &d_out.sum_axis(Axis(0)).insert_axis(Axis(0));
    }
}

fn layer_norm(x: &Array2<f64>, gamma: &Array2<f64>, beta: &Array2<f64>) -> (Array2<f64>, NormTape) {
    let d = x.ncols() as f64;
    let mut xhat = x.clone();
    let mut inv_std = Array1::<f64>::zeros(x.nrows());
    for (i, mut row) in xhat.axis_iter_mut(Axis(0)).enumerate() {
        let mean = row.sum() / d;
        row.mapv_inplace(|v| v - mean);
        let var = row.iter().map(|v| v * v).sum::<f64>() / d;
        let inv = 1.0 / (var + LN_EPS).sqrt();
        row.mapv_inplace(|v| v * inv);
        inv_std[i] = inv;
    }
    let y = &xhat * &gamma.row(0) + beta.row(0);
    (y, NormTape { xhat, inv_std })
}

fn layer_norm_backward(
    d_y: &Array2<f64>,
    tape: &NormTape,
    params: &ParameterSet,
    gamma: usize,
    beta: usize,
    grads: &mut Gradients,
) -> Array2<f64> {
    if params.is_trainable(gamma) {
        grads.tensors[gamma] += &(d_y * &tape.xhat).sum_axis(Axis(0)).insert_axis(Axis(0));
    }
    if params.is_trainable(beta) {
        grads.tensors[beta] += &d_y.sum_axis(Axis(0)).insert_axis(Axis(0));
    }
    let d = d_y.ncols() as f64;
    let mut d_xhat = d_y * &params.value(gamma).row(0);
    for (i, mut row) in d_xhat.axis_iter_mut(Axis(0)).enumerate() {
        let xh = tape.xhat.row(i);
        let mean_d = row.sum() / d;
        let mean_dx = row.iter().zip(xh.iter()).map(|(a, b)| a * b).sum::<f64>() / d;
        let inv = tape.inv_std[i];
        row.iter_mut()
            .zip(xh.iter())
            .for_each(|(g, &xv)| *g = inv * (*g - mean_d - xv * mean_dx));
    }
    d_xhat
}

/// Row softmax over unmasked key columns; masked columns get probability 0.
fn masked_softmax_rows(scores: &Array2<f64>, key_mask: &[bool]) -> Array2<f64> {
    let mut out = Array2::<f64>::zeros(scores.raw_dim());
    for (i, row) in scores.axis_iter(Axis(0)).enumerate() {
        let max = row
            .iter()
            .zip(key_mask)
            .filter(|(_, &m)| m)
            .map(|(v, _)| *v)
            .fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for (j, (&v, &m)) in row.iter().zip(key_mask).enumerate() {
            if m {
                let e = (v - max).exp();
                out[[i, j]] = e;
                total += e;
            }
        }
        out.row_mut(i).mapv_inplace(|v| v / total);
    }
    out
}

fn softmax_rows_backward(probs: &Array2<f64>, d_probs: &Array2<f64>) -> Array2<f64> {
    let dot = (probs * d_probs).sum_axis(Axis(1)).insert_axis(Axis(1));
    probs * &(d_probs - &dot)
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044_715;

/// Tanh approximation of GELU.
pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + GELU_A * x * x * x)).tanh())
}

pub fn gelu_grad(x: f64) -> f64 {
    let t = (GELU_C * (x + GELU_A * x * x * x)).tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_A * x * x)
}

/// Mean of the rows of `h` selected by `mask`.
pub fn masked_mean(h: ArrayView2<f64>, mask: &[bool]) -> Result<Array1<f64>> {
    let count = mask.iter().filter(|&&b| b).count();
    if count == 0 {
        return Err(Error::EmptyBlock);
    }
    let mut acc = Array1::<f64>::zeros(h.ncols());
    for (i, _) in mask.iter().enumerate().filter(|(_, &b)| b) {
        acc += &h.row(i);
    }
    Ok(acc / count as f64)
}
