//! Reader head (start/end distributions over positions) and matcher head
//! (question–document alignment probability).

use std::fmt;
use std::str::FromStr;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::chunking::Block;
use crate::encoder::EncoderOutput;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pooling {
    Cls,
    Mean,
}

impl FromStr for Pooling {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cls" => Ok(Pooling::Cls),
            "mean" => Ok(Pooling::Mean),
            other => Err(Error::UnknownPooling(other.to_string())),
        }
    }
}

impl fmt::Display for Pooling {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Pooling::Cls => "cls",
            Pooling::Mean => "mean",
        })
    }
}

/// Start/end probabilities over the `m` positions of a block.
#[derive(Debug, Clone, PartialEq)]
pub struct ReaderScores {
    pub p_start: Vec<f64>,
    pub p_end: Vec<f64>,
    pub start_logits: Vec<f64>,
    pub end_logits: Vec<f64>,
    /// Positions that may carry probability: the CLS slot and the document
    /// region.
    pub allowed: Vec<bool>,
}

impl ReaderScores {
    pub fn len(&self) -> usize {
        self.p_start.len()
    }

    pub fn is_empty(&self) -> bool {
        self.p_start.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchScore {
    pub p_dr: f64,
    pub logit: f64,
    pub pooling: Pooling,
}

/// Reader mask for a block: position 0 plus the document tokens.
pub fn reader_mask(block: &Block) -> Vec<bool> {
    let region = block.doc_region();
    (0..block.len())
        .map(|i| i == 0 || region.contains(&i))
        .collect()
}

/// Softmax over allowed positions; everything else gets probability 0.
pub fn masked_softmax(logits: &[f64], allowed: &[bool]) -> Vec<f64> {
    let max = logits
        .iter()
        .zip(allowed)
        .filter(|(_, &a)| a)
        .map(|(v, _)| *v)
        .fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = logits
        .iter()
        .zip(allowed)
        .map(|(&v, &a)| if a { (v - max).exp() } else { 0.0 })
        .collect();
    let total: f64 = out.iter().sum();
    out.iter_mut().for_each(|p| *p /= total);
    out
}

pub fn reader_from_logits(
    start_logits: Vec<f64>,
    end_logits: Vec<f64>,
    allowed: Vec<bool>,
) -> ReaderScores {
    ReaderScores {
        p_start: masked_softmax(&start_logits, &allowed),
        p_end: masked_softmax(&end_logits, &allowed),
        start_logits,
        end_logits,
        allowed,
    }
}

/// `p_start = softmax(w_start · Hᵀ)`, likewise for the end.
pub fn reader_forward(
    h: ArrayView2<f64>,
    w_start: ArrayView1<f64>,
    w_end: ArrayView1<f64>,
    allowed: Vec<bool>,
) -> ReaderScores {
    let start = h.dot(&w_start).to_vec();
    let end = h.dot(&w_end).to_vec();
    reader_from_logits(start, end, allowed)
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn pooled(output: &EncoderOutput, pooling: Pooling) -> &Array1<f64> {
    match pooling {
        Pooling::Cls => &output.h_cls,
        Pooling::Mean => &output.h_mean,
    }
}

/// `p_DR = σ(w_DR · h)` with `h` chosen by `pooling`.
pub fn matcher_forward(
    output: &EncoderOutput,
    w_dr: ArrayView1<f64>,
    pooling: Pooling,
) -> MatchScore {
    let logit = pooled(output, pooling).dot(&w_dr);
    MatchScore {
        p_dr: sigmoid(logit),
        logit,
        pooling,
    }
}

/// Gradient of the loss w.r.t. `H` and the head weights, given gradients
/// w.r.t. the start/end logits and the matcher logit.
pub struct HeadGrads {
    pub d_h: Array2<f64>,
    pub d_w_start: Array1<f64>,
    pub d_w_end: Array1<f64>,
    pub d_w_dr: Array1<f64>,
}

#[allow(clippy::too_many_arguments)]
pub fn heads_backward(
    output: &EncoderOutput,
    w_start: ArrayView1<f64>,
    w_end: ArrayView1<f64>,
    w_dr: ArrayView1<f64>,
    pooling: Pooling,
    d_start_logits: &[f64],
    d_end_logits: &[f64],
    d_dr_logit: f64,
) -> HeadGrads {
    let h = &output.h;
    let ds = ArrayView1::from(d_start_logits);
    let de = ArrayView1::from(d_end_logits);
    let d_w_start = h.t().dot(&ds);
    let d_w_end = h.t().dot(&de);
    let d_w_dr = pooled(output, pooling) * d_dr_logit;

    let mut d_h = Array2::<f64>::zeros(h.raw_dim());
    for (i, mut row) in d_h.rows_mut().into_iter().enumerate() {
        if ds[i] != 0.0 {
            row.scaled_add(ds[i], &w_start);
        }
        if de[i] != 0.0 {
            row.scaled_add(de[i], &w_end);
        }
    }
    if d_dr_logit != 0.0 {
        match pooling {
            Pooling::Cls => d_h.row_mut(0).scaled_add(d_dr_logit, &w_dr),
            Pooling::Mean => {
                let count = output.real_tokens() as f64;
                for (i, _) in output.mask.iter().enumerate().filter(|(_, &m)| m) {
                    d_h.row_mut(i).scaled_add(d_dr_logit / count, &w_dr);
                }
            }
        }
    }
    HeadGrads {
        d_h,
        d_w_start,
        d_w_end,
        d_w_dr,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpanConstraints {
    /// Maximum answer length in tokens (`end - start + 1`).
    pub max_answer_len: usize,
    /// When false, start and end are independent argmaxes.
    pub constrained: bool,
}

impl Default for SpanConstraints {
    fn default() -> Self {
        Self {
            max_answer_len: 150,
            constrained: true,
        }
    }
}

fn argmax(values: &[f64], allowed: &[bool]) -> usize {
    let mut best = 0;
    let mut best_v = f64::NEG_INFINITY;
    for (i, (&v, &a)) in values.iter().zip(allowed).enumerate() {
        if a && v > best_v {
            best = i;
            best_v = v;
        }
    }
    best
}

/// Predicted `(start, end)` sequence positions; `(0, 0)` means no answer.
///
/// The constrained search maximizes `p_start[s] + p_end[e]` over the
/// no-answer pair and every document pair with `s <= e` and
/// `e - s + 1 <= max_answer_len`. Ties keep the earliest candidate, with
/// no-answer considered first.
pub fn predict_span(scores: &ReaderScores, constraints: &SpanConstraints) -> (usize, usize) {
    if !constraints.constrained {
        return (
            argmax(&scores.p_start, &scores.allowed),
            argmax(&scores.p_end, &scores.allowed),
        );
    }
    let m = scores.len();
    let mut best = (0, 0);
    let mut best_v = scores.p_start[0] + scores.p_end[0];
    for s in 1..m {
        if !scores.allowed[s] {
            continue;
        }
        let last = (s + constraints.max_answer_len).min(m);
        for e in s..last {
            if !scores.allowed[e] {
                break;
            }
            let v = scores.p_start[s] + scores.p_end[e];
            if v > best_v {
                best_v = v;
                best = (s, e);
            }
        }
    }
    best
}

/// Re-normalizes the reader distributions of all blocks of one document
/// jointly (one softmax over every allowed position of every block).
pub fn normalize_across_blocks(blocks: &mut [ReaderScores]) {
    for take_start in [true, false] {
        let logits = |r: &ReaderScores| {
            if take_start {
                r.start_logits.clone()
            } else {
                r.end_logits.clone()
            }
        };
        let max = blocks
            .iter()
            .flat_map(|r| {
                let l = logits(r);
                l.into_iter()
                    .zip(r.allowed.clone())
                    .filter(|(_, a)| *a)
                    .map(|(v, _)| v)
            })
            .fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        let mut exps = Vec::with_capacity(blocks.len());
        for r in blocks.iter() {
            let e: Vec<f64> = logits(r)
                .iter()
                .zip(&r.allowed)
                .map(|(&v, &a)| if a { (v - max).exp() } else { 0.0 })
                .collect();
            total += e.iter().sum::<f64>();
            exps.push(e);
        }
        for (r, e) in blocks.iter_mut().zip(exps) {
            let p: Vec<f64> = e.into_iter().map(|v| v / total).collect();
            if take_start {
                r.p_start = p;
            } else {
                r.p_end = p;
            }
        }
    }
}
