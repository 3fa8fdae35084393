//! Batch objective: joint loss over a set of labelled blocks and its
//! gradient with respect to every trainable tensor.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::chunking::Block;
use crate::encoder::Gradients;
use crate::error::{Error, Result};
use crate::heads::{predict_span, SpanConstraints};
use crate::losses::{
    adjustment_factor, dr_loss, dr_loss_grad, rc_loss, rc_loss_grad, LossBreakdown, LossConfig,
};
use crate::model::{JointModel, OutputGrads};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Rc,
    Dr,
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rc" => Ok(Task::Rc),
            "dr" => Ok(Task::Dr),
            other => Err(Error::InvalidConfig(format!("unknown task `{other}`"))),
        }
    }
}

/// Nonempty set of tasks trained in one stage.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<Task>", into = "Vec<Task>")]
pub struct TaskSet(BTreeSet<Task>);

impl TaskSet {
    pub fn new(tasks: impl IntoIterator<Item = Task>) -> Result<Self> {
        let set: BTreeSet<Task> = tasks.into_iter().collect();
        if set.is_empty() {
            return Err(Error::InvalidConfig(
                "a stage needs at least one task".into(),
            ));
        }
        Ok(Self(set))
    }

    pub fn rc() -> Self {
        Self(BTreeSet::from([Task::Rc]))
    }

    pub fn dr() -> Self {
        Self(BTreeSet::from([Task::Dr]))
    }

    pub fn joint() -> Self {
        Self(BTreeSet::from([Task::Rc, Task::Dr]))
    }

    pub fn has_rc(&self) -> bool {
        self.0.contains(&Task::Rc)
    }

    pub fn has_dr(&self) -> bool {
        self.0.contains(&Task::Dr)
    }
}

impl TryFrom<Vec<Task>> for TaskSet {
    type Error = Error;

    fn try_from(v: Vec<Task>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<TaskSet> for Vec<Task> {
    fn from(t: TaskSet) -> Self {
        t.0.into_iter().collect()
    }
}

impl fmt::Display for TaskSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<&str> = self
            .0
            .iter()
            .map(|t| match t {
                Task::Rc => "rc",
                Task::Dr => "dr",
            })
            .collect();
        write!(f, "{{{}}}", names.join(","))
    }
}

/// One labelled training block.
#[derive(Debug, Clone, Copy)]
pub struct TrainItem<'a> {
    pub block: &'a Block,
    /// Reader target in block positions; `(0, 0)` is no-answer.
    pub rc_label: (usize, usize),
    pub dr_label: bool,
}

impl<'a> TrainItem<'a> {
    pub fn from_block(block: &'a Block, dr_label: bool) -> Self {
        Self {
            block,
            rc_label: block.label.positions(),
            dr_label,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Objective {
    pub tasks: (bool, bool),
    pub loss: LossConfig,
    /// `(w_pos, w_neg)` for the matching loss.
    pub dr_weights: (f64, f64),
    pub span: SpanConstraints,
}

impl Objective {
    pub fn new(tasks: &TaskSet, loss: LossConfig, dr_weights: (f64, f64)) -> Self {
        Self {
            tasks: (tasks.has_rc(), tasks.has_dr()),
            loss,
            dr_weights,
            span: SpanConstraints::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchOutcome {
    /// Batch means; `w_adjust` is the loss-weighted mean factor, so that
    /// `total = w_adjust·l_rc + λ·l_dr` holds for the batch.
    pub loss: LossBreakdown,
    /// Per-item adjustment factors used (all 1 when not adjustable).
    pub factors: Vec<f64>,
}

/// Mean joint loss over `items`; adds its gradient into `grads` when given.
///
/// Adjustment factors are recomputed from the current predictions unless
/// `fixed_factors` is provided. They are constants for differentiation.
pub fn batch_objective(
    model: &JointModel,
    items: &[TrainItem<'_>],
    objective: &Objective,
    fixed_factors: Option<&[f64]>,
    mut grads: Option<&mut Gradients>,
) -> Result<BatchOutcome> {
    if items.is_empty() {
        return Err(Error::EmptyInput("training batch"));
    }
    let n = items.len() as f64;
    let (use_rc, use_dr) = objective.tasks;
    let lambda = objective.loss.lambda;
    let record = grads.is_some();
    let (mut sum_rc, mut sum_wrc, mut sum_dr) = (0.0, 0.0, 0.0);
    let mut factors = Vec::with_capacity(items.len());
    for (i, item) in items.iter().enumerate() {
        let fwd = model.forward(item.block, record)?;
        let mut out = OutputGrads::default();
        let mut w = 1.0;
        if use_rc {
            let l = rc_loss(&fwd.reader, item.rc_label)?;
            if objective.loss.adjustable {
                w = match fixed_factors {
                    Some(f) => f[i],
                    None => adjustment_factor(
                        item.rc_label,
                        predict_span(&fwd.reader, &objective.span),
                        objective.loss.epsilon_len,
                    ),
                };
            }
            sum_rc += l;
            sum_wrc += w * l;
            if record {
                let (ds, de) = rc_loss_grad(&fwd.reader, item.rc_label)?;
                out.start_logits = ds.into_iter().map(|g| g * w / n).collect();
                out.end_logits = de.into_iter().map(|g| g * w / n).collect();
            }
        }
        factors.push(w);
        if use_dr {
            sum_dr += dr_loss(fwd.matcher.p_dr, item.dr_label, objective.dr_weights);
            if record {
                out.dr_logit =
                    lambda * dr_loss_grad(&fwd.matcher, item.dr_label, objective.dr_weights) / n;
            }
        }
        if let Some(g) = grads.as_deref_mut() {
            model.backward(&fwd, &out, g)?;
        }
    }
    let l_rc = sum_rc / n;
    let l_dr = sum_dr / n;
    let w_adjust = if sum_rc > 0.0 { sum_wrc / sum_rc } else { 1.0 };
    let loss = LossBreakdown {
        l_rc,
        l_dr,
        w_adjust,
        total: sum_wrc / n + lambda * l_dr,
    };
    Ok(BatchOutcome { loss, factors })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chunking::{label_blocks, make_blocks_from_ids, ChunkConfig};
    use crate::corpus::AnswerSpan;
    use crate::encoder::EncoderConfig;
    use crate::heads::Pooling;
    use crate::model::ModelConfig;

    fn model() -> JointModel {
        let cfg = ModelConfig {
            encoder: EncoderConfig {
                vocab_size: 40,
                d: 8,
                layers: 2,
                heads: 2,
                max_len: 20,
                ffn_dim: 16,
                seed: 3,
            },
            pooling: Pooling::Cls,
        };
        JointModel::new(cfg, 4).unwrap()
    }

    fn blocks() -> Vec<Block> {
        let cfg = ChunkConfig {
            max_len: 20,
            stride: 4,
        };
        let mut pos =
            make_blocks_from_ids("q", &[5, 6], "g", &(10..22).collect::<Vec<_>>(), &cfg).unwrap();
        label_blocks(&mut pos, Some(&AnswerSpan::new("g", 3, 5)));
        let neg = make_blocks_from_ids("q", &[5, 6], "n", &[30, 31, 32], &cfg).unwrap();
        pos.into_iter().chain(neg).collect()
    }

    #[test]
    fn task_sets_parse() {
        let t: TaskSet = serde_json::from_str(r#"["dr","rc"]"#).unwrap();
        assert_eq!(t, TaskSet::joint());
        assert!(serde_json::from_str::<TaskSet>("[]").is_err());
        assert_eq!(TaskSet::joint().to_string(), "{rc,dr}");
    }

    #[test]
    fn loss_decomposes() {
        let m = model();
        let bs = blocks();
        let items: Vec<_> = bs
            .iter()
            .map(|b| TrainItem::from_block(b, b.doc_id == "g"))
            .collect();
        let loss = LossConfig {
            adjustable: true,
            ..LossConfig::default()
        };
        let obj = Objective::new(&TaskSet::joint(), loss, (2.0, 1.5));
        let out = batch_objective(&m, &items, &obj, None, None).unwrap();
        let l = out.loss;
        assert!((l.total - (l.w_adjust * l.l_rc + 4.0 * l.l_dr)).abs() < 1e-12);
        assert!(out.factors.iter().all(|&w| w >= 1.0));

        let rc_only = Objective::new(&TaskSet::rc(), loss, (2.0, 1.5));
        let r = batch_objective(&m, &items, &rc_only, None, None)
            .unwrap()
            .loss;
        assert_eq!(r.l_dr, 0.0);
        assert!((r.total - r.w_adjust * r.l_rc).abs() < 1e-12);

        let dr_only = Objective::new(&TaskSet::dr(), loss, (2.0, 1.5));
        let d = batch_objective(&m, &items, &dr_only, None, None)
            .unwrap()
            .loss;
        assert_eq!(d.l_rc, 0.0);
        assert!((d.total - 4.0 * d.l_dr).abs() < 1e-12);
    }

    #[test]
    fn gradient_matches_finite_difference_on_heads() {
        let mut m = model();
        let bs = blocks();
        let items: Vec<_> = bs
            .iter()
            .map(|b| TrainItem::from_block(b, b.doc_id == "g"))
            .collect();
        let loss = LossConfig {
            adjustable: true,
            ..LossConfig::default()
        };
        let obj = Objective::new(&TaskSet::joint(), loss, (2.0, 1.5));
        let mut grads = Gradients::zeros_like(&m.params);
        let base = batch_objective(&m, &items, &obj, None, Some(&mut grads)).unwrap();
        let h = 1e-5;
        for id in m.head_ids() {
            for j in 0..3 {
                let orig = m.params.value(id)[[0, j]];
                m.params.param_mut(id).value[[0, j]] = orig + h;
                let up = batch_objective(&m, &items, &obj, Some(&base.factors), None)
                    .unwrap()
                    .loss
                    .total;
                m.params.param_mut(id).value[[0, j]] = orig - h;
                let down = batch_objective(&m, &items, &obj, Some(&base.factors), None)
                    .unwrap()
                    .loss
                    .total;
                m.params.param_mut(id).value[[0, j]] = orig;
                let numeric = (up - down) / (2.0 * h);
                let analytic = grads.tensors[id][[0, j]];
                assert!((numeric - analytic).abs() < 1e-7, "{numeric} vs {analytic}");
            }
        }
    }
}
