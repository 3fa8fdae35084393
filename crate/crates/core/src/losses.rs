//! Reading-comprehension cross-entropy, weighted matching cross-entropy, and
//! the fixed / length-adjusted joint loss.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::heads::{MatchScore, ReaderScores};

/// Clamp applied to probabilities inside logarithms.
pub const PROB_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum ClassWeights {
    /// Inverse class frequency over the training items.
    Auto,
    Fixed {
        w_pos: f64,
        w_neg: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossConfig {
    /// Weight of the matching loss relative to the reading loss.
    pub lambda: f64,
    /// Scale the reading loss by the span-length adjustment factor.
    pub adjustable: bool,
    pub class_weights: ClassWeights,
    /// Floor on the gold span length in the adjustment factor.
    pub epsilon_len: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            lambda: 4.0,
            adjustable: false,
            class_weights: ClassWeights::Auto,
            epsilon_len: 1.0,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if self.lambda.is_nan() || self.lambda < 0.0 {
            return Err(Error::InvalidConfig(format!("lambda {} < 0", self.lambda)));
        }
        if let ClassWeights::Fixed { w_pos, w_neg } = self.class_weights {
            if !(w_pos > 0.0 && w_neg > 0.0) {
                return Err(Error::InvalidConfig(
                    "class weights must be positive".into(),
                ));
            }
        }
        if self.epsilon_len.is_nan() || self.epsilon_len <= 0.0 {
            return Err(Error::InvalidConfig("epsilon_len must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub l_rc: f64,
    pub l_dr: f64,
    pub w_adjust: f64,
    pub total: f64,
}

impl LossBreakdown {
    pub fn is_finite(&self) -> bool {
        self.l_rc.is_finite()
            && self.l_dr.is_finite()
            && self.w_adjust.is_finite()
            && self.total.is_finite()
    }
}

fn check_label(scores: &ReaderScores, pos: usize) -> Result<()> {
    if pos >= scores.len() || !scores.allowed[pos] {
        return Err(Error::LabelOutOfRange {
            position: pos,
            len: scores.len(),
        });
    }
    Ok(())
}

/// `-(log p_start[s] + log p_end[e])` for one block.
pub fn rc_loss(scores: &ReaderScores, label: (usize, usize)) -> Result<f64> {
    check_label(scores, label.0)?;
    check_label(scores, label.1)?;
    Ok(-(scores.p_start[label.0].max(PROB_EPS).ln() + scores.p_end[label.1].max(PROB_EPS).ln()))
}

/// Gradients of [`rc_loss`] w.r.t. the start and end logits: `p - onehot`
/// on allowed positions.
pub fn rc_loss_grad(scores: &ReaderScores, label: (usize, usize)) -> Result<(Vec<f64>, Vec<f64>)> {
    check_label(scores, label.0)?;
    check_label(scores, label.1)?;
    let grad = |p: &[f64], target: usize| {
        p.iter()
            .enumerate()
            .map(|(i, &v)| v - (i == target) as u8 as f64)
            .collect::<Vec<_>>()
    };
    Ok((grad(&scores.p_start, label.0), grad(&scores.p_end, label.1)))
}

/// Batch mean of [`rc_loss`].
pub fn rc_loss_batch(items: &[(&ReaderScores, (usize, usize))]) -> Result<f64> {
    if items.is_empty() {
        return Err(Error::EmptyInput("rc loss batch"));
    }
    let mut total = 0.0;
    for (s, l) in items {
        total += rc_loss(s, *l)?;
    }
    Ok(total / items.len() as f64)
}

/// Inverse class frequency: `w_c = N_total / N_c`.
pub fn dr_class_weights(positives: usize, negatives: usize) -> Result<(f64, f64)> {
    if positives == 0 {
        return Err(Error::EmptyClass("positive"));
    }
    if negatives == 0 {
        return Err(Error::EmptyClass("negative"));
    }
    let total = (positives + negatives) as f64;
    Ok((total / positives as f64, total / negatives as f64))
}

/// `-w_y [y log p + (1-y) log(1-p)]` with `p` clamped into `[ε, 1-ε]`.
pub fn dr_loss(p_dr: f64, y: bool, weights: (f64, f64)) -> f64 {
    let p = p_dr.clamp(PROB_EPS, 1.0 - PROB_EPS);
    if y {
        -weights.0 * p.ln()
    } else {
        -weights.1 * (1.0 - p).ln()
    }
}

/// Gradient of [`dr_loss`] w.r.t. the matcher logit.
pub fn dr_loss_grad(score: &MatchScore, y: bool, weights: (f64, f64)) -> f64 {
    let w = if y { weights.0 } else { weights.1 };
    w * (score.p_dr - y as u8 as f64)
}

pub fn dr_loss_batch(items: &[(f64, bool)], weights: (f64, f64)) -> Result<f64> {
    if items.is_empty() {
        return Err(Error::EmptyInput("dr loss batch"));
    }
    Ok(items
        .iter()
        .map(|&(p, y)| dr_loss(p, y, weights))
        .sum::<f64>()
        / items.len() as f64)
}

/// `exp(|L_pred - L_gold| / max(L_gold, ε))` with `L = end - start`; exactly 1
/// when the gold label is the no-answer sentinel. Treated as a constant by the
/// optimizer.
pub fn adjustment_factor(gold: (usize, usize), pred: (usize, usize), epsilon_len: f64) -> f64 {
    if gold == (0, 0) {
        return 1.0;
    }
    let gold_len = gold.1 as f64 - gold.0 as f64;
    let pred_len = pred.1 as f64 - pred.0 as f64;
    ((pred_len - gold_len).abs() / gold_len.max(epsilon_len)).exp()
}

/// `w·l_rc + λ·l_dr` when adjustable, else `l_rc + λ·l_dr`.
pub fn joint_loss(l_rc: f64, l_dr: f64, config: &LossConfig, w: f64) -> LossBreakdown {
    let w_adjust = if config.adjustable { w } else { 1.0 };
    LossBreakdown {
        l_rc,
        l_dr,
        w_adjust,
        total: w_adjust * l_rc + config.lambda * l_dr,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::heads::{reader_from_logits, Pooling};
    use proptest::prelude::*;

    #[test]
    fn perfect_prediction_has_zero_loss() {
        let s = reader_from_logits(vec![0.0, 800.0, 0.0], vec![0.0, 0.0, 800.0], vec![true; 3]);
        assert!(rc_loss(&s, (1, 2)).unwrap().abs() < 1e-12);
    }

    #[test]
    fn uniform_prediction_closed_form() {
        let allowed = vec![true, false, true, true, true, true];
        let s = reader_from_logits(vec![0.3; 6], vec![-1.0; 6], allowed);
        let v = 5.0f64;
        assert!((rc_loss(&s, (2, 4)).unwrap() - 2.0 * v.ln()).abs() < 1e-12);
        // No-answer target reads position 0.
        assert!((rc_loss(&s, (0, 0)).unwrap() - 2.0 * v.ln()).abs() < 1e-12);
    }

    #[test]
    fn label_out_of_sequence_is_an_error() {
        let s = reader_from_logits(vec![0.0; 4], vec![0.0; 4], vec![true, false, true, true]);
        assert!(matches!(
            rc_loss(&s, (2, 9)),
            Err(Error::LabelOutOfRange { .. })
        ));
        assert!(matches!(
            rc_loss(&s, (1, 2)),
            Err(Error::LabelOutOfRange { .. })
        ));
    }

    #[test]
    fn rc_batch_average() {
        let a = reader_from_logits(vec![0.0; 2], vec![0.0; 2], vec![true; 2]);
        let b = reader_from_logits(vec![0.0; 4], vec![0.0; 4], vec![true; 4]);
        let mean = rc_loss_batch(&[(&a, (0, 1)), (&b, (1, 1))]).unwrap();
        assert!((mean - (2.0 * 2f64.ln() + 2.0 * 4f64.ln()) / 2.0).abs() < 1e-12);
    }

    #[test]
    fn class_weight_examples() {
        assert_eq!(dr_class_weights(2, 10).unwrap(), (6.0, 1.2));
        assert_eq!(dr_class_weights(5, 5).unwrap(), (2.0, 2.0));
        assert_eq!(dr_class_weights(1, 49).unwrap(), (50.0, 50.0 / 49.0));
        assert!(matches!(
            dr_class_weights(0, 3),
            Err(Error::EmptyClass("positive"))
        ));
        assert!(matches!(
            dr_class_weights(3, 0),
            Err(Error::EmptyClass("negative"))
        ));
    }

    #[test]
    fn dr_loss_examples() {
        let w = (6.0, 1.2);
        assert!((dr_loss(0.5, true, w) - 6.0 * 2f64.ln()).abs() < 1e-12);
        assert!((dr_loss(0.5, false, w) - 1.2 * 2f64.ln()).abs() < 1e-12);
        assert!(dr_loss(1.0 - 1e-15, true, w) < 1e-10);
        assert!((dr_loss(0.8, true, w) - 1.338_861_307_885_258_8).abs() < 1e-9);
        assert!(dr_loss(0.0, true, w).is_finite());
    }

    #[test]
    fn dr_gradient_matches_difference() {
        for &(z, y) in &[(0.3, true), (-1.7, false), (2.2, true)] {
            let w = (3.0, 0.7);
            let score = |z: f64| MatchScore {
                p_dr: crate::heads::sigmoid(z),
                logit: z,
                pooling: Pooling::Cls,
            };
            let eps = 1e-6;
            let fd = (dr_loss(score(z + eps).p_dr, y, w) - dr_loss(score(z - eps).p_dr, y, w))
                / (2.0 * eps);
            assert!((fd - dr_loss_grad(&score(z), y, w)).abs() < 1e-7);
        }
    }

    #[test]
    fn balanced_weights_scale_plain_bce_by_two() {
        for &(p, y) in &[(0.1f64, true), (0.6, false), (0.93, true)] {
            let plain = if y { -p.ln() } else { -(1.0 - p).ln() };
            assert!((dr_loss(p, y, (2.0, 2.0)) - 2.0 * plain).abs() < 1e-12);
        }
    }

    #[test]
    fn adjustment_examples() {
        assert_eq!(adjustment_factor((5, 15), (20, 30), 1.0), 1.0);
        assert!((adjustment_factor((5, 15), (5, 9), 1.0) - 0.6f64.exp()).abs() < 1e-12);
        assert_eq!(adjustment_factor((0, 0), (4, 90), 1.0), 1.0);
        // Single-token gold: length 0 is floored by epsilon.
        assert!((adjustment_factor((7, 7), (7, 9), 1.0) - 2f64.exp()).abs() < 1e-12);
    }

    #[test]
    fn joint_loss_examples() {
        let mut cfg = LossConfig {
            lambda: 0.0,
            adjustable: true,
            ..Default::default()
        };
        assert_eq!(joint_loss(2.0, 0.5, &cfg, 1.5).total, 3.0);
        cfg.lambda = 4.0;
        assert_eq!(joint_loss(2.0, 0.5, &cfg, 1.5).total, 5.0);
        cfg.adjustable = false;
        let b = joint_loss(2.0, 0.5, &cfg, 1.5);
        assert_eq!((b.total, b.w_adjust), (4.0, 1.0));
    }

    #[test]
    fn config_validation() {
        assert!(LossConfig {
            lambda: -1.0,
            ..Default::default()
        }
        .validate()
        .is_err());
        let bad = LossConfig {
            class_weights: ClassWeights::Fixed {
                w_pos: 0.0,
                w_neg: 1.0,
            },
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        assert!(LossConfig::default().validate().is_ok());
    }

    proptest! {
        #[test]
        fn adjustment_is_monotone_in_length_error(gs in 1usize..50, glen in 0usize..40, e1 in 0usize..60, e2 in 0usize..60) {
            let gold = (gs, gs + glen);
            let pred_a = (gs, gs + e1);
            let pred_b = (gs, gs + e2);
            let err_a = (e1 as i64 - glen as i64).abs();
            let err_b = (e2 as i64 - glen as i64).abs();
            let wa = adjustment_factor(gold, pred_a, 1.0);
            let wb = adjustment_factor(gold, pred_b, 1.0);
            prop_assert!(wa >= 1.0 && wb >= 1.0);
            prop_assert_eq!(wa == 1.0, err_a == 0);
            if err_a < err_b {
                prop_assert!(wa < wb);
            }
        }
    }
}
