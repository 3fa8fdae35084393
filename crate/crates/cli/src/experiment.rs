//! Toy transfer experiment: the ablation plans trained on the synthetic
//! corpus with equal target-domain steps over several seeds, compared on
//! median validation metrics.

use std::path::Path;
use std::time::Instant;

use anyhow::{Context, Result};
use jointqa::chunking::ChunkConfig;
use jointqa::heads::Pooling;
use jointqa::synth::SynthConfig;
use jointqa::training::ModelSettings;
use serde::{Deserialize, Serialize};

use crate::commands::{cmd_synth, cmd_train};
use crate::config::RunConfig;
use crate::manifest::MetricSummary;
use crate::presets::{preset, Profile};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferSettings {
    pub synth: SynthConfig,
    /// Auxiliary pool size after BM25 augmentation.
    pub aux_pool: usize,
    pub model: ModelSettings,
    pub chunk: ChunkConfig,
    pub aux_steps: usize,
    pub target_steps: usize,
    pub lr: f64,
    pub warmup_steps: usize,
    pub seeds: Vec<u64>,
    pub plans: Vec<String>,
}

impl Default for TransferSettings {
    fn default() -> Self {
        Self {
            synth: SynthConfig::default(),
            aux_pool: 4,
            model: ModelSettings {
                d: 32,
                layers: 2,
                heads: 4,
                ffn_dim: 64,
                max_len: 64,
                pooling: Pooling::Mean,
            },
            chunk: ChunkConfig {
                max_len: 64,
                stride: 24,
            },
            aux_steps: 600,
            target_steps: 200,
            lr: 3e-3,
            warmup_steps: 30,
            seeds: vec![0, 1, 2],
            plans: [
                "bert_rc",
                "transt_mean",
                "transd_rc",
                "transd_dr",
                "transtd_mean",
                "transtd_plus_mean",
            ]
            .map(String::from)
            .to_vec(),
        }
    }
}

impl TransferSettings {
    /// The preset `plan` resized to the toy encoder and step budget, reading
    /// datasets from `data_dir`.
    pub fn config(&self, plan: &str, seed: u64, data_dir: &Path) -> Result<RunConfig> {
        let mut c = preset(plan, Profile::Desk)?;
        c.plan.seed = seed;
        c.plan.model = ModelSettings {
            pooling: c.plan.model.pooling,
            ..self.model.clone()
        };
        c.plan.chunk = self.chunk;
        let last = c.plan.stages.len() - 1;
        for (i, stage) in c.plan.stages.iter_mut().enumerate() {
            stage.steps = Some(if i == last {
                self.target_steps
            } else {
                self.aux_steps
            });
            stage.lr = self.lr;
            stage.warmup_steps = self.warmup_steps;
        }
        for path in c.datasets.values_mut() {
            *path = data_dir.join(path.file_name().expect("preset paths name a file"));
        }
        if let Some(eval) = &mut c.evaluation {
            eval.dataset =
                data_dir.join(eval.dataset.file_name().expect("preset paths name a file"));
        }
        c.validate()?;
        Ok(c)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanResult {
    pub plan: String,
    pub seed: u64,
    pub summary: MetricSummary,
    pub seconds: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    /// Short by less than one point.
    Warn,
    Fail,
}

/// One directional claim `lhs ≥ rhs` on a median metric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderingCheck {
    pub metric: String,
    pub lhs: String,
    pub rhs: String,
    pub lhs_value: f64,
    pub rhs_value: f64,
    pub verdict: Verdict,
}

impl OrderingCheck {
    fn new(metric: &str, lhs: &str, rhs: &str, lhs_value: f64, rhs_value: f64) -> Self {
        let verdict = if lhs_value >= rhs_value {
            Verdict::Pass
        } else if rhs_value - lhs_value < 0.01 {
            Verdict::Warn
        } else {
            Verdict::Fail
        };
        Self {
            metric: metric.into(),
            lhs: lhs.into(),
            rhs: rhs.into(),
            lhs_value,
            rhs_value,
            verdict,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferReport {
    pub settings: TransferSettings,
    pub results: Vec<PlanResult>,
    pub seconds: f64,
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        xs[n / 2]
    } else {
        (xs[n / 2 - 1] + xs[n / 2]) / 2.0
    }
}

impl TransferReport {
    /// Median over seeds of one metric (`r@1`, `ha_f1@1`, `mrr`, `ma_f1`).
    pub fn median(&self, plan: &str, metric: &str) -> f64 {
        median(
            self.results
                .iter()
                .filter(|r| r.plan == plan)
                .map(|r| metric_value(&r.summary, metric))
                .collect(),
        )
    }

    /// The ordering claims: joint transfer ranks at least as well as each
    /// single-axis variant, and the adjustable loss reads at least as well.
    pub fn checks(&self) -> Vec<OrderingCheck> {
        let full = "transtd_mean";
        let mut out: Vec<OrderingCheck> = ["transt_mean", "transd_rc", "transd_dr", "bert_rc"]
            .into_iter()
            .filter(|p| self.results.iter().any(|r| r.plan == *p))
            .map(|p| {
                OrderingCheck::new(
                    "r@1",
                    full,
                    p,
                    self.median(full, "r@1"),
                    self.median(p, "r@1"),
                )
            })
            .collect();
        let plus = "transtd_plus_mean";
        out.push(OrderingCheck::new(
            "ha_f1@1",
            plus,
            full,
            self.median(plus, "ha_f1@1"),
            self.median(full, "ha_f1@1"),
        ));
        out
    }

    pub fn table(&self) -> String {
        let mut plans: Vec<&str> = Vec::new();
        for r in &self.results {
            if !plans.contains(&r.plan.as_str()) {
                plans.push(&r.plan);
            }
        }
        let mut out = format!(
            "{:<20}{:>8}{:>10}{:>8}{:>8}\n",
            "plan", "Ma-F1", "HA_F1@1", "MRR", "R@1"
        );
        for p in plans {
            out.push_str(&format!(
                "{:<20}{:>8.4}{:>10.4}{:>8.4}{:>8.4}\n",
                p,
                self.median(p, "ma_f1"),
                self.median(p, "ha_f1@1"),
                self.median(p, "mrr"),
                self.median(p, "r@1")
            ));
        }
        out
    }
}

fn metric_value(s: &MetricSummary, metric: &str) -> f64 {
    match metric {
        "ma_f1" => s.ma_f1,
        "mrr" => s.mrr,
        "r@1" => s.recall_at.get(&1).copied().unwrap_or(f64::NAN),
        "ha_f1@1" => s.ha_f1_at.get(&1).copied().unwrap_or(f64::NAN),
        _ => f64::NAN,
    }
}

/// Generates the corpus under `work_dir/data` and trains every plan for
/// every seed under `work_dir/runs`. `progress` sees each finished run.
pub fn run_transfer_experiment(
    settings: &TransferSettings,
    work_dir: &Path,
    progress: &mut dyn FnMut(&PlanResult),
) -> Result<TransferReport> {
    let start = Instant::now();
    let data_dir = work_dir.join("data");
    cmd_synth(&data_dir, &settings.synth, settings.aux_pool)?;
    let mut results = Vec::new();
    for seed in &settings.seeds {
        for plan in &settings.plans {
            let t = Instant::now();
            let config = settings.config(plan, *seed, &data_dir)?;
            let run_dir = work_dir.join("runs").join(format!("{plan}-seed{seed}"));
            let manifest = cmd_train(&config, &run_dir, true)
                .with_context(|| format!("plan {plan}, seed {seed}"))?;
            let result = PlanResult {
                plan: plan.clone(),
                seed: *seed,
                summary: manifest.reports[0].summary.clone(),
                seconds: t.elapsed().as_secs_f64(),
            };
            progress(&result);
            results.push(result);
        }
    }
    Ok(TransferReport {
        settings: settings.clone(),
        results,
        seconds: start.elapsed().as_secs_f64(),
    })
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeMap;

    use super::*;

    fn summary(r1: f64, ha: f64) -> MetricSummary {
        MetricSummary {
            ma_f1: 0.0,
            ha_f1_at: BTreeMap::from([(1, ha)]),
            mrr: 0.0,
            recall_at: BTreeMap::from([(1, r1)]),
        }
    }

    #[test]
    fn medians_and_verdicts() {
        let mut results = Vec::new();
        for (plan, r1s) in [
            ("transtd_mean", [0.5, 0.9, 0.7]),
            ("bert_rc", [0.2, 0.705, 0.8]),
            ("transt_mean", [0.9, 0.9, 0.1]),
        ] {
            for (seed, r1) in r1s.into_iter().enumerate() {
                results.push(PlanResult {
                    plan: plan.into(),
                    seed: seed as u64,
                    summary: summary(r1, 0.3),
                    seconds: 0.0,
                });
            }
        }
        let report = TransferReport {
            settings: TransferSettings::default(),
            results,
            seconds: 0.0,
        };
        assert_eq!(report.median("transtd_mean", "r@1"), 0.7);
        let checks = report.checks();
        let by_rhs: BTreeMap<&str, Verdict> =
            checks.iter().map(|c| (c.rhs.as_str(), c.verdict)).collect();
        assert_eq!(by_rhs["bert_rc"], Verdict::Warn);
        assert_eq!(by_rhs["transt_mean"], Verdict::Fail);
        assert!(!by_rhs.contains_key("transd_rc"));
        assert_eq!(median(vec![1.0, 4.0, 2.0, 3.0]), 2.5);
    }

    #[test]
    fn configs_share_target_step_budget() {
        let s = TransferSettings::default();
        for plan in &s.plans {
            let c = s.config(plan, 1, Path::new("/d")).unwrap();
            let target = c.plan.stages.last().unwrap();
            assert_eq!(target.steps, Some(s.target_steps));
            assert_eq!(target.dataset, "target");
            assert_eq!(c.plan.seed, 1);
            assert!(c.datasets.values().all(|p| p.starts_with("/d")));
        }
    }
}
