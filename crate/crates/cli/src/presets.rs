//! Shipped plan presets, one per ablation row: single-task baselines,
//! transfer across domains, joint training across tasks, and both.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use anyhow::{anyhow, Result};
use jointqa::chunking::ChunkConfig;
use jointqa::heads::Pooling;
use jointqa::ranking::StrategyName;
use jointqa::training::{ModelSettings, StageConfig, StageInit, TaskSet, TrainPlan};

use crate::config::{EvaluationConfig, RunConfig};

pub const PRESETS: [&str; 11] = [
    "bert_dr",
    "bert_rc",
    "transd_dr",
    "transd_rc",
    "transt_cls",
    "transt_mean",
    "transtd_cls",
    "transtd_mean",
    "transtd_plus_cls",
    "transtd_plus_mean",
    "transtd_single",
];

/// Model scale of a preset.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum Profile {
    /// Small encoder that trains on one CPU core.
    #[default]
    Desk,
    /// BERT-large shapes and the matching optimizer schedule.
    Large,
}

impl FromStr for Profile {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "desk" => Ok(Profile::Desk),
            "large" => Ok(Profile::Large),
            other => Err(anyhow!(
                "unknown profile `{other}` (expected desk or large)"
            )),
        }
    }
}

impl fmt::Display for Profile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Profile::Desk => "desk",
            Profile::Large => "large",
        })
    }
}

struct Shape {
    aux: Option<TaskSet>,
    target: TaskSet,
    pooling: Pooling,
    adjustable: bool,
    aux_lambda: Option<f64>,
}

fn shape(name: &str) -> Result<Shape> {
    let joint = TaskSet::joint;
    let s = |aux: Option<TaskSet>, target: TaskSet, pooling: Pooling| Shape {
        aux,
        target,
        pooling,
        adjustable: false,
        aux_lambda: None,
    };
    Ok(match name {
        "bert_dr" => s(None, TaskSet::dr(), Pooling::Mean),
        "bert_rc" => s(None, TaskSet::rc(), Pooling::Mean),
        "transd_dr" => s(Some(TaskSet::rc()), TaskSet::dr(), Pooling::Mean),
        "transd_rc" => s(Some(TaskSet::rc()), TaskSet::rc(), Pooling::Mean),
        "transt_cls" => s(None, joint(), Pooling::Cls),
        "transt_mean" => s(None, joint(), Pooling::Mean),
        "transtd_cls" => s(Some(joint()), joint(), Pooling::Cls),
        "transtd_mean" => s(Some(joint()), joint(), Pooling::Mean),
        "transtd_plus_cls" => Shape {
            adjustable: true,
            ..s(Some(joint()), joint(), Pooling::Cls)
        },
        "transtd_plus_mean" => Shape {
            adjustable: true,
            ..s(Some(joint()), joint(), Pooling::Mean)
        },
        "transtd_single" => Shape {
            aux_lambda: Some(0.0),
            ..s(Some(joint()), joint(), Pooling::Mean)
        },
        other => {
            return Err(anyhow!(
                "unknown preset `{other}` (known: {})",
                PRESETS.join(", ")
            ))
        }
    })
}

/// Ranking used to evaluate a plan: reader-only scoring when the final
/// stage has no matching head, matching-only when it has no reader.
pub fn evaluation_strategy(tasks: &TaskSet) -> (StrategyName, f64) {
    match (tasks.has_rc(), tasks.has_dr()) {
        (true, false) => (StrategyName::OursWithoutDoc, 0.5),
        (false, true) => (StrategyName::OursWithDoc, 1.0),
        _ => (StrategyName::OursWithDoc, 0.5),
    }
}

/// The preset as a run configuration whose dataset paths point at
/// `${JOINTQA_DATA}` (the layout written by the `synth` command).
pub fn preset(name: &str, profile: Profile) -> Result<RunConfig> {
    let shape = shape(name)?;
    let (model, chunk, lr, warmup) = match profile {
        Profile::Desk => (
            ModelSettings {
                pooling: shape.pooling,
                ..ModelSettings::default()
            },
            ChunkConfig {
                max_len: 128,
                stride: 48,
            },
            1e-3,
            100,
        ),
        Profile::Large => (
            ModelSettings {
                d: 1024,
                layers: 24,
                heads: 16,
                ffn_dim: 4096,
                max_len: 512,
                pooling: shape.pooling,
            },
            ChunkConfig {
                max_len: 512,
                stride: 192,
            },
            5.5e-6,
            10_000,
        ),
    };
    let configure = |mut stage: StageConfig| {
        stage.lr = lr;
        stage.warmup_steps = warmup;
        stage.loss.adjustable = shape.adjustable;
        stage
    };
    let mut stages = Vec::new();
    if let Some(aux_tasks) = &shape.aux {
        let mut aux = configure(StageConfig::new("aux", "aux", aux_tasks.clone()));
        if let Some(l) = shape.aux_lambda {
            aux.loss.lambda = l;
        }
        stages.push(aux);
    }
    let mut target = configure(StageConfig::new("target", "target", shape.target.clone()));
    target.epochs = 3;
    if shape.aux.is_some() {
        target.init = StageInit::Previous;
    }
    stages.push(target);

    let mut datasets = BTreeMap::new();
    if shape.aux.is_some() {
        datasets.insert("aux".to_string(), "${JOINTQA_DATA}/aux.json".into());
    }
    datasets.insert(
        "target".to_string(),
        "${JOINTQA_DATA}/target_train.json".into(),
    );
    let (strategy, alpha) = evaluation_strategy(&shape.target);
    let evaluation = EvaluationConfig {
        strategy,
        alpha,
        ..EvaluationConfig::new("${JOINTQA_DATA}/target_validation.json")
    };
    Ok(RunConfig {
        plan: TrainPlan {
            name: name.to_string(),
            seed: 0,
            model,
            chunk,
            stages,
        },
        datasets,
        evaluation: Some(evaluation),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_preset_validates_and_round_trips() {
        for name in PRESETS {
            for profile in [Profile::Desk, Profile::Large] {
                let c = preset(name, profile).unwrap();
                c.validate().unwrap();
                let back = RunConfig::from_toml(&c.to_toml().unwrap()).unwrap();
                assert_eq!(back, c, "{name}");
            }
        }
    }

    #[test]
    fn rows_map_to_stage_structure() {
        let bert_rc = preset("bert_rc", Profile::Desk).unwrap();
        assert_eq!(bert_rc.plan.stages.len(), 1);
        assert_eq!(bert_rc.plan.stages[0].tasks, TaskSet::rc());

        let plus = preset("transtd_plus_mean", Profile::Desk).unwrap();
        assert_eq!(plus.plan.stages.len(), 2);
        assert_eq!(plus.plan.model.pooling, Pooling::Mean);
        assert!(plus
            .plan
            .stages
            .iter()
            .all(|s| s.loss.adjustable && s.tasks == TaskSet::joint()));
        assert_eq!(plus.plan.stages[1].init, StageInit::Previous);

        let single = preset("transtd_single", Profile::Desk).unwrap();
        assert_eq!(single.plan.stages[0].loss.lambda, 0.0);

        let transd = preset("transd_dr", Profile::Desk).unwrap();
        assert_eq!(transd.plan.stages[0].tasks, TaskSet::rc());
        assert_eq!(transd.plan.stages[1].tasks, TaskSet::dr());
        assert_eq!(transd.evaluation.unwrap().alpha, 1.0);
    }

    #[test]
    fn large_profile_uses_the_long_schedule() {
        let c = preset("transtd_mean", Profile::Large).unwrap();
        assert_eq!(c.plan.stages[0].lr, 5.5e-6);
        assert_eq!(c.plan.stages[0].warmup_steps, 10_000);
        assert_eq!(
            c.plan.chunk,
            ChunkConfig {
                max_len: 512,
                stride: 192
            }
        );
    }

    #[test]
    fn unknown_preset_lists_known_names() {
        let err = preset("nope", Profile::Desk).unwrap_err().to_string();
        assert!(err.contains("bert_rc"));
    }
}
