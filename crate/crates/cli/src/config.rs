//! Run configuration files: a training plan, the datasets its stages name,
//! and an optional evaluation pass over a held-out dataset.
//!
//! Paths may reference environment variables (`$VAR` or `${VAR}`); relative
//! paths resolve against the directory of the configuration file.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use jointqa::heads::Pooling;
use jointqa::ranking::{RankOptions, RankingStrategy, StrategyName};
use jointqa::training::{StageInit, TrainPlan};
use serde::{Deserialize, Serialize};

fn default_alpha() -> f64 {
    0.5
}

fn default_k() -> usize {
    5
}

fn default_ks() -> Vec<usize> {
    vec![1, 5]
}

fn default_pool_k() -> usize {
    20
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationConfig {
    pub dataset: PathBuf,
    #[serde(default)]
    pub strategy: StrategyName,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    /// Answers kept per question.
    #[serde(default = "default_k")]
    pub k: usize,
    /// Abstain when the best answer scores below this value.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threshold: Option<f64>,
    /// Cutoffs for the @K metrics.
    #[serde(default = "default_ks")]
    pub ks: Vec<usize>,
    #[serde(default)]
    pub global_norm: bool,
    /// BM25 index used for questions without a candidate pool.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub index: Option<PathBuf>,
    #[serde(default = "default_pool_k")]
    pub pool_k: usize,
}

impl EvaluationConfig {
    pub fn new(dataset: impl Into<PathBuf>) -> Self {
        Self {
            dataset: dataset.into(),
            strategy: StrategyName::default(),
            alpha: default_alpha(),
            k: default_k(),
            threshold: None,
            ks: default_ks(),
            global_norm: false,
            index: None,
            pool_k: default_pool_k(),
        }
    }

    pub fn strategy(&self) -> Result<RankingStrategy> {
        Ok(RankingStrategy::new(self.strategy, self.alpha)?)
    }

    pub fn rank_options(&self) -> RankOptions {
        RankOptions {
            k: self.k,
            threshold: self.threshold.unwrap_or(f64::NEG_INFINITY),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    #[serde(flatten)]
    pub plan: TrainPlan,
    /// Dataset files by the names the stages use.
    pub datasets: BTreeMap<String, PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub evaluation: Option<EvaluationConfig>,
}

/// Command-line adjustments applied on top of a configuration file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub lambda: Option<f64>,
    pub stride: Option<usize>,
    pub pooling: Option<Pooling>,
    pub adjustable: bool,
    pub freeze_k: Option<usize>,
    pub seed: Option<u64>,
    pub strategy: Option<StrategyName>,
    pub alpha: Option<f64>,
    pub k: Option<usize>,
}

fn expand(path: &Path, base: &Path) -> Result<PathBuf> {
    let raw = path.to_string_lossy();
    let expanded = shellexpand::env(&raw).with_context(|| format!("expanding `{raw}`"))?;
    let p = PathBuf::from(expanded.as_ref());
    Ok(if p.is_relative() { base.join(p) } else { p })
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string_pretty(self)?)
    }

    /// Reads, expands paths and validates a configuration file.
    pub fn load(path: &Path) -> Result<Self> {
        let text =
            fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut config =
            Self::from_toml(&text).with_context(|| format!("parsing {}", path.display()))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        config.resolve_paths(&base)?;
        config.validate()?;
        Ok(config)
    }

    /// Expands environment variables and anchors relative paths at `base`.
    pub fn resolve_paths(&mut self, base: &Path) -> Result<()> {
        for p in self.datasets.values_mut() {
            *p = expand(p, base)?;
        }
        for stage in &mut self.plan.stages {
            if let StageInit::Checkpoint { path } = &mut stage.init {
                *path = expand(path, base)?;
            }
        }
        if let Some(eval) = &mut self.evaluation {
            eval.dataset = expand(&eval.dataset, base)?;
            if let Some(index) = &mut eval.index {
                *index = expand(index, base)?;
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.plan.validate()?;
        for stage in &self.plan.stages {
            if !self.datasets.contains_key(&stage.dataset) {
                bail!(
                    "stage `{}` names dataset `{}`, which is not listed under [datasets]",
                    stage.name,
                    stage.dataset
                );
            }
        }
        if let Some(eval) = &self.evaluation {
            eval.strategy()?;
            if eval.k == 0 || eval.ks.is_empty() {
                bail!("evaluation needs k > 0 and at least one metric cutoff");
            }
        }
        Ok(())
    }

    /// Applies command-line overrides. `freeze_k` goes to stages that start
    /// from transferred parameters, or to every stage of a plan without
    /// transfer.
    pub fn apply(&mut self, o: &Overrides) -> Result<()> {
        let plan = &mut self.plan;
        if let Some(seed) = o.seed {
            plan.seed = seed;
        }
        if let Some(stride) = o.stride {
            plan.chunk.stride = stride;
        }
        if let Some(pooling) = o.pooling {
            plan.model.pooling = pooling;
        }
        for stage in &mut plan.stages {
            if let Some(lambda) = o.lambda {
                stage.loss.lambda = lambda;
            }
            if o.adjustable {
                stage.loss.adjustable = true;
            }
        }
        if let Some(k) = o.freeze_k {
            let transferred = plan.stages.iter().any(|s| s.init != StageInit::Scratch);
            for stage in &mut plan.stages {
                if !transferred || stage.init != StageInit::Scratch {
                    stage.freeze_k = Some(k);
                }
            }
        }
        if o.strategy.is_some() || o.alpha.is_some() || o.k.is_some() {
            let Some(eval) = &mut self.evaluation else {
                bail!("--strategy, --alpha and --k need an [evaluation] section");
            };
            if let Some(s) = o.strategy {
                eval.strategy = s;
            }
            if let Some(a) = o.alpha {
                eval.alpha = a;
            }
            if let Some(k) = o.k {
                eval.k = k;
            }
        }
        self.validate()
    }
}
