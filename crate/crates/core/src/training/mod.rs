//! Multi-stage transfer training: auxiliary-domain pretraining, encoder
//! transfer with fresh heads, target-domain fine-tuning with layer freezing.

mod batches;
mod checkpoint;
mod objective;
mod optim;

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::chunking::ChunkConfig;
use crate::corpus::{Dataset, Vocabulary};
use crate::encoder::{EncoderConfig, Gradients};
use crate::error::{Error, Result};
use crate::heads::Pooling;
use crate::losses::{LossBreakdown, LossConfig};
use crate::model::{JointModel, ModelConfig};

pub use batches::{
    build_batches, prepare_training_set, resolve_class_weights, BatchConfig, BlockRef, DrLabelMode,
    LabelledBlock, QuestionBlocks, TrainingSet,
};
pub use checkpoint::{
    config_hash, Checkpoint, CheckpointManifest, TensorEntry, MANIFEST_FILE, TENSORS_FILE,
};
pub use objective::{batch_objective, BatchOutcome, Objective, Task, TaskSet, TrainItem};
pub use optim::{decays, lr_at, AdamConfig, AdamW};

/// Encoder shape shared by every stage of a plan; the vocabulary size comes
/// from the data.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelSettings {
    pub d: usize,
    pub layers: usize,
    pub heads: usize,
    pub ffn_dim: usize,
    pub max_len: usize,
    pub pooling: Pooling,
}

impl Default for ModelSettings {
    fn default() -> Self {
        let desk = EncoderConfig::desk(0);
        Self {
            d: desk.d,
            layers: desk.layers,
            heads: desk.heads,
            ffn_dim: desk.ffn_dim,
            max_len: desk.max_len,
            pooling: Pooling::Cls,
        }
    }
}

impl ModelSettings {
    pub fn model_config(&self, vocab_size: usize, seed: u64) -> ModelConfig {
        ModelConfig {
            encoder: EncoderConfig {
                vocab_size,
                d: self.d,
                layers: self.layers,
                heads: self.heads,
                max_len: self.max_len,
                ffn_dim: self.ffn_dim,
                seed,
            },
            pooling: self.pooling,
        }
    }
}

/// Where a stage's parameters come from.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum StageInit {
    /// Fresh random encoder and heads.
    #[default]
    Scratch,
    /// Encoder of the preceding stage, fresh heads.
    Previous,
    /// Encoder of a saved checkpoint, fresh heads.
    Checkpoint { path: PathBuf },
}

fn default_epochs() -> usize {
    1
}

fn default_lr() -> f64 {
    1e-3
}

fn default_warmup() -> usize {
    100
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageConfig {
    pub name: String,
    /// Name of the dataset this stage trains on.
    pub dataset: String,
    pub tasks: TaskSet,
    #[serde(default)]
    pub loss: LossConfig,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    /// Exact number of optimizer steps, cycling epochs; overrides `epochs`.
    #[serde(default)]
    pub steps: Option<usize>,
    #[serde(default = "default_lr")]
    pub lr: f64,
    #[serde(default = "default_warmup")]
    pub warmup_steps: usize,
    #[serde(default)]
    pub batch: BatchConfig,
    /// Train only the top `k` encoder layers (plus heads); `None` trains all.
    #[serde(default)]
    pub freeze_k: Option<usize>,
    #[serde(default)]
    pub init: StageInit,
    #[serde(default)]
    pub dr_label: DrLabelMode,
    #[serde(default)]
    pub adam: AdamConfig,
}

impl StageConfig {
    pub fn new(name: &str, dataset: &str, tasks: TaskSet) -> Self {
        Self {
            name: name.to_string(),
            dataset: dataset.to_string(),
            tasks,
            loss: LossConfig::default(),
            epochs: default_epochs(),
            steps: None,
            lr: default_lr(),
            warmup_steps: default_warmup(),
            batch: BatchConfig::default(),
            freeze_k: None,
            init: StageInit::Scratch,
            dr_label: DrLabelMode::Document,
            adam: AdamConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.loss.validate()?;
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "stage `{}`: lr must be positive",
                self.name
            )));
        }
        if self.batch.batch_size == 0 {
            return Err(Error::InvalidConfig(format!(
                "stage `{}`: batch_size must be positive",
                self.name
            )));
        }
        Ok(())
    }

    pub fn objective(&self, dr_weights: (f64, f64)) -> Objective {
        Objective::new(&self.tasks, self.loss, dr_weights)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainPlan {
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub model: ModelSettings,
    #[serde(default)]
    pub chunk: ChunkConfig,
    pub stages: Vec<StageConfig>,
}

impl TrainPlan {
    pub fn validate(&self) -> Result<()> {
        if self.stages.is_empty() {
            return Err(Error::InvalidConfig(format!(
                "plan `{}` has no stages",
                self.name
            )));
        }
        if self.chunk.max_len > self.model.max_len {
            return Err(Error::InvalidConfig(format!(
                "block length {} exceeds encoder length {}",
                self.chunk.max_len, self.model.max_len
            )));
        }
        let mut names = BTreeSet::new();
        for (i, stage) in self.stages.iter().enumerate() {
            stage.validate()?;
            if !names.insert(stage.name.as_str()) {
                return Err(Error::InvalidConfig(format!(
                    "duplicate stage name `{}`",
                    stage.name
                )));
            }
            if i == 0 && stage.init == StageInit::Previous {
                return Err(Error::InvalidConfig(format!(
                    "first stage `{}` cannot start from a previous stage",
                    stage.name
                )));
            }
            if let Some(k) = stage.freeze_k {
                if k > self.model.layers {
                    return Err(Error::LayerOutOfRange {
                        k,
                        layers: self.model.layers,
                    });
                }
            }
        }
        Ok(())
    }

    /// Datasets referenced by the stages, in first-use order.
    pub fn dataset_names(&self) -> Vec<String> {
        let mut seen = Vec::new();
        for s in &self.stages {
            if !seen.contains(&s.dataset) {
                seen.push(s.dataset.clone());
            }
        }
        seen
    }

    pub fn stage_seed(&self, index: usize) -> u64 {
        self.seed
            .wrapping_mul(0x5851_F42D_4C95_7F2D)
            .wrapping_add((index as u64 + 1).wrapping_mul(0x1405_7B7E_F767_814F))
    }
}

/// One line of the run log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepLog {
    pub step: usize,
    pub l_rc: f64,
    pub l_dr: f64,
    pub w_adjust: f64,
    pub total: f64,
    pub lr: f64,
}

impl StepLog {
    fn new(step: usize, loss: LossBreakdown, lr: f64) -> Self {
        Self {
            step,
            l_rc: loss.l_rc,
            l_dr: loss.l_dr,
            w_adjust: loss.w_adjust,
            total: loss.total,
            lr,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageReport {
    pub steps: usize,
    pub dr_weights: Option<(f64, f64)>,
    pub log: Vec<StepLog>,
}

fn set_trainable(model: &mut JointModel, freeze_k: Option<usize>) -> Result<()> {
    match freeze_k {
        Some(k) => model.freeze_layers(k),
        None => {
            for p in model.params.iter_mut() {
                p.trainable = true;
            }
            Ok(())
        }
    }
}

/// Trains `model` in place for one stage. The optimizer starts fresh.
pub fn run_stage(
    model: &mut JointModel,
    stage: &StageConfig,
    set: &TrainingSet,
    seed: u64,
) -> Result<StageReport> {
    stage.validate()?;
    set_trainable(model, stage.freeze_k)?;
    let first = build_batches(set, &stage.batch, seed, 0);
    let per_epoch = first.len();
    let total = stage.steps.unwrap_or(stage.epochs * per_epoch);
    if total == 0 {
        return Ok(StageReport {
            steps: 0,
            dr_weights: None,
            log: Vec::new(),
        });
    }
    if per_epoch == 0 {
        return Err(Error::EmptyInput("training blocks"));
    }
    let dr_weights = if stage.tasks.has_dr() {
        Some(resolve_class_weights(
            set,
            &first,
            stage.loss.class_weights,
        )?)
    } else {
        None
    };
    let objective = stage.objective(dr_weights.unwrap_or((1.0, 1.0)));
    let mut opt = AdamW::new(stage.adam, &model.params);
    let mut grads = Gradients::zeros_like(&model.params);
    let mut log = Vec::with_capacity(total);
    let mut epoch = 0;
    let mut batches = first;
    let mut step = 0;
    'outer: loop {
        for batch in &batches {
            if step == total {
                break 'outer;
            }
            step += 1;
            let items: Vec<TrainItem<'_>> = batch.iter().map(|&r| set.item(r)).collect();
            grads.fill_zero();
            let out = batch_objective(model, &items, &objective, None, Some(&mut grads))?;
            if !out.loss.is_finite()
                || grads
                    .tensors
                    .iter()
                    .any(|g| g.iter().any(|v| !v.is_finite()))
            {
                return Err(Error::Diverged { step });
            }
            let lr = lr_at(step, stage.lr, stage.warmup_steps, total);
            opt.step(&mut model.params, &grads, lr);
            log.push(StepLog::new(step, out.loss, lr));
        }
        epoch += 1;
        batches = build_batches(set, &stage.batch, seed, epoch);
    }
    Ok(StageReport {
        steps: step,
        dr_weights,
        log,
    })
}

/// Target model whose encoder tensors are copied from `source`; heads are
/// freshly initialized from `head_seed`.
pub fn transfer_init(
    target: &ModelConfig,
    source: &JointModel,
    head_seed: u64,
) -> Result<JointModel> {
    let mut model = JointModel::new(target.clone(), head_seed)?;
    let names: Vec<String> = model
        .encoder_ids()
        .into_iter()
        .map(|id| model.params.param(id).name.clone())
        .collect();
    for name in names {
        model.params.copy_from(&name, &source.params)?;
    }
    Ok(model)
}

#[derive(Debug, Clone)]
pub struct StageOutcome {
    pub name: String,
    pub report: StageReport,
    pub checkpoint: Checkpoint,
}

/// Runs every stage in order, chaining parameters. `on_stage` sees each
/// finished stage before the next starts, so partial progress survives a
/// later failure.
pub fn run_plan(
    plan: &TrainPlan,
    datasets: &BTreeMap<String, Dataset>,
    vocab: &Vocabulary,
    on_stage: &mut dyn FnMut(&StageOutcome) -> Result<()>,
) -> Result<JointModel> {
    plan.validate()?;
    let model_config = plan.model.model_config(vocab.len(), plan.seed);
    let mut previous: Option<JointModel> = None;
    for (index, stage) in plan.stages.iter().enumerate() {
        let seed = plan.stage_seed(index);
        let dataset = datasets.get(&stage.dataset).ok_or_else(|| {
            Error::InvalidConfig(format!(
                "stage `{}`: unknown dataset `{}`",
                stage.name, stage.dataset
            ))
        })?;
        let mut model = match &stage.init {
            StageInit::Scratch => JointModel::new(model_config.clone(), seed)?,
            StageInit::Previous => {
                let source = previous.as_ref().expect("validated: not the first stage");
                transfer_init(&model_config, source, seed)?
            }
            StageInit::Checkpoint { path } => {
                let source = Checkpoint::load(path)?;
                transfer_init(&model_config, &source.model, seed)?
            }
        };
        let set = prepare_training_set(dataset, vocab, &plan.chunk, stage.dr_label)?;
        let report = run_stage(&mut model, stage, &set, seed)?;
        let hash = config_hash(&(&plan.model, &plan.chunk, plan.seed, stage));
        let checkpoint = Checkpoint::new(
            model.clone(),
            &stage.name,
            report.steps,
            dataset.domain_tag,
            stage.tasks.clone(),
            hash,
            vocab.clone(),
        )
        .with_chunk(plan.chunk);
        on_stage(&StageOutcome {
            name: stage.name.clone(),
            report,
            checkpoint,
        })?;
        previous = Some(model);
    }
    Ok(previous.expect("plan has at least one stage"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{AnswerSpan, Document, DomainTag, QAExample, Question, Split};

    fn dataset() -> Dataset {
        let mut documents = BTreeMap::new();
        let mut examples = Vec::new();
        for i in 0..6 {
            let gold_id = format!("g{i}");
            let neg_id = format!("n{i}");
            documents.insert(
                gold_id.clone(),
                Document::new(&gold_id, format!("filler red key{i} answer is here . more")),
            );
            documents.insert(
                neg_id.clone(),
                Document::new(&neg_id, "unrelated words only blue"),
            );
            examples.push(QAExample {
                question: Question::new(format!("q{i}"), format!("key{i}"), "what"),
                candidate_doc_ids: vec![gold_id.clone(), neg_id],
                gold: Some(AnswerSpan::new(&gold_id, 3, 5)),
                answerable: true,
            });
        }
        Dataset {
            name: "toy".into(),
            split: Split::Train,
            examples,
            documents,
            domain_tag: DomainTag::Target,
        }
    }

    fn plan(stages: Vec<StageConfig>) -> TrainPlan {
        TrainPlan {
            name: "t".into(),
            seed: 9,
            model: ModelSettings {
                d: 8,
                layers: 2,
                heads: 2,
                ffn_dim: 16,
                max_len: 24,
                pooling: Pooling::Mean,
            },
            chunk: ChunkConfig {
                max_len: 24,
                stride: 4,
            },
            stages,
        }
    }

    fn stage(name: &str, tasks: TaskSet) -> StageConfig {
        let mut s = StageConfig::new(name, "toy", tasks);
        s.warmup_steps = 2;
        s.lr = 5e-3;
        s.batch.batch_size = 4;
        s
    }

    fn run(p: &TrainPlan) -> Vec<StageOutcome> {
        let ds = dataset();
        let vocab = Vocabulary::build(ds.token_stream());
        let datasets = BTreeMap::from([("toy".to_string(), ds)]);
        let mut outs = Vec::new();
        run_plan(p, &datasets, &vocab, &mut |o| {
            outs.push(o.clone());
            Ok(())
        })
        .unwrap();
        outs
    }

    #[test]
    fn zero_epochs_is_identity() {
        let mut s = stage("a", TaskSet::joint());
        s.epochs = 0;
        let p = plan(vec![s]);
        let outs = run(&p);
        let vocab = outs[0].checkpoint.manifest.vocabulary.clone();
        let init =
            JointModel::new(p.model.model_config(vocab.len(), p.seed), p.stage_seed(0)).unwrap();
        assert_eq!(
            outs[0].checkpoint.model.params.content_hash(),
            init.params.content_hash()
        );
        assert_eq!(outs[0].report.steps, 0);
    }

    #[test]
    fn training_lowers_the_loss() {
        let mut s = stage("a", TaskSet::joint());
        s.steps = Some(60);
        let outs = run(&plan(vec![s]));
        let log = &outs[0].report.log;
        assert_eq!(log.len(), 60);
        let head: f64 = log[..10].iter().map(|l| l.total).sum::<f64>() / 10.0;
        let tail: f64 = log[50..].iter().map(|l| l.total).sum::<f64>() / 10.0;
        assert!(tail < head, "{head} -> {tail}");
        for l in log {
            assert!((l.total - (l.w_adjust * l.l_rc + 4.0 * l.l_dr)).abs() < 1e-9);
        }
    }

    #[test]
    fn frozen_tensors_stay_at_init() {
        let a = {
            let mut s = stage("a", TaskSet::rc());
            s.steps = Some(3);
            s
        };
        let b = {
            let mut s = stage("b", TaskSet::joint());
            s.steps = Some(3);
            s.freeze_k = Some(1);
            s.init = StageInit::Previous;
            s
        };
        let outs = run(&plan(vec![a, b]));
        let before = &outs[0].checkpoint.model.params;
        let after = &outs[1].checkpoint.model.params;
        for p in after.iter() {
            let old = before.get(&p.name).unwrap();
            let frozen =
                p.name.starts_with("encoder.embed") || p.name.starts_with("encoder.layer.0.");
            if frozen {
                assert_eq!(p.value, old.value, "{}", p.name);
            } else {
                assert_ne!(p.value, old.value, "{}", p.name);
            }
        }
    }

    #[test]
    fn deterministic_runs() {
        let mut s = stage("a", TaskSet::joint());
        s.steps = Some(5);
        let p = plan(vec![s]);
        let a = run(&p);
        let b = run(&p);
        assert_eq!(
            a[0].checkpoint.manifest.tensor_hash,
            b[0].checkpoint.manifest.tensor_hash
        );
        assert_eq!(a[0].report, b[0].report);
    }

    #[test]
    fn transfer_copies_encoder_and_refreshes_heads() {
        let ds = dataset();
        let vocab = Vocabulary::build(ds.token_stream());
        let p = plan(vec![]);
        let aux = JointModel::new(p.model.model_config(vocab.len(), 1), 2).unwrap();
        let target = transfer_init(&p.model.model_config(vocab.len(), 3), &aux, 4).unwrap();
        for (a, t) in aux.params.iter().zip(target.params.iter()) {
            assert_eq!(
                a.value == t.value,
                a.name.starts_with("encoder."),
                "{}",
                a.name
            );
        }
        let mut wide = p.model.clone();
        wide.d = 16;
        wide.ffn_dim = 32;
        match transfer_init(&wide.model_config(vocab.len(), 3), &aux, 4) {
            Err(Error::ShapeMismatch { name, .. }) => assert!(name.starts_with("encoder.")),
            other => panic!("expected shape mismatch, got {other:?}"),
        }
    }

    #[test]
    fn plan_validation() {
        let mut s = stage("a", TaskSet::rc());
        s.init = StageInit::Previous;
        assert!(plan(vec![s]).validate().is_err());
        assert!(plan(vec![]).validate().is_err());
        let mut s = stage("a", TaskSet::rc());
        s.freeze_k = Some(3);
        assert!(matches!(
            plan(vec![s]).validate(),
            Err(Error::LayerOutOfRange { .. })
        ));
    }

    #[test]
    fn plan_toml_round_trip() {
        let text = r#"
name = "transtd"
seed = 3
[model]
d = 32
pooling = "mean"
[chunk]
max_len = 64
stride = 24
[[stages]]
name = "aux"
dataset = "aux"
tasks = ["rc", "dr"]
[[stages]]
name = "target"
dataset = "target"
tasks = ["rc", "dr"]
freeze_k = 1
init = { kind = "previous" }
[stages.loss]
lambda = 4.0
adjustable = true
class_weights = { mode = "auto" }
epsilon_len = 1.0
"#;
        let p: TrainPlan = toml::from_str(text).unwrap();
        assert_eq!(p.stages[1].init, StageInit::Previous);
        assert!(p.stages[1].loss.adjustable);
        assert_eq!(p.model.d, 32);
        assert_eq!(p.model.layers, 2);
        let back: TrainPlan = toml::from_str(&toml::to_string(&p).unwrap()).unwrap();
        assert_eq!(back, p);
    }
}
