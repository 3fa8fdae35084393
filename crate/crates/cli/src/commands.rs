//! One function per subcommand. Each takes plain paths and options so the
//! binary, the sweep driver and the tests share the same code paths.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use anyhow::{anyhow, bail, Context, Result};
use jointqa::chunking::{make_blocks, BlockLabel, ChunkConfig};
use jointqa::corpus::{
    ingest_dataset, Dataset, DatasetCounts, DatasetFormat, DomainTag, IngestOptions, Split,
    Vocabulary,
};
use jointqa::heads::SpanConstraints;
use jointqa::metrics::{self, ErrorClass, EvalReport, GoldAnswer};
use jointqa::model::JointModel;
use jointqa::pipeline::{
    document_rankings, prediction_rows, rank_dataset, score_dataset, InferenceConfig,
};
use jointqa::ranking::{
    read_predictions, write_predictions, PredictionRow, QuestionRanking, RankOptions,
    RankingStrategy,
};
use jointqa::retrieval::{augment_pools, InvertedIndex};
use jointqa::synth::{generate, SynthConfig, SynthPaths};
use jointqa::training::{run_plan, Checkpoint, StageInit, MANIFEST_FILE as CHECKPOINT_MANIFEST};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::config::{EvaluationConfig, RunConfig};
use crate::manifest::{
    bytes_hash, file_hash, InputRecord, MetricSummary, ReportRecord, RunManifest, RunStatus,
    StageRecord, CONFIG_FILE,
};

fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    fs::write(path, serde_json::to_vec_pretty(value)?)
        .with_context(|| format!("writing {}", path.display()))
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_slice(&bytes).with_context(|| format!("parsing {}", path.display()))
}

pub fn load_dataset(path: &Path) -> Result<Dataset> {
    Dataset::load(path).with_context(|| format!("loading dataset {}", path.display()))
}

pub fn load_index(path: &Path) -> Result<InvertedIndex> {
    read_json(path)
}

#[derive(Debug, Clone)]
pub struct IngestArgs {
    pub questions: PathBuf,
    pub corpus: PathBuf,
    pub format: DatasetFormat,
    pub name: String,
    pub split: Split,
    pub domain: DomainTag,
    pub out: PathBuf,
}

/// Parses raw question and corpus files into a validated dataset file.
pub fn cmd_ingest(args: &IngestArgs) -> Result<DatasetCounts> {
    let options = IngestOptions {
        name: args.name.clone(),
        split: args.split,
        domain_tag: args.domain,
    };
    let dataset = ingest_dataset(&args.questions, &args.corpus, args.format, &options)?;
    dataset.save(&args.out)?;
    Ok(dataset.counts())
}

/// Builds a BM25 index over a dataset's documents. Returns the document count.
pub fn cmd_index(dataset: &Path, out: &Path) -> Result<usize> {
    let ds = load_dataset(dataset)?;
    let index = InvertedIndex::build(ds.documents.values())?;
    write_json(out, &index)?;
    Ok(index.doc_count)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalRow {
    pub question_id: String,
    pub results: Vec<(String, f64)>,
}

/// Top-`k` documents per question. With `augment_out`, candidate pools are
/// extended to `k` documents and the dataset is written there.
pub fn cmd_retrieve(
    index: &Path,
    dataset: &Path,
    k: usize,
    augment_out: Option<&Path>,
) -> Result<Vec<RetrievalRow>> {
    let index = load_index(index)?;
    let mut ds = load_dataset(dataset)?;
    let rows = ds
        .examples
        .iter()
        .map(|ex| RetrievalRow {
            question_id: ex.question.question_id.clone(),
            results: index.retrieve_question(&ex.question, k, false),
        })
        .collect();
    if let Some(out) = augment_out {
        augment_pools(&mut ds, &index, k);
        ds.validate()?;
        ds.save(out)?;
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockDump {
    pub doc_id: String,
    pub block_index: usize,
    /// 1-based inclusive document token range of the window.
    pub window: (usize, usize),
    pub tokens: Vec<String>,
    pub label: BlockLabel,
}

/// Blocks of every candidate document of one question, with gold labels.
pub fn cmd_chunk(dataset: &Path, question_id: &str, chunk: &ChunkConfig) -> Result<Vec<BlockDump>> {
    let ds = load_dataset(dataset)?;
    let ex = ds
        .examples
        .iter()
        .find(|e| e.question.question_id == question_id)
        .ok_or_else(|| anyhow!("question `{question_id}` not in {}", dataset.display()))?;
    let vocab = Vocabulary::build(ds.token_stream());
    let mut out = Vec::new();
    for doc_id in &ex.candidate_doc_ids {
        let doc = &ds.documents[doc_id];
        let mut blocks = make_blocks(&ex.question, doc, &vocab, chunk)?;
        let gold = ex.gold.as_ref().filter(|g| &g.doc_id == doc_id);
        jointqa::chunking::label_blocks(&mut blocks, gold);
        for b in blocks {
            out.push(BlockDump {
                doc_id: doc_id.clone(),
                block_index: b.block_index,
                window: b.window.one_based(),
                tokens: b
                    .token_ids
                    .iter()
                    .map(|&id| vocab.token(id).unwrap_or("?").to_string())
                    .collect(),
                label: b.label,
            });
        }
    }
    Ok(out)
}

/// Ranking and inference options of a prediction run.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictOptions {
    pub strategy: RankingStrategy,
    pub rank: RankOptions,
    pub global_norm: bool,
    pub pool_k: usize,
    pub index: Option<PathBuf>,
}

impl PredictOptions {
    pub fn from_evaluation(eval: &EvaluationConfig) -> Result<Self> {
        Ok(Self {
            strategy: eval.strategy()?,
            rank: eval.rank_options(),
            global_norm: eval.global_norm,
            pool_k: eval.pool_k,
            index: eval.index.clone(),
        })
    }
}

impl Default for PredictOptions {
    fn default() -> Self {
        Self {
            strategy: RankingStrategy::default(),
            rank: RankOptions::default(),
            global_norm: false,
            pool_k: 20,
            index: None,
        }
    }
}

/// Scores and ranks every question of `dataset` with a trained model.
pub fn predict_with_model(
    model: &JointModel,
    vocab: &Vocabulary,
    chunk: ChunkConfig,
    dataset: &Dataset,
    options: &PredictOptions,
) -> Result<Vec<QuestionRanking>> {
    let index = options.index.as_deref().map(load_index).transpose()?;
    let cfg = InferenceConfig {
        chunk,
        span: SpanConstraints::default(),
        global_norm: options.global_norm,
        pool_k: options.pool_k,
    };
    let scored = score_dataset(model, dataset, vocab, &cfg, index.as_ref())?;
    Ok(rank_dataset(&scored, &options.strategy, &options.rank))
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictionOutput {
    pub rows: Vec<PredictionRow>,
    pub doc_rankings: BTreeMap<String, Vec<String>>,
}

fn write_prediction_files(
    rankings: &[QuestionRanking],
    dataset: &Dataset,
    out: &Path,
    doc_rankings_out: &Path,
) -> Result<PredictionOutput> {
    let rows = prediction_rows(rankings, dataset)?;
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    write_predictions(out, &rows)?;
    let doc_rankings = document_rankings(rankings);
    write_json(doc_rankings_out, &doc_rankings)?;
    Ok(PredictionOutput { rows, doc_rankings })
}

/// Default location of the document ranking file next to a prediction file.
pub fn doc_rankings_path(predictions: &Path) -> PathBuf {
    predictions.with_extension("docs.json")
}

/// Writes ranked answers (JSON lines) and document rankings for a dataset.
pub fn cmd_predict(
    checkpoint: &Path,
    dataset: &Path,
    options: &PredictOptions,
    out: &Path,
    doc_rankings_out: Option<&Path>,
) -> Result<PredictionOutput> {
    let ck = Checkpoint::load(checkpoint)?;
    let ds = load_dataset(dataset)?;
    let rankings = predict_with_model(
        &ck.model,
        &ck.manifest.vocabulary,
        ck.manifest.chunk,
        &ds,
        options,
    )?;
    let docs_path = doc_rankings_out.map_or_else(|| doc_rankings_path(out), Path::to_path_buf);
    write_prediction_files(&rankings, &ds, out, &docs_path)
}

/// Scores a prediction file against a dataset's gold answers. Without a
/// document ranking file, documents are ranked by first appearance among
/// the answers.
pub fn cmd_evaluate(
    predictions: &Path,
    dataset: &Path,
    doc_rankings: Option<&Path>,
    ks: &[usize],
) -> Result<EvalReport> {
    let ds = load_dataset(dataset)?;
    let rows = read_predictions(predictions)?;
    let docs = match doc_rankings {
        Some(p) => read_json(p)?,
        None => metrics::rankings_from_rows(&rows),
    };
    let answers = metrics::project_predictions(&rows, &ds)?;
    Ok(metrics::evaluate(
        &answers,
        &docs,
        &GoldAnswer::from_dataset(&ds),
        ks,
    )?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorAnalysis {
    pub taxonomy: BTreeMap<ErrorClass, usize>,
    /// Top-1 class of every question.
    pub questions: Vec<(String, ErrorClass)>,
}

impl ErrorAnalysis {
    pub fn table(&self) -> String {
        let total: usize = self.taxonomy.values().sum();
        let mut out = format!("{:<16}{:>6}{:>9}\n", "class", "count", "share");
        for (class, n) in &self.taxonomy {
            let share = if total == 0 {
                0.0
            } else {
                *n as f64 / total as f64
            };
            out.push_str(&format!("{:<16}{:>6}{:>9.3}\n", class.as_str(), n, share));
        }
        out
    }
}

/// Error classes of the top-1 answers; the histogram covers answerable
/// questions.
pub fn cmd_analyze_errors(predictions: &Path, dataset: &Path) -> Result<ErrorAnalysis> {
    let report = cmd_evaluate(predictions, dataset, None, &[1])?;
    Ok(ErrorAnalysis {
        taxonomy: report.taxonomy.clone(),
        questions: report
            .per_question
            .iter()
            .map(|q| (q.question_id.clone(), q.error_class))
            .collect(),
    })
}

fn input_record(path: &Path) -> Result<InputRecord> {
    let target = if path.is_dir() {
        path.join(CHECKPOINT_MANIFEST)
    } else {
        path.to_path_buf()
    };
    Ok(InputRecord {
        path: path.to_path_buf(),
        sha256: file_hash(&target)?,
    })
}

/// Evaluates `model` on the configured dataset and writes the prediction,
/// ranking and report files under `<run_dir>/eval`.
fn evaluate_into_run(
    model: &JointModel,
    vocab: &Vocabulary,
    chunk: ChunkConfig,
    eval: &EvaluationConfig,
    run_dir: &Path,
    subdir: &str,
) -> Result<ReportRecord> {
    let ds = load_dataset(&eval.dataset)?;
    let options = PredictOptions::from_evaluation(eval)?;
    let rankings = predict_with_model(model, vocab, chunk, &ds, &options)?;
    let rel = PathBuf::from(subdir);
    let predictions = rel.join("predictions.jsonl");
    let doc_rankings = rel.join("doc_rankings.json");
    let report_path = rel.join("report.json");
    let out = write_prediction_files(
        &rankings,
        &ds,
        &run_dir.join(&predictions),
        &run_dir.join(&doc_rankings),
    )?;
    let answers = metrics::project_predictions(&out.rows, &ds)?;
    let report = metrics::evaluate(
        &answers,
        &out.doc_rankings,
        &GoldAnswer::from_dataset(&ds),
        &eval.ks,
    )?;
    let bytes = serde_json::to_vec_pretty(&report)?;
    fs::write(run_dir.join(&report_path), &bytes)?;
    Ok(ReportRecord {
        dataset: eval.dataset.clone(),
        strategy: options.strategy.name,
        alpha: options.strategy.alpha,
        k: options.rank.k,
        predictions,
        doc_rankings,
        report: report_path,
        report_hash: bytes_hash(&bytes),
        summary: MetricSummary::from(&report),
    })
}

/// Runs every stage of the plan, writing checkpoints and logs as stages
/// finish, then evaluates the final model when an evaluation is configured.
/// A failing stage leaves a manifest with the completed stages and a
/// `failed` status before the error is returned.
pub fn cmd_train(config: &RunConfig, run_dir: &Path, deterministic: bool) -> Result<RunManifest> {
    config.validate()?;
    fs::create_dir_all(run_dir).with_context(|| format!("creating {}", run_dir.display()))?;
    let snapshot = config.to_toml()?;
    fs::write(run_dir.join(CONFIG_FILE), &snapshot)?;

    let mut inputs = BTreeMap::new();
    let mut datasets = BTreeMap::new();
    for name in config.plan.dataset_names() {
        let path = &config.datasets[&name];
        inputs.insert(format!("dataset:{name}"), input_record(path)?);
        datasets.insert(name, load_dataset(path)?);
    }
    for stage in &config.plan.stages {
        if let StageInit::Checkpoint { path } = &stage.init {
            inputs.insert(format!("checkpoint:{}", stage.name), input_record(path)?);
        }
    }
    if let Some(eval) = &config.evaluation {
        inputs.insert("evaluation".into(), input_record(&eval.dataset)?);
        if let Some(index) = &eval.index {
            inputs.insert("index".into(), input_record(index)?);
        }
    }
    let vocab = Vocabulary::build(
        config
            .plan
            .dataset_names()
            .iter()
            .flat_map(|n| datasets[n].token_stream()),
    );

    let config_hash = bytes_hash(snapshot.as_bytes());
    let id_source = serde_json::to_vec(&(&config_hash, &inputs))?;
    let mut manifest = RunManifest {
        run_id: bytes_hash(&id_source)[..16].to_string(),
        config: CONFIG_FILE.into(),
        config_hash,
        deterministic,
        inputs,
        vocabulary_size: vocab.len(),
        stages: Vec::new(),
        reports: Vec::new(),
        status: RunStatus::Completed,
    };

    let mut records = Vec::new();
    let result = run_plan(&config.plan, &datasets, &vocab, &mut |outcome| {
        let stage_dir = PathBuf::from("stages").join(&outcome.name);
        let checkpoint = stage_dir.join("checkpoint");
        let log = stage_dir.join("log.jsonl");
        outcome.checkpoint.save(&run_dir.join(&checkpoint))?;
        let mut lines = Vec::new();
        for entry in &outcome.report.log {
            lines.extend(serde_json::to_vec(entry).expect("log entries serialize"));
            lines.push(b'\n');
        }
        let log_path = run_dir.join(&log);
        fs::write(&log_path, lines).map_err(|e| jointqa::Error::io(&log_path, e))?;
        records.push(StageRecord {
            name: outcome.name.clone(),
            steps: outcome.report.steps,
            checkpoint,
            log,
            tensor_hash: outcome.checkpoint.manifest.tensor_hash.clone(),
            dr_weights: outcome.report.dr_weights,
            final_loss: outcome.report.log.last().map(|l| l.total),
        });
        Ok(())
    });
    manifest.stages = records;
    let model = match result {
        Ok(model) => model,
        Err(e) => {
            let stage = config
                .plan
                .stages
                .get(manifest.stages.len())
                .map_or_else(|| "unknown".to_string(), |s| s.name.clone());
            manifest.status = RunStatus::Failed {
                stage: stage.clone(),
                error: e.to_string(),
            };
            manifest.save(run_dir)?;
            return Err(anyhow!(e).context(format!("stage `{stage}` failed")));
        }
    };
    if let Some(eval) = &config.evaluation {
        manifest.reports.push(evaluate_into_run(
            &model,
            &vocab,
            config.plan.chunk,
            eval,
            run_dir,
            "eval",
        )?);
    }
    manifest.save(run_dir)?;
    Ok(manifest)
}

/// Hyperparameter varied by a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParam {
    Lambda,
    Stride,
    FreezeK,
    Alpha,
}

impl std::str::FromStr for SweepParam {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lambda" => Ok(SweepParam::Lambda),
            "stride" => Ok(SweepParam::Stride),
            "freeze_k" | "freeze-k" => Ok(SweepParam::FreezeK),
            "alpha" => Ok(SweepParam::Alpha),
            other => bail!(
                "unknown sweep parameter `{other}` (expected lambda, stride, freeze_k or alpha)"
            ),
        }
    }
}

impl SweepParam {
    pub fn as_str(&self) -> &'static str {
        match self {
            SweepParam::Lambda => "lambda",
            SweepParam::Stride => "stride",
            SweepParam::FreezeK => "freeze_k",
            SweepParam::Alpha => "alpha",
        }
    }
}

fn as_count(value: f64) -> Result<usize> {
    if value < 0.0 || value.fract() != 0.0 {
        bail!("{value} is not a non-negative integer");
    }
    Ok(value as usize)
}

/// Copy of `base` with one hyperparameter set.
pub fn sweep_config(base: &RunConfig, param: SweepParam, value: f64) -> Result<RunConfig> {
    let mut c = base.clone();
    match param {
        SweepParam::Lambda => c.plan.stages.iter_mut().for_each(|s| s.loss.lambda = value),
        SweepParam::Stride => c.plan.chunk.stride = as_count(value)?,
        SweepParam::FreezeK => {
            let overrides = crate::config::Overrides {
                freeze_k: Some(as_count(value)?),
                ..Default::default()
            };
            c.apply(&overrides)?;
        }
        SweepParam::Alpha => {
            c.evaluation
                .as_mut()
                .ok_or_else(|| anyhow!("an alpha sweep needs an [evaluation] section"))?
                .alpha = value;
        }
    }
    c.validate()?;
    Ok(c)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "state")]
pub enum SweepOutcome {
    Completed { summary: MetricSummary },
    Failed { error: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub value: f64,
    pub run_dir: PathBuf,
    pub outcome: SweepOutcome,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub param: SweepParam,
    pub rows: Vec<SweepRow>,
}

impl SweepReport {
    /// One row per value with the reading (Ma-F1, HA_F1@K) and retrieval
    /// (MRR, R@K) metrics.
    pub fn table(&self) -> String {
        let ks: Vec<usize> = self
            .rows
            .iter()
            .find_map(|r| match &r.outcome {
                SweepOutcome::Completed { summary } => {
                    Some(summary.recall_at.keys().copied().collect())
                }
                SweepOutcome::Failed { .. } => None,
            })
            .unwrap_or_default();
        let mut header = format!("{:<10}{:>9}", self.param.as_str(), "Ma-F1");
        for k in &ks {
            header.push_str(&format!("{:>10}", format!("HA_F1@{k}")));
        }
        header.push_str(&format!("{:>9}", "MRR"));
        for k in &ks {
            header.push_str(&format!("{:>8}", format!("R@{k}")));
        }
        let mut out = header + "\n";
        for row in &self.rows {
            out.push_str(&format!("{:<10}", row.value));
            match &row.outcome {
                SweepOutcome::Completed { summary } => {
                    out.push_str(&format!("{:>9.4}", summary.ma_f1));
                    for k in &ks {
                        out.push_str(&format!(
                            "{:>10.4}",
                            summary.ha_f1_at.get(k).copied().unwrap_or(f64::NAN)
                        ));
                    }
                    out.push_str(&format!("{:>9.4}", summary.mrr));
                    for k in &ks {
                        out.push_str(&format!(
                            "{:>8.4}",
                            summary.recall_at.get(k).copied().unwrap_or(f64::NAN)
                        ));
                    }
                }
                SweepOutcome::Failed { error } => out.push_str(&format!("  failed: {error}")),
            }
            out.push('\n');
        }
        out
    }
}

fn value_dir(out_dir: &Path, param: SweepParam, value: f64) -> PathBuf {
    out_dir.join(format!("{}={value}", param.as_str()))
}

/// One run per value, recorded in `<out_dir>/sweep.json`. Failed runs are
/// recorded and the sweep continues. An alpha sweep only changes ranking,
/// so it trains once and re-ranks per value. `workers > 1` runs values in
/// parallel; deterministic mode always runs them in order.
pub fn cmd_sweep(
    base: &RunConfig,
    param: SweepParam,
    values: &[f64],
    out_dir: &Path,
    workers: usize,
    deterministic: bool,
) -> Result<SweepReport> {
    if values.is_empty() {
        bail!("a sweep needs at least one value");
    }
    base.evaluation
        .as_ref()
        .ok_or_else(|| anyhow!("a sweep needs an [evaluation] section"))?;
    fs::create_dir_all(out_dir)?;
    let rows = if param == SweepParam::Alpha {
        alpha_rows(base, values, out_dir, deterministic)?
    } else {
        let workers = if deterministic {
            1
        } else {
            workers.clamp(1, values.len())
        };
        let slots: Vec<Mutex<Option<SweepRow>>> = values.iter().map(|_| Mutex::new(None)).collect();
        let next = AtomicUsize::new(0);
        std::thread::scope(|scope| {
            for _ in 0..workers {
                scope.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::SeqCst);
                    if i >= values.len() {
                        break;
                    }
                    let run_dir = value_dir(out_dir, param, values[i]);
                    let outcome = sweep_config(base, param, values[i])
                        .and_then(|c| cmd_train(&c, &run_dir, deterministic))
                        .map(|m| summary_of(&m));
                    *slots[i].lock().expect("sweep slot") = Some(SweepRow {
                        value: values[i],
                        run_dir,
                        outcome: match outcome {
                            Ok(summary) => SweepOutcome::Completed { summary },
                            Err(e) => SweepOutcome::Failed {
                                error: format!("{e:#}"),
                            },
                        },
                    });
                });
            }
        });
        slots
            .into_iter()
            .map(|s| {
                s.into_inner()
                    .expect("sweep slot")
                    .expect("every value ran")
            })
            .collect()
    };
    let report = SweepReport { param, rows };
    write_json(&out_dir.join("sweep.json"), &report)?;
    Ok(report)
}

fn summary_of(m: &RunManifest) -> MetricSummary {
    m.reports
        .last()
        .expect("evaluation configured")
        .summary
        .clone()
}

fn alpha_rows(
    base: &RunConfig,
    values: &[f64],
    out_dir: &Path,
    deterministic: bool,
) -> Result<Vec<SweepRow>> {
    let train_dir = out_dir.join("trained");
    let manifest = cmd_train(base, &train_dir, deterministic)?;
    let checkpoint = manifest
        .final_checkpoint(&train_dir)
        .ok_or_else(|| anyhow!("training produced no checkpoint"))?;
    let ck = Checkpoint::load(&checkpoint)?;
    let mut rows = Vec::new();
    for &value in values {
        let dir = value_dir(out_dir, SweepParam::Alpha, value);
        let outcome = sweep_config(base, SweepParam::Alpha, value).and_then(|c| {
            let eval = c.evaluation.as_ref().expect("checked by sweep_config");
            let record = evaluate_into_run(
                &ck.model,
                &ck.manifest.vocabulary,
                ck.manifest.chunk,
                eval,
                &dir,
                ".",
            )?;
            Ok(record.summary)
        });
        rows.push(SweepRow {
            value,
            run_dir: dir,
            outcome: match outcome {
                Ok(summary) => SweepOutcome::Completed { summary },
                Err(e) => SweepOutcome::Failed {
                    error: format!("{e:#}"),
                },
            },
        });
    }
    Ok(rows)
}

/// Files written by [`cmd_synth`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthOutput {
    pub raw: SynthPaths,
    pub aux: PathBuf,
    pub target_train: PathBuf,
    pub target_validation: PathBuf,
}

/// Writes the synthetic corpus as raw ingest files plus dataset files named
/// as the presets expect. Auxiliary pools are extended to `aux_pool`
/// documents by BM25 so the auxiliary stage has matching negatives.
pub fn cmd_synth(out_dir: &Path, config: &SynthConfig, aux_pool: usize) -> Result<SynthOutput> {
    let mut corpus = generate(config)?;
    let raw = corpus.write(&out_dir.join("raw"))?;
    if aux_pool > 1 {
        let index = InvertedIndex::build(corpus.aux.documents.values())?;
        augment_pools(&mut corpus.aux, &index, aux_pool);
    }
    let out = SynthOutput {
        raw,
        aux: out_dir.join("aux.json"),
        target_train: out_dir.join("target_train.json"),
        target_validation: out_dir.join("target_validation.json"),
    };
    corpus.aux.save(&out.aux)?;
    corpus.target_train.save(&out.target_train)?;
    corpus.target_validation.save(&out.target_validation)?;
    Ok(out)
}
