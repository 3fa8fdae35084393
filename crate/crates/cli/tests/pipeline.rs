//! End-to-end runs through the command layer on a small synthetic corpus.

use std::path::Path;
use std::process::Command;

use jointqa::corpus::Dataset;
use jointqa::heads::Pooling;
use jointqa::synth::SynthConfig;
use jointqa::training::ModelSettings;
use jointqa_cli::experiment::TransferSettings;
use jointqa_cli::{
    cmd_analyze_errors, cmd_chunk, cmd_evaluate, cmd_index, cmd_predict, cmd_retrieve, cmd_synth,
    cmd_train, PredictOptions, RunManifest, RunStatus,
};

fn settings() -> TransferSettings {
    TransferSettings {
        synth: SynthConfig {
            aux_questions: 20,
            target_train: 30,
            target_validation: 10,
            background_docs: 60,
            target_keywords: 8,
            ..SynthConfig::default()
        },
        model: ModelSettings {
            d: 16,
            layers: 1,
            heads: 2,
            ffn_dim: 32,
            max_len: 64,
            pooling: Pooling::Mean,
        },
        aux_steps: 3,
        target_steps: 3,
        warmup_steps: 1,
        ..TransferSettings::default()
    }
}

fn synth(dir: &Path) -> TransferSettings {
    let s = settings();
    cmd_synth(dir, &s.synth, s.aux_pool).unwrap();
    s
}

#[test]
fn train_predict_evaluate_analyze() {
    let work = tempfile::tempdir().unwrap();
    let data = work.path().join("data");
    let s = synth(&data);
    let config = s.config("transtd_plus_mean", 0, &data).unwrap();
    let run = work.path().join("run");
    let manifest = cmd_train(&config, &run, true).unwrap();
    assert_eq!(manifest.status, RunStatus::Completed);
    assert_eq!(manifest.stages.len(), 2);
    manifest.verify(&run).unwrap();
    assert_eq!(RunManifest::load(&run).unwrap(), manifest);

    let validation = data.join("target_validation.json");
    let predictions = work.path().join("pred.jsonl");
    let options = PredictOptions::from_evaluation(config.evaluation.as_ref().unwrap()).unwrap();
    let out = cmd_predict(
        &manifest.final_checkpoint(&run).unwrap(),
        &validation,
        &options,
        &predictions,
        None,
    )
    .unwrap();
    let questions = Dataset::load(&validation).unwrap().examples.len();
    assert_eq!(out.doc_rankings.len(), questions);

    // Predicting from the saved checkpoint reproduces the run's own report.
    let docs = predictions.with_extension("docs.json");
    let report = cmd_evaluate(&predictions, &validation, Some(&docs), &[1, 5]).unwrap();
    let in_run = &manifest.reports[0].summary;
    assert_eq!(report.ma_f1, in_run.ma_f1);
    assert_eq!(report.mrr, in_run.mrr);
    assert_eq!(report.questions, questions);

    let analysis = cmd_analyze_errors(&predictions, &validation).unwrap();
    assert_eq!(analysis.questions.len(), questions);
    assert_eq!(analysis.taxonomy.values().sum::<usize>(), report.answerable);
    assert!(analysis.table().starts_with("class"));
}

#[test]
fn failed_stage_leaves_a_partial_manifest() {
    let work = tempfile::tempdir().unwrap();
    let data = work.path().join("data");
    let s = synth(&data);

    // A target set without answerable questions has no positive class for
    // the matching loss weights, so the second stage cannot start.
    let mut target = Dataset::load(&data.join("target_train.json")).unwrap();
    for ex in &mut target.examples {
        ex.answerable = false;
        ex.gold = None;
    }
    let broken = data.join("no_answers.json");
    target.save(&broken).unwrap();

    let mut config = s.config("transtd_mean", 0, &data).unwrap();
    config.datasets.insert("target".into(), broken);
    let run = work.path().join("run");
    let err = cmd_train(&config, &run, true).unwrap_err();
    let manifest = RunManifest::load(&run).unwrap();
    match &manifest.status {
        RunStatus::Failed { stage, .. } => assert_eq!(stage, "target", "{err:#}"),
        other => panic!("expected a failed run, got {other:?}"),
    }
    assert_eq!(manifest.stages.len(), 1);
    assert_eq!(manifest.stages[0].name, "aux");
    assert!(manifest.reports.is_empty());
    manifest.verify(&run).unwrap();
}

#[test]
fn retrieval_and_chunk_inspection() {
    let work = tempfile::tempdir().unwrap();
    let data = work.path().join("data");
    synth(&data);
    let validation = data.join("target_validation.json");
    let index = work.path().join("index.json");
    assert!(cmd_index(&validation, &index).unwrap() > 0);
    let rows = cmd_retrieve(&index, &validation, 5, None).unwrap();
    assert!(rows.iter().all(|r| r.results.len() <= 5));
    assert!(rows
        .iter()
        .all(|r| r.results.windows(2).all(|w| w[0].1 >= w[1].1)));

    let ds = Dataset::load(&validation).unwrap();
    let qid = &ds.examples[0].question.question_id;
    let blocks = cmd_chunk(
        &validation,
        qid,
        &jointqa::chunking::ChunkConfig {
            max_len: 64,
            stride: 24,
        },
    )
    .unwrap();
    assert!(!blocks.is_empty());
}

#[test]
fn binary_lists_presets_and_writes_plans() {
    let work = tempfile::tempdir().unwrap();
    let exe = env!("CARGO_BIN_EXE_jointqa");
    let listed = Command::new(exe).arg("plan").output().unwrap();
    assert!(listed.status.success());
    let text = String::from_utf8(listed.stdout).unwrap();
    assert!(text.contains("transtd_plus_mean") && text.contains("bert_dr"));

    let out = work.path().join("plan.toml");
    let status = Command::new(exe)
        .args(["plan", "--preset", "transd_rc", "--out"])
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let config =
        jointqa_cli::RunConfig::from_toml(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(config.plan.stages.len(), 2);

    let bad = Command::new(exe)
        .args(["plan", "--preset", "nope"])
        .output()
        .unwrap();
    assert!(!bad.status.success());
}
