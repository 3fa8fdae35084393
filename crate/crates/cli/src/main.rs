use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use jointqa::chunking::ChunkConfig;
use jointqa::corpus::{DatasetFormat, DomainTag, Split};
use jointqa::heads::Pooling;
use jointqa::ranking::{RankOptions, RankingStrategy, StrategyName};
use jointqa::synth::SynthConfig;
use jointqa_cli::experiment::{run_transfer_experiment, TransferSettings, Verdict};
use jointqa_cli::presets::{preset, Profile, PRESETS};
use jointqa_cli::{
    cmd_analyze_errors, cmd_chunk, cmd_evaluate, cmd_index, cmd_ingest, cmd_predict, cmd_retrieve,
    cmd_sweep, cmd_synth, cmd_train, IngestArgs, Overrides, PredictOptions, RunConfig, SweepParam,
};

#[derive(Parser)]
#[command(
    name = "jointqa",
    version,
    about = "Joint reading and retrieval QA with cross-domain transfer"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Target,
    Aux,
}

#[derive(Clone, Copy, ValueEnum)]
enum SplitArg {
    Train,
    Validation,
    Test,
}

#[derive(Clone, Copy, ValueEnum)]
enum DomainArg {
    Auxiliary,
    Target,
}

#[derive(Args, Default)]
struct OverrideArgs {
    /// Weight of the matching loss in every stage.
    #[arg(long)]
    lambda: Option<f64>,
    /// Document stride between consecutive blocks.
    #[arg(long)]
    stride: Option<usize>,
    /// Pooling for the matching head (cls or mean).
    #[arg(long)]
    pooling: Option<Pooling>,
    /// Scale the reading loss by the span-length adjustment factor.
    #[arg(long)]
    adjustable: bool,
    /// Train only the top K encoder layers of transferred stages.
    #[arg(long = "freeze-k")]
    freeze_k: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Ranking strategy of the evaluation pass.
    #[arg(long)]
    strategy: Option<StrategyName>,
    #[arg(long)]
    alpha: Option<f64>,
    /// Answers kept per question in the evaluation pass.
    #[arg(long)]
    k: Option<usize>,
}

impl OverrideArgs {
    fn overrides(&self) -> Overrides {
        Overrides {
            lambda: self.lambda,
            stride: self.stride,
            pooling: self.pooling,
            adjustable: self.adjustable,
            freeze_k: self.freeze_k,
            seed: self.seed,
            strategy: self.strategy,
            alpha: self.alpha,
            k: self.k,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Parse question and corpus JSON files into a dataset file.
    Ingest {
        #[arg(long)]
        questions: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, value_enum)]
        format: FormatArg,
        #[arg(long)]
        name: String,
        #[arg(long, value_enum, default_value = "train")]
        split: SplitArg,
        #[arg(long, value_enum, default_value = "target")]
        domain: DomainArg,
        #[arg(long)]
        out: PathBuf,
    },
    /// Build a BM25 index over a dataset's documents.
    Index {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Retrieve the top documents per question; optionally extend pools.
    Retrieve {
        #[arg(long)]
        index: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, default_value_t = 20)]
        k: usize,
        /// Write the dataset with candidate pools extended to K documents.
        #[arg(long)]
        augment_out: Option<PathBuf>,
    },
    /// Print the blocks of one question's candidate documents.
    Chunk {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        question: String,
        #[arg(long, default_value_t = 512)]
        max_len: usize,
        #[arg(long, default_value_t = 192)]
        stride: usize,
    },
    /// Print a preset run configuration.
    Plan {
        #[arg(long)]
        preset: Option<String>,
        #[arg(long, default_value = "desk")]
        profile: Profile,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train a plan into a run directory and evaluate it.
    Train {
        #[arg(long)]
        plan: PathBuf,
        #[arg(long)]
        run_dir: PathBuf,
        #[command(flatten)]
        overrides: OverrideArgs,
        /// Record the run as deterministic and run sequentially.
        #[arg(long)]
        deterministic: bool,
    },
    /// Rank answers for a dataset with a trained checkpoint.
    Predict {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        doc_rankings: Option<PathBuf>,
        #[arg(long, default_value = "ours_with_doc")]
        strategy: StrategyName,
        #[arg(long, default_value_t = 0.5)]
        alpha: f64,
        #[arg(long, default_value_t = 5)]
        k: usize,
        /// Abstain when the best answer scores below this value.
        #[arg(long)]
        threshold: Option<f64>,
        /// Normalize reader scores across all blocks of a document.
        #[arg(long)]
        global_norm: bool,
        /// BM25 index for questions without a candidate pool.
        #[arg(long)]
        index: Option<PathBuf>,
        #[arg(long, default_value_t = 20)]
        pool_k: usize,
    },
    /// Score a prediction file against a dataset.
    Evaluate {
        #[arg(long)]
        predictions: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        doc_rankings: Option<PathBuf>,
        #[arg(long, value_delimiter = ',', default_value = "1,5")]
        ks: Vec<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train and evaluate one run per hyperparameter value.
    Sweep {
        #[arg(long)]
        param: SweepParam,
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
        #[arg(long)]
        plan: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, default_value_t = 1)]
        workers: usize,
        #[command(flatten)]
        overrides: OverrideArgs,
        #[arg(long)]
        deterministic: bool,
    },
    /// Classify the top-1 answer of every question.
    AnalyzeErrors {
        #[arg(long)]
        predictions: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write the synthetic two-domain corpus.
    Synth {
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 4)]
        aux_pool: usize,
    },
    /// Run the toy transfer experiment over the ablation plans.
    Transfer {
        #[arg(long)]
        work_dir: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "0,1,2")]
        seeds: Vec<u64>,
        #[arg(long)]
        aux_steps: Option<usize>,
        #[arg(long)]
        target_steps: Option<usize>,
    },
}

fn print_json<T: serde::Serialize>(value: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn load_config(path: &Path, overrides: &OverrideArgs) -> Result<RunConfig> {
    let mut config = RunConfig::load(path)?;
    config.apply(&overrides.overrides())?;
    Ok(config)
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Ingest {
            questions,
            corpus,
            format,
            name,
            split,
            domain,
            out,
        } => {
            let counts = cmd_ingest(&IngestArgs {
                questions,
                corpus,
                format: match format {
                    FormatArg::Target => DatasetFormat::TargetQaJson,
                    FormatArg::Aux => DatasetFormat::AuxiliaryQaJson,
                },
                name,
                split: match split {
                    SplitArg::Train => Split::Train,
                    SplitArg::Validation => Split::Validation,
                    SplitArg::Test => Split::Test,
                },
                domain: match domain {
                    DomainArg::Auxiliary => DomainTag::Auxiliary,
                    DomainArg::Target => DomainTag::Target,
                },
                out,
            })?;
            print_json(&counts)
        }
        Command::Index { dataset, out } => {
            let n = cmd_index(&dataset, &out)?;
            println!("indexed {n} documents into {}", out.display());
            Ok(())
        }
        Command::Retrieve {
            index,
            dataset,
            k,
            augment_out,
        } => {
            for row in cmd_retrieve(&index, &dataset, k, augment_out.as_deref())? {
                println!("{}", serde_json::to_string(&row)?);
            }
            Ok(())
        }
        Command::Chunk {
            dataset,
            question,
            max_len,
            stride,
        } => print_json(&cmd_chunk(
            &dataset,
            &question,
            &ChunkConfig { max_len, stride },
        )?),
        Command::Plan {
            preset: name,
            profile,
            out,
        } => {
            let Some(name) = name else {
                println!("{}", PRESETS.join("\n"));
                return Ok(());
            };
            let text = preset(&name, profile)?.to_toml()?;
            match out {
                Some(path) => {
                    fs::write(&path, text).with_context(|| format!("writing {}", path.display()))
                }
                None => {
                    print!("{text}");
                    Ok(())
                }
            }
        }
        Command::Train {
            plan,
            run_dir,
            overrides,
            deterministic,
        } => {
            let config = load_config(&plan, &overrides)?;
            let manifest = cmd_train(&config, &run_dir, deterministic)?;
            for s in &manifest.stages {
                println!(
                    "stage {:<12} steps {:>6}  final loss {:?}",
                    s.name, s.steps, s.final_loss
                );
            }
            for r in &manifest.reports {
                let report: jointqa::metrics::EvalReport =
                    serde_json::from_slice(&fs::read(run_dir.join(&r.report))?)?;
                print!("{}", report.table());
            }
            println!("run {} written to {}", manifest.run_id, run_dir.display());
            Ok(())
        }
        Command::Predict {
            checkpoint,
            dataset,
            out,
            doc_rankings,
            strategy,
            alpha,
            k,
            threshold,
            global_norm,
            index,
            pool_k,
        } => {
            let options = PredictOptions {
                strategy: RankingStrategy::new(strategy, alpha)?,
                rank: RankOptions {
                    k,
                    threshold: threshold.unwrap_or(f64::NEG_INFINITY),
                },
                global_norm,
                pool_k,
                index,
            };
            let output = cmd_predict(
                &checkpoint,
                &dataset,
                &options,
                &out,
                doc_rankings.as_deref(),
            )?;
            println!(
                "{} prediction rows written to {}",
                output.rows.len(),
                out.display()
            );
            Ok(())
        }
        Command::Evaluate {
            predictions,
            dataset,
            doc_rankings,
            ks,
            out,
        } => {
            let report = cmd_evaluate(&predictions, &dataset, doc_rankings.as_deref(), &ks)?;
            print!("{}", report.table());
            if let Some(path) = out {
                fs::write(&path, serde_json::to_vec_pretty(&report)?)?;
            }
            Ok(())
        }
        Command::Sweep {
            param,
            values,
            plan,
            out_dir,
            workers,
            overrides,
            deterministic,
        } => {
            let config = load_config(&plan, &overrides)?;
            let report = cmd_sweep(&config, param, &values, &out_dir, workers, deterministic)?;
            print!("{}", report.table());
            Ok(())
        }
        Command::AnalyzeErrors {
            predictions,
            dataset,
            out,
        } => {
            let analysis = cmd_analyze_errors(&predictions, &dataset)?;
            print!("{}", analysis.table());
            if let Some(path) = out {
                fs::write(&path, serde_json::to_vec_pretty(&analysis)?)?;
            }
            Ok(())
        }
        Command::Synth {
            out_dir,
            seed,
            aux_pool,
        } => {
            let out = cmd_synth(
                &out_dir,
                &SynthConfig {
                    seed,
                    ..Default::default()
                },
                aux_pool,
            )?;
            print_json(&out)
        }
        Command::Transfer {
            work_dir,
            seeds,
            aux_steps,
            target_steps,
        } => {
            let defaults = TransferSettings::default();
            let settings = TransferSettings {
                seeds,
                aux_steps: aux_steps.unwrap_or(defaults.aux_steps),
                target_steps: target_steps.unwrap_or(defaults.target_steps),
                ..defaults
            };
            let report = run_transfer_experiment(&settings, &work_dir, &mut |r| {
                eprintln!("{} seed {} done in {:.1}s", r.plan, r.seed, r.seconds);
            })?;
            print!("{}", report.table());
            let mut failed = false;
            for c in report.checks() {
                println!(
                    "{:?}: {} {} {:.4} >= {} {:.4}",
                    c.verdict, c.metric, c.lhs, c.lhs_value, c.rhs, c.rhs_value
                );
                failed |= c.verdict == Verdict::Fail;
            }
            fs::write(
                work_dir.join("transfer.json"),
                serde_json::to_vec_pretty(&report)?,
            )?;
            if failed {
                bail!("at least one ordering check failed");
            }
            Ok(())
        }
    }
}
