//! Run directories and their manifest.
//!
//! ```text
//! <run>/config.toml                      resolved configuration snapshot
//! <run>/manifest.json                    this manifest
//! <run>/stages/<name>/checkpoint/        checkpoint of each finished stage
//! <run>/stages/<name>/log.jsonl          per-step loss log
//! <run>/eval/predictions.jsonl           ranked answers
//! <run>/eval/doc_rankings.json           ranked documents per question
//! <run>/eval/report.json                 metric report
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use jointqa::metrics::EvalReport;
use jointqa::ranking::StrategyName;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const CONFIG_FILE: &str = "config.toml";

/// SHA-256 of a file's bytes.
pub fn file_hash(path: &Path) -> Result<String> {
    let mut f = fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut hasher = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = f.read(&mut buf)?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hex::encode(hasher.finalize()))
}

pub fn bytes_hash(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputRecord {
    pub path: PathBuf,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub name: String,
    pub steps: usize,
    /// Relative to the run directory.
    pub checkpoint: PathBuf,
    pub log: PathBuf,
    pub tensor_hash: String,
    pub dr_weights: Option<(f64, f64)>,
    pub final_loss: Option<f64>,
}

/// Headline numbers of one metric report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub ma_f1: f64,
    pub ha_f1_at: BTreeMap<usize, f64>,
    pub mrr: f64,
    pub recall_at: BTreeMap<usize, f64>,
}

impl From<&EvalReport> for MetricSummary {
    fn from(r: &EvalReport) -> Self {
        Self {
            ma_f1: r.ma_f1,
            ha_f1_at: r.ha_f1_at.clone(),
            mrr: r.mrr,
            recall_at: r.recall_at.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRecord {
    pub dataset: PathBuf,
    pub strategy: StrategyName,
    pub alpha: f64,
    pub k: usize,
    pub predictions: PathBuf,
    pub doc_rankings: PathBuf,
    pub report: PathBuf,
    pub report_hash: String,
    pub summary: MetricSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "state")]
pub enum RunStatus {
    Completed,
    /// Stages before `stage` finished and are recorded.
    Failed {
        stage: String,
        error: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub run_id: String,
    pub config: PathBuf,
    pub config_hash: String,
    pub deterministic: bool,
    pub inputs: BTreeMap<String, InputRecord>,
    pub vocabulary_size: usize,
    pub stages: Vec<StageRecord>,
    pub reports: Vec<ReportRecord>,
    pub status: RunStatus,
}

impl RunManifest {
    pub fn path(run_dir: &Path) -> PathBuf {
        run_dir.join(MANIFEST_FILE)
    }

    pub fn save(&self, run_dir: &Path) -> Result<()> {
        let path = Self::path(run_dir);
        let tmp = run_dir.join(format!(".{MANIFEST_FILE}.tmp"));
        fs::write(&tmp, serde_json::to_vec_pretty(self)?)
            .with_context(|| format!("writing {}", tmp.display()))?;
        fs::rename(&tmp, &path).with_context(|| format!("writing {}", path.display()))?;
        Ok(())
    }

    pub fn load(run_dir: &Path) -> Result<Self> {
        let path = Self::path(run_dir);
        let bytes = fs::read(&path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_slice(&bytes).with_context(|| format!("parsing {}", path.display()))
    }

    /// Relative paths of every artifact the manifest references.
    pub fn artifacts(&self) -> Vec<PathBuf> {
        let mut out = vec![self.config.clone()];
        for s in &self.stages {
            out.push(s.checkpoint.clone());
            out.push(s.log.clone());
        }
        for r in &self.reports {
            out.extend([
                r.predictions.clone(),
                r.doc_rankings.clone(),
                r.report.clone(),
            ]);
        }
        out
    }

    /// Checks that every referenced artifact exists under `run_dir`.
    pub fn verify(&self, run_dir: &Path) -> Result<()> {
        for rel in self.artifacts() {
            if rel.is_absolute() || !run_dir.join(&rel).exists() {
                bail!(
                    "artifact {} missing from {}",
                    rel.display(),
                    run_dir.display()
                );
            }
        }
        Ok(())
    }

    /// Path of the last completed stage's checkpoint.
    pub fn final_checkpoint(&self, run_dir: &Path) -> Option<PathBuf> {
        self.stages.last().map(|s| run_dir.join(&s.checkpoint))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_hash_matches_bytes_hash() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x");
        fs::write(&p, b"abc").unwrap();
        assert_eq!(file_hash(&p).unwrap(), bytes_hash(b"abc"));
        assert_eq!(
            bytes_hash(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn verify_reports_missing_artifacts() {
        let dir = tempfile::tempdir().unwrap();
        let m = RunManifest {
            run_id: "r".into(),
            config: CONFIG_FILE.into(),
            config_hash: String::new(),
            deterministic: true,
            inputs: BTreeMap::new(),
            vocabulary_size: 0,
            stages: vec![],
            reports: vec![],
            status: RunStatus::Completed,
        };
        assert!(m.verify(dir.path()).is_err());
        fs::write(dir.path().join(CONFIG_FILE), "").unwrap();
        m.verify(dir.path()).unwrap();
        m.save(dir.path()).unwrap();
        assert_eq!(RunManifest::load(dir.path()).unwrap(), m);
    }
}
