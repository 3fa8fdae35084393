//! Checkpoint directories: `manifest.json` plus raw little-endian `f64`
//! tensors in `tensors.bin`, written atomically.

use std::fs;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::chunking::ChunkConfig;
use crate::corpus::{DomainTag, Vocabulary};
use crate::encoder::ParameterSet;
use crate::error::{Error, Result};
use crate::model::{JointModel, ModelConfig};

use super::objective::TaskSet;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const TENSORS_FILE: &str = "tensors.bin";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: [usize; 2],
    pub trainable: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub format_version: u32,
    pub stage: String,
    pub step: usize,
    pub domain_tag: DomainTag,
    pub tasks: TaskSet,
    pub model: ModelConfig,
    /// Hash of the model and stage configuration that produced the tensors.
    pub config_hash: String,
    /// Content hash of the stored tensors.
    pub tensor_hash: String,
    pub tensors: Vec<TensorEntry>,
    /// Block layout used in training, reused at inference.
    #[serde(default)]
    pub chunk: ChunkConfig,
    pub vocabulary: Vocabulary,
}

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub manifest: CheckpointManifest,
    pub model: JointModel,
}

/// SHA-256 of the JSON encoding of `value`.
pub fn config_hash<T: Serialize>(value: &T) -> String {
    let bytes = serde_json::to_vec(value).expect("configuration serializes");
    hex::encode(Sha256::digest(bytes))
}

fn encode_tensors(params: &ParameterSet) -> Vec<u8> {
    let mut out = Vec::with_capacity(params.num_scalars() * 8);
    for p in params.iter() {
        for v in p.value.iter() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

fn temp_sibling(dir: &Path) -> PathBuf {
    let name = dir
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    dir.with_file_name(format!(".{name}.tmp-{}", std::process::id()))
}

impl Checkpoint {
    pub fn new(
        model: JointModel,
        stage: &str,
        step: usize,
        domain_tag: DomainTag,
        tasks: TaskSet,
        config_hash: String,
        vocabulary: Vocabulary,
    ) -> Self {
        let tensors = model
            .params
            .iter()
            .map(|p| TensorEntry {
                name: p.name.clone(),
                shape: [p.value.nrows(), p.value.ncols()],
                trainable: p.trainable,
            })
            .collect();
        let manifest = CheckpointManifest {
            format_version: FORMAT_VERSION,
            stage: stage.to_string(),
            step,
            domain_tag,
            tasks,
            model: model.config.clone(),
            config_hash,
            tensor_hash: model.params.content_hash(),
            tensors,
            chunk: ChunkConfig::default(),
            vocabulary,
        };
        Self { manifest, model }
    }

    pub fn with_chunk(mut self, chunk: ChunkConfig) -> Self {
        self.manifest.chunk = chunk;
        self
    }

    /// Writes into a temporary sibling directory, then renames it over `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        if let Some(parent) = dir.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        let tmp = temp_sibling(dir);
        if tmp.exists() {
            fs::remove_dir_all(&tmp).map_err(|e| Error::io(&tmp, e))?;
        }
        fs::create_dir_all(&tmp).map_err(|e| Error::io(&tmp, e))?;
        let manifest_path = tmp.join(MANIFEST_FILE);
        let json = serde_json::to_vec_pretty(&self.manifest)
            .map_err(|e| Error::json(&manifest_path, e))?;
        fs::write(&manifest_path, json).map_err(|e| Error::io(&manifest_path, e))?;
        let tensor_path = tmp.join(TENSORS_FILE);
        fs::write(&tensor_path, encode_tensors(&self.model.params))
            .map_err(|e| Error::io(&tensor_path, e))?;
        if dir.exists() {
            fs::remove_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        fs::rename(&tmp, dir).map_err(|e| Error::io(dir, e))
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let manifest_path = dir.join(MANIFEST_FILE);
        let text = fs::read_to_string(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
        let manifest: CheckpointManifest =
            serde_json::from_str(&text).map_err(|e| Error::json(&manifest_path, e))?;
        if manifest.format_version != FORMAT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported format version {}",
                manifest.format_version
            )));
        }
        let tensor_path = dir.join(TENSORS_FILE);
        let bytes = fs::read(&tensor_path).map_err(|e| Error::io(&tensor_path, e))?;
        let expected: usize = manifest
            .tensors
            .iter()
            .map(|t| t.shape[0] * t.shape[1] * 8)
            .sum();
        if bytes.len() != expected {
            return Err(Error::Checkpoint(format!(
                "{} holds {} bytes, manifest describes {expected}",
                tensor_path.display(),
                bytes.len()
            )));
        }
        let mut params = ParameterSet::new();
        let mut values = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")));
        for t in &manifest.tensors {
            let data: Vec<f64> = values.by_ref().take(t.shape[0] * t.shape[1]).collect();
            let value = Array2::from_shape_vec((t.shape[0], t.shape[1]), data)
                .map_err(|e| Error::Checkpoint(format!("tensor `{}`: {e}", t.name)))?;
            let id = params.push(t.name.clone(), value);
            params.param_mut(id).trainable = t.trainable;
        }
        let found = params.content_hash();
        if found != manifest.tensor_hash {
            return Err(Error::Checkpoint(format!(
                "tensor hash {found} does not match manifest {}",
                manifest.tensor_hash
            )));
        }
        let model = JointModel::from_params(manifest.model.clone(), params)?;
        Ok(Self { manifest, model })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::EncoderConfig;
    use crate::heads::Pooling;

    fn checkpoint() -> Checkpoint {
        let vocab = Vocabulary::build(["alpha", "beta"]);
        let cfg = ModelConfig {
            encoder: EncoderConfig {
                vocab_size: vocab.len(),
                d: 8,
                layers: 1,
                heads: 2,
                max_len: 16,
                ffn_dim: 16,
                seed: 5,
            },
            pooling: Pooling::Mean,
        };
        let mut model = JointModel::new(cfg.clone(), 6).unwrap();
        model.freeze_layers(0).unwrap();
        Checkpoint::new(
            model,
            "aux",
            42,
            DomainTag::Auxiliary,
            TaskSet::joint(),
            config_hash(&cfg),
            vocab,
        )
    }

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ckpt");
        let ck = checkpoint();
        ck.save(&path).unwrap();
        ck.save(&path).unwrap();
        let back = Checkpoint::load(&path).unwrap();
        assert_eq!(back.manifest, ck.manifest);
        assert_eq!(
            back.model.params.content_hash(),
            ck.model.params.content_hash()
        );
        let trainable: Vec<bool> = back.model.params.iter().map(|p| p.trainable).collect();
        assert_eq!(
            trainable,
            ck.model
                .params
                .iter()
                .map(|p| p.trainable)
                .collect::<Vec<_>>()
        );
        let leftovers: Vec<_> = fs::read_dir(dir.path()).unwrap().collect();
        assert_eq!(leftovers.len(), 1);
    }

    #[test]
    fn corrupted_tensors_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ckpt");
        checkpoint().save(&path).unwrap();
        let tensor_path = path.join(TENSORS_FILE);
        let mut bytes = fs::read(&tensor_path).unwrap();
        bytes[3] ^= 0xff;
        fs::write(&tensor_path, &bytes).unwrap();
        assert!(matches!(Checkpoint::load(&path), Err(Error::Checkpoint(_))));
        bytes.truncate(16);
        fs::write(&tensor_path, &bytes).unwrap();
        assert!(matches!(Checkpoint::load(&path), Err(Error::Checkpoint(_))));
    }
}
