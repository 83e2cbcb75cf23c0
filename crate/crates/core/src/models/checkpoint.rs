//! Checkpoint container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! b"ULCKPT01"            8-byte magic, the trailing digits are the format version
//! u64                     length of the JSON manifest in bytes
//! [u8; len]               manifest: architecture, class_count, rng_seed,
//!                         param_count, provenance
//! [f64; param_count]      parameters in layout order
//! ```

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Architecture, ClassifierHandle};
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"ULCKPT01";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelRole {
    Original,
    Gold,
    Unlearned,
    Teacher,
    Baseline,
}

/// Where a checkpoint came from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub role: ModelRole,
    pub dataset_hash: String,
    /// Serialized training or unlearning configuration.
    #[serde(default)]
    pub config: serde_json::Value,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Manifest {
    architecture: Architecture,
    class_count: usize,
    rng_seed: u64,
    param_count: usize,
    provenance: Provenance,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub model: ClassifierHandle,
    pub provenance: Provenance,
}

pub fn save_checkpoint(model: &ClassifierHandle, provenance: &Provenance, path: &Path) -> Result<()> {
    let manifest = Manifest {
        architecture: model.architecture().clone(),
        class_count: model.architecture().classes(),
        rng_seed: model.rng_seed(),
        param_count: model.params().len(),
        provenance: provenance.clone(),
    };
    let json = serde_json::to_vec(&manifest)?;
    let mut bytes = Vec::with_capacity(16 + json.len() + 8 * model.params().len());
    bytes.extend_from_slice(MAGIC);
    bytes.extend_from_slice(&(json.len() as u64).to_le_bytes());
    bytes.extend_from_slice(&json);
    for p in model.params() {
        bytes.extend_from_slice(&p.to_le_bytes());
    }
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let bad = |msg: &str| Error::Format(format!("{}: {msg}", path.display()));
    if bytes.len() < 16 || &bytes[..8] != MAGIC {
        return Err(bad("not a checkpoint (bad magic)"));
    }
    let len = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    let body = bytes.get(16..16 + len).ok_or_else(|| bad("truncated manifest"))?;
    let manifest: Manifest = serde_json::from_slice(body)?;
    let payload = &bytes[16 + len..];
    if payload.len() != manifest.param_count * 8 {
        return Err(bad("parameter payload size does not match manifest"));
    }
    if manifest.class_count != manifest.architecture.classes() {
        return Err(bad("class_count disagrees with architecture"));
    }
    let params = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let model = ClassifierHandle::from_parts(manifest.architecture, params, manifest.rng_seed)?;
    Ok(Checkpoint {
        model,
        provenance: manifest.provenance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::ArchitectureId;

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        for arch in [
            ArchitectureId::Mlp3.build(&[5], 3).unwrap(),
            ArchitectureId::SmallCnn.build(&[1, 3, 3], 3).unwrap(),
            ArchitectureId::LstmSeq.build(&[4, 2], 3).unwrap(),
        ] {
            let model = ClassifierHandle::new(arch, 42);
            let prov = Provenance {
                role: ModelRole::Teacher,
                dataset_hash: "abc".into(),
                config: serde_json::json!({"lr": 0.01}),
            };
            save_checkpoint(&model, &prov, &path).unwrap();
            let back = load_checkpoint(&path).unwrap();
            assert_eq!(back.model, model);
            assert_eq!(back.model.fingerprint(), model.fingerprint());
            assert_eq!(back.provenance, prov);
            let probe: Vec<f64> = (0..model.architecture().input_dim()).map(|i| i as f64 * 0.3).collect();
            assert_eq!(
                back.model.predict_one(&probe).unwrap(),
                model.predict_one(&probe).unwrap()
            );
        }
    }

    #[test]
    fn corrupt_files_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        fs::write(&path, b"garbage").unwrap();
        assert!(matches!(load_checkpoint(&path), Err(Error::Format(_))));

        let model = ClassifierHandle::new(ArchitectureId::Mlp3.build(&[2], 2).unwrap(), 0);
        let prov = Provenance {
            role: ModelRole::Gold,
            dataset_hash: String::new(),
            config: serde_json::Value::Null,
        };
        save_checkpoint(&model, &prov, &path).unwrap();
        let mut bytes = fs::read(&path).unwrap();
        bytes.truncate(bytes.len() - 8);
        fs::write(&path, bytes).unwrap();
        assert!(matches!(load_checkpoint(&path), Err(Error::Format(_))));
    }
}
