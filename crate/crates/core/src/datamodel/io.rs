//! Dataset ingestion.
//!
//! Two on-disk layouts are accepted, both as a directory:
//!
//! * `data.csv` with a header row. Every column except `label` and the
//!   optional `subclass` is a feature, in file order. `class_count` is one
//!   more than the largest label.
//! * `manifest.json` (see [`BinaryManifest`]) describing a little-endian
//!   feature buffer of shape `[samples, ..feature_shape]` and a `u32` label
//!   buffer, optionally a `u32` subclass buffer.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{LabeledDataset, SplitTag};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dtype {
    F32,
    F64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BinaryManifest {
    pub samples: usize,
    pub feature_shape: Vec<usize>,
    pub dtype: Dtype,
    pub features: String,
    pub labels: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subclass_labels: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class_count: Option<usize>,
}

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn read_u32s(path: &Path, expected: usize) -> Result<Vec<usize>> {
    let bytes = read(path)?;
    if bytes.len() != expected * 4 {
        return Err(Error::Format(format!(
            "{}: {} bytes, expected {} u32 values",
            path.display(),
            bytes.len(),
            expected
        )));
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes(c.try_into().unwrap()) as usize)
        .collect())
}

fn load_binary(dir: &Path, split: SplitTag) -> Result<LabeledDataset> {
    let manifest_path = dir.join("manifest.json");
    let manifest: BinaryManifest = serde_json::from_slice(&read(&manifest_path)?)?;
    let dim: usize = manifest.feature_shape.iter().product();
    let total = manifest.samples * dim;
    let raw = read(&dir.join(&manifest.features))?;
    let features: Vec<f64> = match manifest.dtype {
        Dtype::F32 => {
            if raw.len() != total * 4 {
                return Err(Error::Format(format!(
                    "feature buffer has {} bytes, expected {}",
                    raw.len(),
                    total * 4
                )));
            }
            raw.chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
                .collect()
        }
        Dtype::F64 => {
            if raw.len() != total * 8 {
                return Err(Error::Format(format!(
                    "feature buffer has {} bytes, expected {}",
                    raw.len(),
                    total * 8
                )));
            }
            raw.chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect()
        }
    };
    let labels = read_u32s(&dir.join(&manifest.labels), manifest.samples)?;
    let subclass = manifest
        .subclass_labels
        .as_ref()
        .map(|p| read_u32s(&dir.join(p), manifest.samples))
        .transpose()?;
    let class_count = manifest
        .class_count
        .unwrap_or_else(|| labels.iter().max().map_or(0, |m| m + 1));
    LabeledDataset::new(features, manifest.feature_shape, labels, class_count, subclass, split)
}

fn load_csv(path: &Path, split: SplitTag) -> Result<LabeledDataset> {
    let mut reader = csv::Reader::from_path(path)?;
    let headers = reader.headers()?.clone();
    let label_col = headers
        .iter()
        .position(|h| h.trim() == "label")
        .ok_or_else(|| Error::Format(format!("{}: no `label` column", path.display())))?;
    let subclass_col = headers.iter().position(|h| h.trim() == "subclass");
    let feature_cols: Vec<usize> = (0..headers.len())
        .filter(|&c| c != label_col && Some(c) != subclass_col)
        .collect();

    let mut features = Vec::new();
    let mut labels = Vec::new();
    let mut subclass = subclass_col.map(|_| Vec::new());
    for (row, record) in reader.records().enumerate() {
        let record = record?;
        let field = |c: usize| record.get(c).unwrap_or("").trim();
        let int = |c: usize| {
            let v = field(c);
            v.parse::<f64>()
                .ok()
                .filter(|x| x.fract() == 0.0 && *x >= 0.0)
                .map(|x| x as usize)
                .ok_or_else(|| Error::Format(format!("row {}: bad class id `{v}`", row + 1)))
        };
        for &c in &feature_cols {
            let v = field(c);
            features.push(
                v.parse::<f64>()
                    .map_err(|_| Error::Format(format!("row {}: bad feature value `{v}`", row + 1)))?,
            );
        }
        labels.push(int(label_col)?);
        if let (Some(col), Some(sub)) = (subclass_col, subclass.as_mut()) {
            sub.push(int(col)?);
        }
    }
    let class_count = labels.iter().max().map_or(0, |m| m + 1);
    LabeledDataset::new(features, vec![feature_cols.len()], labels, class_count, subclass, split)
}

/// Loads a dataset directory containing either `manifest.json` or `data.csv`.
pub fn load_dataset_dir(dir: &Path, split: SplitTag) -> Result<LabeledDataset> {
    if dir.join("manifest.json").is_file() {
        load_binary(dir, split)
    } else if dir.join("data.csv").is_file() {
        load_csv(&dir.join("data.csv"), split)
    } else {
        Err(Error::Format(format!(
            "{}: expected manifest.json or data.csv",
            dir.display()
        )))
    }
}

/// Writes `data.csv` (features as `f0..f{d-1}`, then `label`, then `subclass`).
pub fn save_dataset_csv(dataset: &LabeledDataset, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut writer = csv::Writer::from_path(dir.join("data.csv"))?;
    let mut header: Vec<String> = (0..dataset.feature_dim()).map(|j| format!("f{j}")).collect();
    header.push("label".into());
    if dataset.subclass_labels().is_some() {
        header.push("subclass".into());
    }
    writer.write_record(&header)?;
    for i in 0..dataset.len() {
        let mut row: Vec<String> = dataset.sample(i).iter().map(|v| format!("{v:?}")).collect();
        row.push(dataset.label(i).to_string());
        if let Some(sub) = dataset.subclass_labels() {
            row.push(sub[i].to_string());
        }
        writer.write_record(&row)?;
    }
    writer.flush().map_err(|e| Error::io(dir.join("data.csv"), e))?;
    Ok(())
}

/// Writes the binary layout with `f64` features.
pub fn save_dataset_binary(dataset: &LabeledDataset, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let write = |name: &str, bytes: Vec<u8>| {
        let p = dir.join(name);
        fs::write(&p, bytes).map_err(|e| Error::io(p, e))
    };
    write(
        "features.bin",
        dataset.features().iter().flat_map(|v| v.to_le_bytes()).collect(),
    )?;
    let u32s = |xs: &[usize]| -> Vec<u8> { xs.iter().flat_map(|&x| (x as u32).to_le_bytes()).collect() };
    write("labels.bin", u32s(dataset.labels()))?;
    if let Some(sub) = dataset.subclass_labels() {
        write("subclass.bin", u32s(sub))?;
    }
    let manifest = BinaryManifest {
        samples: dataset.len(),
        feature_shape: dataset.feature_shape().to_vec(),
        dtype: Dtype::F64,
        features: "features.bin".into(),
        labels: "labels.bin".into(),
        subclass_labels: dataset.subclass_labels().map(|_| "subclass.bin".into()),
        class_count: Some(dataset.class_count()),
    };
    write("manifest.json", serde_json::to_vec_pretty(&manifest)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datamodel::make_synthetic_dataset;

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let ds = make_synthetic_dataset(3, 2, 4, 5, 1.0, 2).unwrap();
        save_dataset_csv(&ds, dir.path()).unwrap();
        let back = load_dataset_dir(dir.path(), SplitTag::Train).unwrap();
        assert_eq!(back, ds);
    }

    #[test]
    fn binary_round_trip_with_shape() {
        let dir = tempfile::tempdir().unwrap();
        let ds = make_synthetic_dataset(2, 1, 3, 6, 1.0, 2)
            .unwrap()
            .reshaped(vec![1, 2, 3])
            .unwrap();
        save_dataset_binary(&ds, dir.path()).unwrap();
        let back = load_dataset_dir(dir.path(), SplitTag::Train).unwrap();
        assert_eq!(back, ds);
    }

    #[test]
    fn f32_manifest_and_truncated_buffer() {
        let dir = tempfile::tempdir().unwrap();
        let feats: Vec<u8> = [1.5f32, -2.0, 0.25, 4.0].iter().flat_map(|v| v.to_le_bytes()).collect();
        fs::write(dir.path().join("x.bin"), &feats).unwrap();
        fs::write(
            dir.path().join("y.bin"),
            [0u32, 1].iter().flat_map(|v| v.to_le_bytes()).collect::<Vec<_>>(),
        )
        .unwrap();
        fs::write(
            dir.path().join("manifest.json"),
            r#"{"samples":2,"feature_shape":[2],"dtype":"f32","features":"x.bin","labels":"y.bin"}"#,
        )
        .unwrap();
        let ds = load_dataset_dir(dir.path(), SplitTag::Test).unwrap();
        assert_eq!(ds.sample(1), &[0.25, 4.0]);
        assert_eq!(ds.class_count(), 2);

        fs::write(dir.path().join("x.bin"), &feats[..12]).unwrap();
        assert!(matches!(
            load_dataset_dir(dir.path(), SplitTag::Test),
            Err(Error::Format(_))
        ));
    }

    #[test]
    fn csv_without_label_column() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("data.csv"), "a,b\n1,2\n").unwrap();
        assert!(matches!(
            load_dataset_dir(dir.path(), SplitTag::Train),
            Err(Error::Format(_))
        ));
        assert!(load_dataset_dir(&dir.path().join("nope"), SplitTag::Train).is_err());
    }
}
