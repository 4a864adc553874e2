//! Named-tensor archive: a directory holding `manifest.json` (names, shapes,
//! dtype, byte offsets, free-form metadata) and `data.bin` (raw little-endian
//! values, tensors back to back).

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::params::NetworkParams;
use crate::autodiff::{Real, Tensor};
use crate::error::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const DATA_FILE: &str = "data.bin";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    /// Byte offset into the data file.
    pub offset: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub dtype: String,
    pub tensors: Vec<TensorEntry>,
    /// Hex SHA-256 of the data file.
    pub sha256: String,
    #[serde(default)]
    pub metadata: serde_json::Value,
}

pub fn save_tensors<'a, T: Real>(
    dir: &Path,
    tensors: impl IntoIterator<Item = (&'a str, &'a Tensor<T>)>,
    metadata: serde_json::Value,
) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut bytes = Vec::new();
    let mut entries = Vec::new();
    for (name, t) in tensors {
        entries.push(TensorEntry {
            name: name.to_string(),
            shape: t.shape().to_vec(),
            offset: bytes.len(),
        });
        for &v in t.data() {
            v.write_le(&mut bytes);
        }
    }
    let manifest = Manifest {
        format_version: 1,
        dtype: T::DTYPE.to_string(),
        tensors: entries,
        sha256: hex::encode(Sha256::digest(&bytes)),
        metadata,
    };
    let data_path = dir.join(DATA_FILE);
    fs::write(&data_path, &bytes).map_err(|e| Error::io(&data_path, e))?;
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    let man_path = dir.join(MANIFEST_FILE);
    fs::write(&man_path, text).map_err(|e| Error::io(&man_path, e))
}

pub fn read_manifest(dir: &Path) -> Result<Manifest> {
    let path = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::format(&path, e.to_string()))
}

pub fn load_tensors<T: Real>(dir: &Path) -> Result<(Vec<(String, Tensor<T>)>, serde_json::Value)> {
    let manifest = read_manifest(dir)?;
    let data_path = dir.join(DATA_FILE);
    if manifest.dtype != T::DTYPE {
        return Err(Error::format(
            &data_path,
            format!("stored dtype {} but {} requested", manifest.dtype, T::DTYPE),
        ));
    }
    let bytes = fs::read(&data_path).map_err(|e| Error::io(&data_path, e))?;
    if hex::encode(Sha256::digest(&bytes)) != manifest.sha256 {
        return Err(Error::format(&data_path, "checksum mismatch"));
    }
    let mut out = Vec::with_capacity(manifest.tensors.len());
    for e in &manifest.tensors {
        let n: usize = e.shape.iter().product();
        let end = e.offset + n * T::BYTES;
        let chunk = bytes
            .get(e.offset..end)
            .ok_or_else(|| Error::format(&data_path, format!("tensor `{}` out of bounds", e.name)))?;
        let data = chunk.chunks_exact(T::BYTES).map(T::read_le).collect();
        out.push((e.name.clone(), Tensor::new(e.shape.clone(), data)?));
    }
    Ok((out, manifest.metadata))
}

pub fn save_params<T: Real>(
    dir: &Path,
    params: &NetworkParams<T>,
    metadata: serde_json::Value,
) -> Result<()> {
    save_tensors(dir, params.iter(), metadata)
}

/// Loads parameters and checks them against `reference` (names and shapes).
pub fn load_params<T: Real>(
    dir: &Path,
    reference: &NetworkParams<T>,
) -> Result<(NetworkParams<T>, serde_json::Value)> {
    let (entries, meta) = load_tensors(dir)?;
    let params = NetworkParams::new(entries)?;
    reference.check_compatible(&params)?;
    Ok((params, meta))
}
