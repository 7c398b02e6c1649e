//! Checkpoint files.
//!
//! Layout: the 8-byte magic `ULNFORGE`, a little-endian `u64` manifest length,
//! the UTF-8 JSON manifest, then every tensor's raw little-endian IEEE-754
//! payload in manifest order. Offsets in the manifest are relative to the
//! first payload byte.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::params::{ModelConfig, ModelParams, Slots};
use super::scalar::{Precision, Scalar};
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"ULNFORGE";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
    pub nbytes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointManifest {
    pub config: ModelConfig,
    pub dtype: Precision,
    pub tensors: Vec<TensorEntry>,
}

fn manifest_for<F: Scalar>(params: &ModelParams<F>) -> CheckpointManifest {
    let width = F::PRECISION.byte_width();
    let mut offset = 0;
    let tensors = params
        .tensor_specs()
        .iter()
        .map(|spec| {
            let nbytes = spec.numel() * width;
            let e = TensorEntry {
                name: spec.name.clone(),
                shape: spec.shape.clone(),
                offset,
                nbytes,
            };
            offset += nbytes;
            e
        })
        .collect();
    CheckpointManifest {
        config: params.config().clone(),
        dtype: F::PRECISION,
        tensors,
    }
}

/// Serialise to bytes (exposed for checksumming without touching disk).
pub fn encode_checkpoint<F: Scalar>(params: &ModelParams<F>) -> Result<Vec<u8>> {
    let manifest = serde_json::to_vec(&manifest_for(params))?;
    let width = F::PRECISION.byte_width();
    let mut out = Vec::with_capacity(16 + manifest.len() + params.num_params() * width);
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&(manifest.len() as u64).to_le_bytes());
    out.extend_from_slice(&manifest);
    for &x in params.flat() {
        x.write_le(&mut out);
    }
    Ok(out)
}

pub fn save_checkpoint<F: Scalar>(params: &ModelParams<F>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_checkpoint(params)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn split_header(bytes: &[u8]) -> Result<(CheckpointManifest, &[u8])> {
    if bytes.len() < 16 {
        return Err(Error::CheckpointHeader(format!(
            "file is {} bytes, shorter than the 16-byte preamble",
            bytes.len()
        )));
    }
    if &bytes[..8] != CHECKPOINT_MAGIC {
        return Err(Error::CheckpointHeader("bad magic".into()));
    }
    let len = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
    let end = 16usize
        .checked_add(len)
        .filter(|&e| e <= bytes.len())
        .ok_or_else(|| Error::CheckpointHeader(format!("manifest length {len} exceeds file")))?;
    let manifest: CheckpointManifest = serde_json::from_slice(&bytes[16..end])
        .map_err(|e| Error::CheckpointHeader(format!("manifest: {e}")))?;
    Ok((manifest, &bytes[end..]))
}

/// Read only the manifest of a checkpoint file.
pub fn read_manifest(path: impl AsRef<Path>) -> Result<CheckpointManifest> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(split_header(&bytes)?.0)
}

pub fn decode_checkpoint<F: Scalar>(bytes: &[u8]) -> Result<ModelParams<F>> {
    let (manifest, payload) = split_header(bytes)?;
    if manifest.dtype != F::PRECISION {
        return Err(Error::CheckpointHeader(format!(
            "checkpoint dtype is {:?}, requested {:?}",
            manifest.dtype,
            F::PRECISION
        )));
    }
    manifest
        .config
        .validate()
        .map_err(|e| Error::CheckpointHeader(e.to_string()))?;
    let slots = Slots::new(&manifest.config);
    if manifest.tensors.len() != slots.specs.len() {
        return Err(Error::ShapeMismatch {
            name: "<tensor count>".into(),
            expected: vec![slots.specs.len()],
            found: vec![manifest.tensors.len()],
        });
    }
    let width = F::PRECISION.byte_width();
    let mut data = Vec::with_capacity(slots.total);
    for (entry, spec) in manifest.tensors.iter().zip(&slots.specs) {
        if entry.name != spec.name || entry.shape != spec.shape {
            return Err(Error::ShapeMismatch {
                name: format!("{} (manifest) vs {}", entry.name, spec.name),
                expected: spec.shape.clone(),
                found: entry.shape.clone(),
            });
        }
        let nbytes = spec.numel() * width;
        if entry.nbytes != nbytes {
            return Err(Error::CheckpointHeader(format!(
                "{}: declared {} bytes, shape needs {nbytes}",
                entry.name, entry.nbytes
            )));
        }
        let end = entry.offset + nbytes;
        if end > payload.len() {
            return Err(Error::CheckpointTruncated {
                expected: end,
                found: payload.len(),
            });
        }
        data.extend(
            payload[entry.offset..end]
                .chunks_exact(width)
                .map(F::read_le),
        );
    }
    let params = ModelParams::from_flat(&manifest.config, data)?;
    if !params.all_finite() {
        return Err(Error::Numerical(
            "checkpoint contains non-finite parameters".into(),
        ));
    }
    Ok(params)
}

pub fn load_checkpoint<F: Scalar>(path: impl AsRef<Path>) -> Result<ModelParams<F>> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes)
}

/// Load and require the stored tensor shapes to match `expected`'s layout.
pub fn load_checkpoint_expecting<F: Scalar>(
    path: impl AsRef<Path>,
    expected: &ModelConfig,
) -> Result<ModelParams<F>> {
    let params: ModelParams<F> = load_checkpoint(path)?;
    let want = Slots::new(expected);
    for (have, want) in params.tensor_specs().iter().zip(&want.specs) {
        if have != want {
            return Err(Error::ShapeMismatch {
                name: want.name.clone(),
                expected: want.shape.clone(),
                found: have.shape.clone(),
            });
        }
    }
    if params.tensor_specs().len() != want.specs.len() {
        return Err(Error::ShapeMismatch {
            name: "<tensor count>".into(),
            expected: vec![want.specs.len()],
            found: vec![params.tensor_specs().len()],
        });
    }
    Ok(params)
}
