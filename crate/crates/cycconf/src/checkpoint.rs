//! Detector checkpoints.
//!
//! One file, little-endian throughout:
//!
//! ```text
//! 8 bytes   magic "CYCCKPT1"
//! 8 bytes   u64 length L of the JSON header
//! L bytes   UTF-8 JSON header (CheckpointHeader)
//! 4·P bytes P parameters as f32, in the order of header.params
//! ```
//!
//! Each `params` entry gives a tensor's name, shape and offset into the blob.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use cycconf_core::det::{DetectorConfig, DetectorModel};
use serde::{Deserialize, Serialize};

use crate::error::{io_err, Error, Result};
use crate::fsutil::{write_atomic, SCHEMA_VERSION, TOOL_VERSION};
use crate::schema::DetectorJson;

pub const MAGIC: &[u8; 8] = b"CYCCKPT1";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub schema_version: u32,
    pub format_version: u32,
    pub tool_version: String,
    pub dtype: String,
    pub num_params: usize,
    pub detector: DetectorJson,
    /// Training configuration as flat key=value pairs; empty for an untrained model.
    pub train_config: BTreeMap<String, String>,
    pub iteration: usize,
    pub params: Vec<ParamEntry>,
}

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub header: CheckpointHeader,
    pub model: DetectorModel<f32>,
}

pub fn to_bytes(model: &DetectorModel<f32>, train_config: BTreeMap<String, String>, iteration: usize) -> Vec<u8> {
    let params = model
        .params
        .specs()
        .iter()
        .map(|s| ParamEntry { name: s.name.clone(), shape: s.shape.clone(), offset: s.offset })
        .collect();
    let header = CheckpointHeader {
        schema_version: SCHEMA_VERSION,
        format_version: FORMAT_VERSION,
        tool_version: TOOL_VERSION.into(),
        dtype: "f32le".into(),
        num_params: model.params.len(),
        detector: (&model.config).into(),
        train_config,
        iteration,
        params,
    };
    let json = serde_json::to_vec(&header).expect("header serialises");
    let mut out = Vec::with_capacity(16 + json.len() + 4 * model.params.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    for v in model.params.values() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn save(path: &Path, model: &DetectorModel<f32>, train_config: BTreeMap<String, String>, iteration: usize) -> Result<()> {
    write_atomic(path, &to_bytes(model, train_config, iteration))
}

pub fn from_bytes(path: &Path, bytes: &[u8]) -> Result<Checkpoint> {
    let bad = |m: &str| Error::format(path, m.to_string());
    if bytes.len() < 16 || &bytes[..8] != MAGIC {
        return Err(bad("not a checkpoint (bad magic)"));
    }
    let len = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
    let json = bytes.get(16..16usize.saturating_add(len)).ok_or_else(|| bad("truncated header"))?;
    let header: CheckpointHeader =
        serde_json::from_slice(json).map_err(|e| Error::format(path, format!("malformed header: {e}")))?;
    if header.format_version != FORMAT_VERSION || header.dtype != "f32le" {
        return Err(bad("unsupported checkpoint format"));
    }
    let blob = &bytes[16 + len..];
    if blob.len() != 4 * header.num_params {
        return Err(Error::format(path, format!("expected {} parameters, blob holds {} bytes", header.num_params, blob.len())));
    }
    let config = DetectorConfig::from(&header.detector);
    let mut model = DetectorModel::<f32>::new(config, 0)?;
    let layout_matches = model.params.len() == header.num_params
        && model.params.specs().len() == header.params.len()
        && model.params.specs().iter().zip(&header.params).all(|(s, e)| s.name == e.name && s.shape == e.shape && s.offset == e.offset);
    if !layout_matches {
        return Err(bad("parameter layout does not match the detector configuration"));
    }
    for (dst, src) in model.params.values_mut().iter_mut().zip(blob.chunks_exact(4)) {
        *dst = f32::from_le_bytes(src.try_into().expect("4 bytes"));
    }
    Ok(Checkpoint { header, model })
}

pub fn load(path: &Path) -> Result<Checkpoint> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    from_bytes(path, &bytes)
}
