//! Checkpoint layout: `u32` little-endian header length, a JSON header, then
//! every parameter as little-endian binary32 in parameter-name order.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::prepare::Normalizer;
use crate::data::SplitSpec;
use crate::error::{Error, Result};
use crate::operators::{DataDims, Model, ModelConfig};

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamShape {
    pub name: String,
    pub shape: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub version: u32,
    pub arch: String,
    pub config: ModelConfig,
    pub dims: DataDims,
    pub seed: u64,
    pub normalizer: Normalizer,
    /// Points per forward pass used in training, reused for chunked inference.
    pub points: Option<usize>,
    pub dataset: String,
    pub split: SplitSpec,
    pub params: Vec<ParamShape>,
}

impl CheckpointHeader {
    pub fn new(model: &Model, normalizer: &Normalizer) -> Self {
        let params = model
            .store
            .sorted_ids()
            .into_iter()
            .map(|id| ParamShape {
                name: model.store.name(id).to_string(),
                shape: model.store.value(id).shape().to_vec(),
            })
            .collect();
        CheckpointHeader {
            version: CHECKPOINT_VERSION,
            arch: model.arch().to_string(),
            config: model.config.clone(),
            dims: model.dims.clone(),
            seed: model.seed,
            normalizer: normalizer.clone(),
            points: None,
            dataset: String::new(),
            split: SplitSpec::default(),
            params,
        }
    }
}

pub fn encode_checkpoint(header: &CheckpointHeader, model: &Model) -> Result<Vec<u8>> {
    let json = serde_json::to_vec(header)?;
    let mut out = Vec::with_capacity(4 + json.len() + 4 * model.param_count());
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    for v in model.store.flatten_sorted() {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    Ok(out)
}

pub fn save_checkpoint(path: &Path, header: &CheckpointHeader, model: &Model) -> Result<()> {
    let bytes = encode_checkpoint(header, model)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Byte length of the parameter block of an encoded checkpoint.
pub fn param_block_len(bytes: &[u8]) -> Option<usize> {
    let n = u32::from_le_bytes(bytes.get(..4)?.try_into().ok()?) as usize;
    bytes.len().checked_sub(4 + n)
}

pub fn decode_checkpoint(path: &Path, bytes: &[u8]) -> Result<(CheckpointHeader, Model)> {
    let fmt = |offset: usize, msg: String| Error::Format {
        path: path.to_path_buf(),
        offset: offset as u64,
        msg,
    };
    let n = bytes
        .get(..4)
        .map(|b| u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as usize)
        .ok_or_else(|| fmt(bytes.len(), "file too short for a header length".into()))?;
    let json = bytes
        .get(4..4 + n)
        .ok_or_else(|| fmt(bytes.len(), format!("header of {n} bytes runs past the end")))?;
    let header: CheckpointHeader =
        serde_json::from_slice(json).map_err(|e| fmt(4 + e.column().saturating_sub(1), e.to_string()))?;
    if header.version != CHECKPOINT_VERSION {
        return Err(fmt(4, format!("checkpoint version {}", header.version)));
    }
    let mut model = Model::build(&header.config, &header.dims, header.seed)?;
    let expected: Vec<ParamShape> = CheckpointHeader::new(&model, &header.normalizer).params;
    if expected != header.params {
        return Err(fmt(4, "parameter table does not match the architecture".into()));
    }
    let block = &bytes[4 + n..];
    if block.len() != 4 * model.param_count() {
        return Err(fmt(
            4 + n + block.len().min(4 * model.param_count()),
            format!("parameter block has {} bytes, expected {}", block.len(), 4 * model.param_count()),
        ));
    }
    let flat: Vec<f64> = block
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    model.store.load_sorted(&flat)?;
    Ok((header, model))
}

pub fn load_checkpoint(path: &Path) -> Result<(CheckpointHeader, Model)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(path, &bytes)
}

