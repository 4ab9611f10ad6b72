//! Binary checkpoints.
//!
//! Layout (little-endian):
//!
//! ```text
//! b"AFFECTCK" | u32 version | u64 header_len | header JSON | u64 n | n × f64
//! ```
//!
//! The header stores the task, feature width, slots and arbitrary run
//! metadata. Identical models and metadata produce identical bytes.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{ScorerError, Slot, SlotScorer};
use crate::templates::PromptTask;

const MAGIC: &[u8; 8] = b"AFFECTCK";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("not a checkpoint file")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    UnsupportedVersion(u32),
    #[error("bad checkpoint header: {0}")]
    Header(#[from] serde_json::Error),
    #[error(transparent)]
    Shape(#[from] ScorerError),
}

#[derive(Serialize, Deserialize)]
struct Header {
    task: PromptTask,
    feature_dim: usize,
    arity: usize,
    slots: Vec<Slot>,
    metadata: serde_json::Value,
}

pub fn write_checkpoint<W: Write>(
    mut w: W,
    model: &SlotScorer,
    metadata: &serde_json::Value,
) -> Result<(), CheckpointError> {
    let header = serde_json::to_vec(&Header {
        task: model.task(),
        feature_dim: model.feature_dim(),
        arity: model.arity(),
        slots: model.slots().to_vec(),
        metadata: metadata.clone(),
    })?;
    w.write_all(MAGIC)?;
    w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
    w.write_all(&(header.len() as u64).to_le_bytes())?;
    w.write_all(&header)?;
    w.write_all(&(model.params().len() as u64).to_le_bytes())?;
    let mut buf = Vec::with_capacity(model.params().len() * 8);
    for p in model.params() {
        buf.extend_from_slice(&p.to_le_bytes());
    }
    w.write_all(&buf)?;
    w.flush()?;
    Ok(())
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64, CheckpointError> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

pub fn read_checkpoint<R: Read>(mut r: R) -> Result<(SlotScorer, serde_json::Value), CheckpointError> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic).map_err(|_| CheckpointError::BadMagic)?;
    if &magic != MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let mut vb = [0u8; 4];
    r.read_exact(&mut vb)?;
    let version = u32::from_le_bytes(vb);
    if version != CHECKPOINT_VERSION {
        return Err(CheckpointError::UnsupportedVersion(version));
    }
    let header_len = read_u64(&mut r)? as usize;
    let mut header = vec![0u8; header_len];
    r.read_exact(&mut header)?;
    let header: Header = serde_json::from_slice(&header)?;
    let n = read_u64(&mut r)? as usize;
    let mut raw = Vec::new();
    r.read_to_end(&mut raw)?;
    if raw.len() != n * 8 {
        return Err(ScorerError::SlotMismatch(format!("expected {n} weights, file holds {} bytes", raw.len())).into());
    }
    let weights = raw
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    let model = SlotScorer::from_parts(header.task, header.feature_dim, header.slots, weights)?;
    if model.arity() != header.arity {
        return Err(ScorerError::SlotMismatch("arity does not match task".into()).into());
    }
    Ok((model, header.metadata))
}

pub fn save_checkpoint(
    path: impl AsRef<Path>,
    model: &SlotScorer,
    metadata: &serde_json::Value,
) -> Result<(), CheckpointError> {
    let file = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_checkpoint(file, model, metadata)
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<(SlotScorer, serde_json::Value), CheckpointError> {
    let file = std::io::BufReader::new(std::fs::File::open(path)?);
    read_checkpoint(file)
}
