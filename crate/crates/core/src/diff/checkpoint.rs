//! Parameter files: `XCN1`, a little-endian `u32` byte length, a JSON index,
//! then raw little-endian `f32` blobs in index order.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{Branch, DiffError, ParamInfo, ParamStore, Part, Tensor};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"XCN1";

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("not a checkpoint (bad magic)")]
    BadMagic,
    #[error("checkpoint index is malformed: {0}")]
    BadIndex(#[from] serde_json::Error),
    #[error("tensor {name:?} has an inconsistent offset or shape")]
    BadTensor { name: String },
    #[error("checkpoint is truncated")]
    Truncated,
    #[error(transparent)]
    Param(#[from] DiffError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Serialize, Deserialize)]
struct Entry {
    name: String,
    shape: Vec<usize>,
    offset: u64,
    partition: Branch,
    part: Part,
}

#[derive(Debug, Serialize, Deserialize)]
struct Index {
    meta: serde_json::Value,
    tensors: Vec<Entry>,
}

pub fn write_checkpoint<W: Write>(mut w: W, store: &ParamStore<f32>, meta: &serde_json::Value) -> Result<(), CheckpointError> {
    let mut offset = 0u64;
    let tensors = store
        .iter()
        .map(|(name, t, info)| {
            let e = Entry { name: name.to_string(), shape: t.shape().to_vec(), offset, partition: info.branch, part: info.part };
            offset += 4 * t.len() as u64;
            e
        })
        .collect();
    let index = serde_json::to_vec(&Index { meta: meta.clone(), tensors })?;
    w.write_all(CHECKPOINT_MAGIC)?;
    w.write_all(&(index.len() as u32).to_le_bytes())?;
    w.write_all(&index)?;
    for (_, t, _) in store.iter() {
        let bytes: Vec<u8> = t.data().iter().flat_map(|v| v.to_le_bytes()).collect();
        w.write_all(&bytes)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_checkpoint<R: Read>(mut r: R) -> Result<(ParamStore<f32>, serde_json::Value), CheckpointError> {
    let eof = |e: std::io::Error| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => CheckpointError::Truncated,
        _ => CheckpointError::Io(e),
    };
    let mut head = [0u8; 8];
    r.read_exact(&mut head).map_err(eof)?;
    if &head[..4] != CHECKPOINT_MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let len = u32::from_le_bytes(head[4..8].try_into().unwrap()) as usize;
    let mut index = vec![0u8; len];
    r.read_exact(&mut index).map_err(eof)?;
    let index: Index = serde_json::from_slice(&index)?;

    let mut blobs = Vec::new();
    r.read_to_end(&mut blobs)?;
    let mut store = ParamStore::new();
    for e in index.tensors {
        let n: usize = e.shape.iter().product();
        let start = e.offset as usize;
        let bytes = blobs.get(start..start + 4 * n).ok_or(CheckpointError::Truncated)?;
        let data = bytes.chunks_exact(4).map(|b| f32::from_le_bytes(b.try_into().unwrap())).collect();
        let t = Tensor::new(&e.shape, data).map_err(|_| CheckpointError::BadTensor { name: e.name.clone() })?;
        store.insert(e.name, t, ParamInfo { branch: e.partition, part: e.part })?;
    }
    Ok((store, index.meta))
}

pub fn save_checkpoint(path: &Path, store: &ParamStore<f32>, meta: &serde_json::Value) -> Result<(), CheckpointError> {
    write_checkpoint(BufWriter::new(File::create(path)?), store, meta)
}

pub fn load_checkpoint(path: &Path) -> Result<(ParamStore<f32>, serde_json::Value), CheckpointError> {
    read_checkpoint(BufReader::new(File::open(path)?))
}
