//! `CKP1` checkpoints.
//!
//! Layout: magic `CKP1`, a little-endian `u32` header length, the JSON
//! header, then named tensor blocks until end of file. Each block is a
//! little-endian `u16` name length, the UTF-8 name and a `CRT1` tensor.

use super::{param_count, Model, ModelSpec, Planes};
use crate::error::{Error, Result};
use crate::tensor::{read_crt1, write_crt1, ComplexTensor};
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};
use std::path::Path;

pub const CKP1_MAGIC: &[u8; 4] = b"CKP1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    pub train_mse: f64,
    pub val_mse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub spec: ModelSpec,
    /// Last completed epoch.
    pub epoch: usize,
    /// Epoch whose parameters are stored as the model.
    pub best_epoch: usize,
    pub history: Vec<EpochRecord>,
    pub param_count: usize,
    /// Inputs are divided by this before the network and outputs multiplied.
    pub normalizer: f64,
    pub adam_step: u64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub header: CheckpointHeader,
    pub model: Model<f32>,
    /// Any further named tensors, e.g. optimiser state.
    pub extra: Vec<(String, ComplexTensor)>,
}

fn format_err(reason: impl Into<String>) -> Error {
    Error::Format {
        format: "CKP1",
        reason: reason.into(),
    }
}

fn write_block<W: Write>(w: &mut W, name: &str, t: &ComplexTensor) -> std::io::Result<()> {
    let len = u16::try_from(name.len()).map_err(|_| {
        std::io::Error::new(std::io::ErrorKind::InvalidInput, "block name too long")
    })?;
    w.write_all(&len.to_le_bytes())?;
    w.write_all(name.as_bytes())?;
    write_crt1(w, t)
}

pub fn write_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<()> {
    let mut buf = Vec::new();
    let header = serde_json::to_vec(&ckpt.header)?;
    buf.extend_from_slice(CKP1_MAGIC);
    buf.extend_from_slice(&(header.len() as u32).to_le_bytes());
    buf.extend_from_slice(&header);
    let io = |e| Error::io(path, e);
    for (name, p) in ckpt.model.named_blocks() {
        write_block(&mut buf, &name, &p.to_tensor()).map_err(io)?;
    }
    for (name, t) in &ckpt.extra {
        write_block(&mut buf, name, t).map_err(io)?;
    }
    // write-then-rename so a crash never leaves a truncated checkpoint
    let tmp = path.with_extension("ckp1.tmp");
    std::fs::write(&tmp, &buf).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(io)
}

pub fn read_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    parse(&bytes)
}

fn parse(bytes: &[u8]) -> Result<Checkpoint> {
    if bytes.len() < 8 || &bytes[..4] != CKP1_MAGIC {
        return Err(format_err("missing CKP1 magic"));
    }
    let hlen = u32::from_le_bytes([bytes[4], bytes[5], bytes[6], bytes[7]]) as usize;
    let header_bytes = bytes
        .get(8..8 + hlen)
        .ok_or_else(|| format_err("truncated header"))?;
    let header: CheckpointHeader =
        serde_json::from_slice(header_bytes).map_err(|e| format_err(format!("bad header: {e}")))?;
    if header.param_count != param_count(&header.spec) {
        return Err(format_err(format!(
            "header claims {} parameters, spec has {}",
            header.param_count,
            param_count(&header.spec)
        )));
    }
    let mut model = Model::<f32>::zeros(&header.spec)?;
    let mut filled = vec![false; model.named_blocks().len()];
    let mut extra = Vec::new();
    let mut r = &bytes[8 + hlen..];
    while !r.is_empty() {
        let mut len = [0u8; 2];
        r.read_exact(&mut len)
            .map_err(|_| format_err("truncated block name"))?;
        let len = u16::from_le_bytes(len) as usize;
        let name = r
            .get(..len)
            .ok_or_else(|| format_err("truncated block name"))?;
        let name = std::str::from_utf8(name)
            .map_err(|_| format_err("block name is not UTF-8"))?
            .to_string();
        r = &r[len..];
        let tensor = read_crt1(&mut r)?;
        let mut blocks = model.named_blocks_mut();
        match blocks.iter_mut().position(|(n, _)| *n == name) {
            Some(i) => {
                let slot = &mut blocks[i].1;
                if tensor.shape() != slot.shape() {
                    return Err(format_err(format!(
                        "block {name} has shape {:?}, expected {:?}",
                        tensor.shape(),
                        slot.shape()
                    )));
                }
                **slot = Planes::from_tensor(&tensor);
                filled[i] = true;
            }
            None => extra.push((name, tensor)),
        }
    }
    if let Some(i) = filled.iter().position(|f| !f) {
        let name = model.named_blocks()[i].0.clone();
        return Err(format_err(format!("missing block {name}")));
    }
    Ok(Checkpoint {
        header,
        model,
        extra,
    })
}
