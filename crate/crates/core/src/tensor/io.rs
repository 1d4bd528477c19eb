//! `CRT1` binary tensor format.
//!
//! Layout: the magic bytes `CRT1`, a `u8` rank, `rank` little-endian `u32`
//! axis lengths, then the row-major elements as little-endian `f32`
//! `(re, im)` pairs.

use super::ComplexTensor;
use crate::error::{Error, Result};
use num_complex::Complex32;
use std::io::{Read, Write};
use std::path::Path;

pub const CRT1_MAGIC: &[u8; 4] = b"CRT1";

fn format_err(reason: impl Into<String>) -> Error {
    Error::Format {
        format: "CRT1",
        reason: reason.into(),
    }
}

pub fn write_crt1<W: Write>(mut w: W, tensor: &ComplexTensor) -> std::io::Result<()> {
    let rank = u8::try_from(tensor.rank())
        .map_err(|_| std::io::Error::new(std::io::ErrorKind::InvalidInput, "rank exceeds 255"))?;
    let mut buf = Vec::with_capacity(5 + 4 * tensor.rank() + 8 * tensor.len());
    buf.extend_from_slice(CRT1_MAGIC);
    buf.push(rank);
    for &d in tensor.shape() {
        let d = u32::try_from(d).map_err(|_| {
            std::io::Error::new(std::io::ErrorKind::InvalidInput, "axis length exceeds u32")
        })?;
        buf.extend_from_slice(&d.to_le_bytes());
    }
    for z in tensor.data() {
        buf.extend_from_slice(&z.re.to_le_bytes());
        buf.extend_from_slice(&z.im.to_le_bytes());
    }
    w.write_all(&buf)
}

pub fn read_crt1<R: Read>(mut r: R) -> Result<ComplexTensor> {
    let mut head = [0u8; 5];
    r.read_exact(&mut head)
        .map_err(|e| format_err(format!("truncated header: {e}")))?;
    if &head[..4] != CRT1_MAGIC {
        return Err(format_err(format!("bad magic {:?}", &head[..4])));
    }
    let rank = head[4] as usize;
    if rank == 0 {
        return Err(format_err("rank 0"));
    }
    let mut dims = vec![0u8; 4 * rank];
    r.read_exact(&mut dims)
        .map_err(|e| format_err(format!("truncated dims: {e}")))?;
    let shape: Vec<usize> = dims
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes([c[0], c[1], c[2], c[3]]) as usize)
        .collect();
    let len = shape
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| format_err("element count overflows"))?;
    let mut payload = vec![0u8; len * 8];
    r.read_exact(&mut payload)
        .map_err(|e| format_err(format!("truncated payload: {e}")))?;
    let data = payload
        .chunks_exact(8)
        .map(|c| {
            Complex32::new(
                f32::from_le_bytes([c[0], c[1], c[2], c[3]]),
                f32::from_le_bytes([c[4], c[5], c[6], c[7]]),
            )
        })
        .collect();
    ComplexTensor::from_vec(&shape, data).map_err(|e| format_err(e.to_string()))
}

pub fn write_crt1_file(path: &Path, tensor: &ComplexTensor) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    write_crt1(&mut w, tensor).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_crt1_file(path: &Path) -> Result<ComplexTensor> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_crt1(std::io::BufReader::new(file))
}
