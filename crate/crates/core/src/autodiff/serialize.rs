//! Named-tensor container.
//!
//! Little-endian throughout: a `u32` tensor count, then per tensor a `u32`
//! name length, the UTF-8 name, a `u32` rank, `rank` `u64` dimensions and
//! the `f64` payload in row-major order.

use std::io::{Read, Write};

use super::{AutodiffError, Tensor, TensorMap};

const MAX_RANK: u32 = 16;
const MAX_NAME: u32 = 4096;

fn io_err(e: std::io::Error) -> AutodiffError {
    AutodiffError::Format(e.to_string())
}

pub fn write_tensors<W: Write>(mut w: W, tensors: &TensorMap) -> Result<(), AutodiffError> {
    let count = u32::try_from(tensors.len()).map_err(|_| AutodiffError::Format("too many tensors".into()))?;
    w.write_all(&count.to_le_bytes()).map_err(io_err)?;
    for (name, t) in tensors {
        w.write_all(&(name.len() as u32).to_le_bytes()).map_err(io_err)?;
        w.write_all(name.as_bytes()).map_err(io_err)?;
        w.write_all(&(t.rank() as u32).to_le_bytes()).map_err(io_err)?;
        for &d in t.shape() {
            w.write_all(&(d as u64).to_le_bytes()).map_err(io_err)?;
        }
        let mut payload = Vec::with_capacity(t.numel() * 8);
        for v in t.data() {
            payload.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&payload).map_err(io_err)?;
    }
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32, AutodiffError> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b).map_err(io_err)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64, AutodiffError> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b).map_err(io_err)?;
    Ok(u64::from_le_bytes(b))
}

pub fn read_tensors<R: Read>(mut r: R) -> Result<TensorMap, AutodiffError> {
    let count = read_u32(&mut r)?;
    let mut out = TensorMap::new();
    for _ in 0..count {
        let name_len = read_u32(&mut r)?;
        if name_len > MAX_NAME {
            return Err(AutodiffError::Format(format!("name length {name_len} too large")));
        }
        let mut name = vec![0u8; name_len as usize];
        r.read_exact(&mut name).map_err(io_err)?;
        let name = String::from_utf8(name).map_err(|_| AutodiffError::Format("name is not UTF-8".into()))?;
        let rank = read_u32(&mut r)?;
        if rank > MAX_RANK {
            return Err(AutodiffError::Format(format!("rank {rank} too large for {name}")));
        }
        let mut shape = Vec::with_capacity(rank as usize);
        let mut numel = 1usize;
        for _ in 0..rank {
            let d = usize::try_from(read_u64(&mut r)?).map_err(|_| AutodiffError::Format("dimension overflow".into()))?;
            numel = numel.checked_mul(d).ok_or_else(|| AutodiffError::Format("element count overflow".into()))?;
            shape.push(d);
        }
        let bytes = numel.checked_mul(8).ok_or_else(|| AutodiffError::Format("payload overflow".into()))?;
        let mut payload = Vec::new();
        (&mut r).take(bytes as u64).read_to_end(&mut payload).map_err(io_err)?;
        if payload.len() != bytes {
            return Err(AutodiffError::Format(format!("payload of {name} is truncated")));
        }
        let data = payload.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
        if out.insert(name.clone(), Tensor::new(shape, data)?).is_some() {
            return Err(AutodiffError::Format(format!("duplicate tensor {name}")));
        }
    }
    Ok(out)
}
