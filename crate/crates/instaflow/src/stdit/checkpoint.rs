//! Checkpoint container: magic "TSTD1\0", a length-prefixed JSON config
//! header, then named f64 tensors (name length, name, rank, dims, row-major
//! data), all little-endian.

use std::path::Path;

use crate::error::{Error, Result};
use crate::img::atomic_write;
use crate::nn::Tensor;

use super::config::ToyStDiTConfig;
use super::model::ToyStDiT;

const MAGIC: &[u8; 6] = b"TSTD1\0";

pub fn save_checkpoint(model: &ToyStDiT, path: &Path) -> Result<()> {
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    let config = serde_json::to_vec(&model.config)?;
    buf.extend_from_slice(&(config.len() as u32).to_le_bytes());
    buf.extend_from_slice(&config);
    for (name, tensor) in model.params.iter() {
        buf.extend_from_slice(&(name.len() as u32).to_le_bytes());
        buf.extend_from_slice(name.as_bytes());
        buf.extend_from_slice(&(tensor.rank() as u32).to_le_bytes());
        for &d in &tensor.shape {
            buf.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for v in &tensor.data {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    atomic_write(path, &buf)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::Format("truncated checkpoint".into()));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn done(&self) -> bool {
        self.pos == self.bytes.len()
    }
}

pub fn load_checkpoint(path: &Path) -> Result<ToyStDiT> {
    let bytes = std::fs::read(path)?;
    let mut r = Reader { bytes: &bytes, pos: 0 };
    if r.take(6)? != MAGIC {
        return Err(Error::Format("bad checkpoint magic".into()));
    }
    let config_len = r.u32()? as usize;
    let config: ToyStDiTConfig = serde_json::from_slice(r.take(config_len)?)?;
    let mut model = ToyStDiT::new(config)?;

    let mut seen = 0usize;
    while !r.done() {
        let name_len = r.u32()? as usize;
        let name = std::str::from_utf8(r.take(name_len)?)
            .map_err(|_| Error::Format("non-utf8 tensor name".into()))?
            .to_string();
        let rank = r.u32()? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(r.u32()? as usize);
        }
        let numel: usize = shape.iter().product();
        let raw = r.take(numel * 8)?;
        let data: Vec<f64> = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let id = model
            .params
            .by_name(&name)
            .ok_or_else(|| Error::Format(format!("unknown tensor '{name}' in checkpoint")))?;
        if model.params.get(id).shape != shape {
            return Err(Error::shape(
                format!("checkpoint tensor '{name}'"),
                format!("{:?}", model.params.get(id).shape),
                format!("{shape:?}"),
            ));
        }
        *model.params.get_mut(id) = Tensor::from_vec(&shape, data);
        seen += 1;
    }
    if seen != model.params.len() {
        return Err(Error::Format(format!(
            "checkpoint holds {seen} tensors, model expects {}",
            model.params.len()
        )));
    }
    Ok(model)
}
