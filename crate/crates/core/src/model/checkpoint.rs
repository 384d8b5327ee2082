//! Binary checkpoint format.
//!
//! ```text
//! "TBIN"            4 bytes magic
//! version           u32 LE (currently 1)
//! header_len        u32 LE
//! header            UTF-8 JSON: {"dtype":"f64","config":{..},"tensors":[{"name","rows","cols"},..]}
//! tensor_count      u32 LE
//! per tensor:       rows u32 LE, cols u32 LE, len u64 LE, len x f64 LE
//! ```
//!
//! The hash projection is the first tensor (`lsh.projection`); weights
//! follow in declaration order. Trailing bytes are an error.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::diff::Tensor2;
use crate::error::{Error, Result};
use crate::lsh::ProjectionMatrix;
use crate::model::config::ModelConfig;
use crate::model::params::ModelParams;

pub const MAGIC: &[u8; 4] = b"TBIN";
pub const VERSION: u32 = 1;
const PROJECTION_NAME: &str = "lsh.projection";

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    dtype: String,
    config: ModelConfig,
    tensors: Vec<TensorInfo>,
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
struct TensorInfo {
    name: String,
    rows: usize,
    cols: usize,
}

fn named_tensors(params: &ModelParams) -> Vec<(String, &Tensor2)> {
    let mut out = vec![(PROJECTION_NAME.to_string(), params.projection.matrix())];
    params.weights.visit(&mut |n, t| out.push((n, t)));
    out
}

pub fn to_bytes(params: &ModelParams) -> Result<Vec<u8>> {
    let tensors = named_tensors(params);
    let header = Header {
        dtype: "f64".into(),
        config: params.config.clone(),
        tensors: tensors
            .iter()
            .map(|(n, t)| TensorInfo { name: n.clone(), rows: t.rows(), cols: t.cols() })
            .collect(),
    };
    let header = serde_json::to_vec(&header)?;
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&u32::try_from(header.len()).map_err(|_| Error::Format("header too large".into()))?.to_le_bytes());
    out.extend_from_slice(&header);
    out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for (_, t) in &tensors {
        out.extend_from_slice(&(t.rows() as u32).to_le_bytes());
        out.extend_from_slice(&(t.cols() as u32).to_le_bytes());
        out.extend_from_slice(&(t.len() as u64).to_le_bytes());
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len()).ok_or_else(|| {
            Error::Format(format!("truncated checkpoint: need {n} bytes at offset {}", self.pos))
        })?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

pub fn from_bytes(buf: &[u8]) -> Result<ModelParams> {
    let mut r = Reader { buf, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(Error::Format("not a checkpoint: bad magic bytes".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported checkpoint version {version}, expected {VERSION}")));
    }
    let header_len = r.u32()? as usize;
    let header: Header = serde_json::from_slice(r.take(header_len)?)
        .map_err(|e| Error::Format(format!("checkpoint header: {e}")))?;
    if header.dtype != "f64" {
        return Err(Error::Format(format!("unsupported dtype {}", header.dtype)));
    }

    // Build a skeleton with the right shapes, then verify the declared
    // tensor list matches it exactly.
    let skeleton = ModelParams::init(header.config.clone())?;
    let expected: Vec<TensorInfo> = named_tensors(&skeleton)
        .into_iter()
        .map(|(n, t)| TensorInfo { name: n, rows: t.rows(), cols: t.cols() })
        .collect();
    if header.tensors != expected {
        return Err(Error::Format("tensor table does not match the configured architecture".into()));
    }
    let count = r.u32()? as usize;
    if count != expected.len() {
        return Err(Error::Format(format!("expected {} tensors, found {count}", expected.len())));
    }
    let mut tensors = Vec::with_capacity(count);
    for info in &expected {
        let rows = r.u32()? as usize;
        let cols = r.u32()? as usize;
        let len = r.u64()? as usize;
        if (rows, cols) != (info.rows, info.cols) || len != rows * cols {
            return Err(Error::Format(format!("tensor {} has inconsistent shape", info.name)));
        }
        let bytes = r.take(len.checked_mul(8).ok_or_else(|| Error::Format("tensor too large".into()))?)?;
        let data = bytes.chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes"))).collect();
        tensors.push(Tensor2::new(rows, cols, data)?);
    }
    if r.pos != buf.len() {
        return Err(Error::Format(format!("{} trailing bytes after last tensor", buf.len() - r.pos)));
    }
    let mut it = tensors.into_iter();
    let projection = ProjectionMatrix::from_tensor(it.next().expect("projection"), header.config.hash_seed)?;
    let weights = skeleton.weights.with_leaves(it.collect())?;
    Ok(ModelParams { config: header.config, projection, weights })
}

pub fn save_checkpoint(params: &ModelParams, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, to_bytes(params)?)?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<ModelParams> {
    from_bytes(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::config::TrainConfig;

    fn small() -> ModelParams {
        let cfg = TrainConfig { dim: 4, blocks: 2, head_hidden: 3, ..Default::default() };
        ModelParams::init(cfg.model_config(5, 5, 2)).unwrap().randomized(0.5, 3)
    }

    #[test]
    fn round_trip() {
        let p = small();
        assert_eq!(from_bytes(&to_bytes(&p).unwrap()).unwrap(), p);
    }

    #[test]
    fn corrupt_magic_version_and_truncation() {
        let bytes = to_bytes(&small()).unwrap();
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(from_bytes(&bad), Err(Error::Format(_))));
        let mut bad = bytes.clone();
        bad[4] = 9;
        assert!(from_bytes(&bad).unwrap_err().to_string().contains("version"));
        assert!(from_bytes(&bytes[..bytes.len() - 3]).is_err());
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(from_bytes(&extra).is_err());
    }
}
