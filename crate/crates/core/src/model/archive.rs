//! Binary archive: a JSON header plus named tensors.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic      8 bytes   "UAEDARCH"
//! version    u32       1
//! header_len u64
//! header     header_len bytes of UTF-8 JSON
//! count      u32       number of tensors
//! per tensor:
//!   name_len u32, name (UTF-8)
//!   dtype    u8        0 = f32, 1 = f64
//!   ndim     u32, dims u64 × ndim
//!   data     row-major elements
//! ```

use std::io::{Cursor, Read};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use crate::error::{Error, Result};
use crate::scalar::{DType, Scalar};
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 8] = b"UAEDARCH";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Archive<S> {
    pub header: serde_json::Value,
    pub tensors: Vec<(String, Tensor<S>)>,
}

impl<S: Scalar> Archive<S> {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = serde_json::to_vec(&self.header)?;
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.write_u32::<LittleEndian>(VERSION).expect("vec write");
        out.write_u64::<LittleEndian>(header.len() as u64).expect("vec write");
        out.extend_from_slice(&header);
        out.write_u32::<LittleEndian>(self.tensors.len() as u32).expect("vec write");
        for (name, t) in &self.tensors {
            out.write_u32::<LittleEndian>(name.len() as u32).expect("vec write");
            out.extend_from_slice(name.as_bytes());
            out.push(S::DTYPE.code());
            out.write_u32::<LittleEndian>(t.shape().len() as u32).expect("vec write");
            for &d in t.shape() {
                out.write_u64::<LittleEndian>(d as u64).expect("vec write");
            }
            for &v in t.data() {
                v.write_le(&mut out);
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |what: &str| Error::Checkpoint(what.to_string());
        let mut cur = Cursor::new(bytes);
        let mut magic = [0u8; 8];
        cur.read_exact(&mut magic).map_err(|_| bad("truncated magic"))?;
        if &magic != MAGIC {
            return Err(bad("bad magic"));
        }
        let version = cur.read_u32::<LittleEndian>().map_err(|_| bad("truncated version"))?;
        if version != VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {version}")));
        }
        let hlen = cur.read_u64::<LittleEndian>().map_err(|_| bad("truncated header length"))? as usize;
        let start = cur.position() as usize;
        let header_bytes = bytes.get(start..start + hlen).ok_or_else(|| bad("truncated header"))?;
        let header: serde_json::Value = serde_json::from_slice(header_bytes)?;
        cur.set_position((start + hlen) as u64);
        let count = cur.read_u32::<LittleEndian>().map_err(|_| bad("truncated tensor count"))?;
        let mut tensors = Vec::with_capacity(count as usize);
        for _ in 0..count {
            let nlen = cur.read_u32::<LittleEndian>().map_err(|_| bad("truncated name length"))? as usize;
            let mut name = vec![0u8; nlen];
            cur.read_exact(&mut name).map_err(|_| bad("truncated name"))?;
            let name = String::from_utf8(name).map_err(|_| bad("tensor name is not UTF-8"))?;
            let dtype = DType::from_code(cur.read_u8().map_err(|_| bad("truncated dtype"))?)
                .ok_or_else(|| bad("unknown dtype"))?;
            if dtype != S::DTYPE {
                return Err(Error::Checkpoint(format!(
                    "tensor {name} is {dtype:?}, expected {:?}",
                    S::DTYPE
                )));
            }
            let ndim = cur.read_u32::<LittleEndian>().map_err(|_| bad("truncated ndim"))? as usize;
            let mut shape = Vec::with_capacity(ndim);
            for _ in 0..ndim {
                shape.push(cur.read_u64::<LittleEndian>().map_err(|_| bad("truncated dims"))? as usize);
            }
            let n: usize = shape.iter().product();
            let start = cur.position() as usize;
            let size = dtype.size();
            let raw = bytes
                .get(start..start + n * size)
                .ok_or_else(|| Error::Checkpoint(format!("truncated data for {name}")))?;
            let data = raw.chunks_exact(size).map(S::read_le).collect();
            cur.set_position((start + n * size) as u64);
            tensors.push((name, Tensor::from_vec(&shape, data)?));
        }
        if cur.position() as usize != bytes.len() {
            return Err(bad("trailing bytes"));
        }
        Ok(Self { header, tensors })
    }
}

/// Write atomically (temp file + rename).
pub fn write_archive<S: Scalar>(path: &Path, archive: &Archive<S>) -> Result<()> {
    let bytes = archive.to_bytes()?;
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, &bytes).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn read_archive<S: Scalar>(path: &Path) -> Result<Archive<S>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Archive::from_bytes(&bytes)
}
