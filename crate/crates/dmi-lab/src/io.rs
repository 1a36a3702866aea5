//! Binary container shared by scenario bundles and model checkpoints.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic   4 bytes  "DMLB"
//! kind    4 bytes  e.g. "BNDL", "CKPT"
//! version u32      currently 1
//! meta    u32 count, then (name, utf8 string) pairs
//! index   u32 count, then (name, u32 array) pairs
//! tensor  u32 count, then (name, rank, dims..., f64 data) entries
//! ```
//!
//! Floats are stored bit-exactly, so write → read round-trips reproduce the
//! original tensors to the bit.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

const MAGIC: &[u8; 4] = b"DMLB";
pub const VERSION: u32 = 1;

/// Container kind for scenario bundles.
pub const KIND_BUNDLE: [u8; 4] = *b"BNDL";
/// Container kind for model checkpoints.
pub const KIND_CHECKPOINT: [u8; 4] = *b"CKPT";

#[derive(Clone, Debug, Default)]
pub struct Container {
    pub kind: [u8; 4],
    pub meta: BTreeMap<String, String>,
    pub indices: BTreeMap<String, Vec<u32>>,
    pub tensors: BTreeMap<String, Tensor>,
}

impl Container {
    pub fn new(kind: [u8; 4]) -> Self {
        Container {
            kind,
            ..Container::default()
        }
    }

    pub fn write_to(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(MAGIC)?;
        w.write_all(&self.kind)?;
        w.write_all(&VERSION.to_le_bytes())?;

        write_u32(&mut w, self.meta.len() as u32)?;
        for (name, value) in &self.meta {
            write_str(&mut w, name)?;
            write_str(&mut w, value)?;
        }

        write_u32(&mut w, self.indices.len() as u32)?;
        for (name, values) in &self.indices {
            write_str(&mut w, name)?;
            write_u32(&mut w, values.len() as u32)?;
            for v in values {
                write_u32(&mut w, *v)?;
            }
        }

        write_u32(&mut w, self.tensors.len() as u32)?;
        for (name, t) in &self.tensors {
            write_str(&mut w, name)?;
            write_u32(&mut w, t.shape().len() as u32)?;
            for &d in t.shape() {
                write_u32(&mut w, d as u32)?;
            }
            for &v in t.data() {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_from(path: &Path, expected_kind: [u8; 4]) -> Result<Self> {
        let mut r = BufReader::new(File::open(path)?);
        let mut magic = [0u8; 4];
        read_exact(&mut r, &mut magic, "magic")?;
        if &magic != MAGIC {
            return Err(Error::Format(format!(
                "bad magic {magic:?}, expected {MAGIC:?}"
            )));
        }
        let mut kind = [0u8; 4];
        read_exact(&mut r, &mut kind, "kind")?;
        if kind != expected_kind {
            return Err(Error::Format(format!(
                "container kind {:?} does not match expected {:?}",
                String::from_utf8_lossy(&kind),
                String::from_utf8_lossy(&expected_kind)
            )));
        }
        let version = read_u32(&mut r, "version")?;
        if version != VERSION {
            return Err(Error::Version {
                found: version,
                expected: VERSION,
            });
        }

        let mut container = Container::new(kind);
        let meta_count = read_u32(&mut r, "meta count")?;
        for _ in 0..meta_count {
            let name = read_str(&mut r, "meta name")?;
            let value = read_str(&mut r, "meta value")?;
            container.meta.insert(name, value);
        }

        let index_count = read_u32(&mut r, "index count")?;
        for _ in 0..index_count {
            let name = read_str(&mut r, "index name")?;
            let len = read_u32(&mut r, "index length")? as usize;
            let mut values = Vec::with_capacity(len);
            for _ in 0..len {
                values.push(read_u32(&mut r, "index value")?);
            }
            container.indices.insert(name, values);
        }

        let tensor_count = read_u32(&mut r, "tensor count")?;
        for _ in 0..tensor_count {
            let name = read_str(&mut r, "tensor name")?;
            let rank = read_u32(&mut r, "tensor rank")? as usize;
            let mut shape = Vec::with_capacity(rank);
            for _ in 0..rank {
                shape.push(read_u32(&mut r, "tensor dim")? as usize);
            }
            let len: usize = shape.iter().product();
            let mut data = Vec::with_capacity(len);
            let mut buf = [0u8; 8];
            for _ in 0..len {
                read_exact(&mut r, &mut buf, "tensor data")?;
                data.push(f64::from_le_bytes(buf));
            }
            container.tensors.insert(name, Tensor::new(shape, data)?);
        }
        Ok(container)
    }

    pub fn tensor(&self, name: &str) -> Result<&Tensor> {
        self.tensors
            .get(name)
            .ok_or_else(|| Error::Format(format!("missing tensor {name:?}")))
    }

    pub fn index(&self, name: &str) -> Result<&Vec<u32>> {
        self.indices
            .get(name)
            .ok_or_else(|| Error::Format(format!("missing index {name:?}")))
    }

    pub fn meta_value(&self, name: &str) -> Result<&str> {
        self.meta
            .get(name)
            .map(String::as_str)
            .ok_or_else(|| Error::Format(format!("missing metadata {name:?}")))
    }
}

fn write_u32(w: &mut impl Write, v: u32) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn write_str(w: &mut impl Write, s: &str) -> Result<()> {
    write_u32(w, s.len() as u32)?;
    w.write_all(s.as_bytes())?;
    Ok(())
}

fn read_exact(r: &mut impl Read, buf: &mut [u8], what: &str) -> Result<()> {
    r.read_exact(buf)
        .map_err(|_| Error::Truncated(format!("while reading {what}")))
}

fn read_u32(r: &mut impl Read, what: &str) -> Result<u32> {
    let mut buf = [0u8; 4];
    read_exact(r, &mut buf, what)?;
    Ok(u32::from_le_bytes(buf))
}

fn read_str(r: &mut impl Read, what: &str) -> Result<String> {
    let len = read_u32(r, what)? as usize;
    if len > 1 << 24 {
        return Err(Error::Format(format!("unreasonable string length {len}")));
    }
    let mut buf = vec![0u8; len];
    read_exact(r, &mut buf, what)?;
    String::from_utf8(buf).map_err(|e| Error::Format(format!("bad utf-8 in {what}: {e}")))
}
