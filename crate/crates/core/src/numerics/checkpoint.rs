//! Binary parameter checkpoints.
//!
//! Layout (all integers little-endian `u64`):
//!
//! ```text
//! b"M4DCKPT\0"  count
//! repeated count times:
//!     name_len  name (UTF-8)  rank  dims[rank]  values[prod(dims)] as f64 LE
//! ```

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use super::tape::ParamStore;
use super::Tensor;
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"M4DCKPT\0";

const FORMAT: &str = "checkpoint";

pub fn write_checkpoint<W: Write>(store: &ParamStore, mut w: W) -> Result<()> {
    w.write_all(CHECKPOINT_MAGIC)?;
    w.write_all(&(store.len() as u64).to_le_bytes())?;
    for (name, t) in store.iter() {
        w.write_all(&(name.len() as u64).to_le_bytes())?;
        w.write_all(name.as_bytes())?;
        w.write_all(&(t.rank() as u64).to_le_bytes())?;
        for &e in t.shape() {
            w.write_all(&(e as u64).to_le_bytes())?;
        }
        for v in t.data() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

struct Cursor<'a> {
    bytes: &'a [u8],
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() < n {
            return Err(Error::format(FORMAT, "unexpected end of file"));
        }
        let (head, tail) = self.bytes.split_at(n);
        self.bytes = tail;
        Ok(head)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn len(&mut self, what: &str) -> Result<usize> {
        let v = self.u64()?;
        usize::try_from(v)
            .ok()
            .filter(|&n| n <= self.bytes.len().max(64))
            .ok_or_else(|| Error::format(FORMAT, format!("implausible {what} {v}")))
    }
}

/// Reads every `(name, tensor)` entry in file order.
pub fn read_checkpoint<R: Read>(mut r: R) -> Result<Vec<(String, Tensor)>> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    let mut c = Cursor { bytes: &bytes };
    if c.take(8)? != CHECKPOINT_MAGIC {
        return Err(Error::format(FORMAT, "bad magic header"));
    }
    let count = c.len("entry count")?;
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let name_len = c.len("name length")?;
        let name = std::str::from_utf8(c.take(name_len)?)
            .map_err(|_| Error::format(FORMAT, "parameter name is not UTF-8"))?
            .to_owned();
        let rank = c.len("rank")?;
        let shape = (0..rank).map(|_| c.len("extent")).collect::<Result<Vec<_>>>()?;
        let n: usize = shape.iter().product();
        let raw = c.take(n.checked_mul(8).ok_or_else(|| Error::format(FORMAT, "tensor too large"))?)?;
        let data = raw
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes")))
            .collect();
        let t = Tensor::new(shape, data).map_err(|e| Error::format(FORMAT, format!("{name}: {e}")))?;
        out.push((name, t));
    }
    if !c.bytes.is_empty() {
        return Err(Error::format(FORMAT, "trailing bytes after last entry"));
    }
    Ok(out)
}

pub fn save_checkpoint(store: &ParamStore, path: impl AsRef<Path>) -> Result<()> {
    let mut buf = Vec::new();
    write_checkpoint(store, &mut buf)?;
    fs::write(path, buf)?;
    Ok(())
}

/// Overwrites every parameter of `store` from the checkpoint at `path`.
/// Names and shapes must match exactly.
pub fn load_checkpoint_into(store: &mut ParamStore, path: impl AsRef<Path>) -> Result<()> {
    let entries = read_checkpoint(fs::File::open(path)?)?;
    if entries.len() != store.len() {
        return Err(Error::shape(format!(
            "checkpoint has {} parameters, model has {}",
            entries.len(),
            store.len()
        )));
    }
    for (name, t) in entries {
        let id = store
            .id(&name)
            .ok_or_else(|| Error::shape(format!("checkpoint parameter {name} not in model")))?;
        if store.get(id).shape() != t.shape() {
            return Err(Error::shape(format!(
                "{name}: checkpoint shape {:?}, model shape {:?}",
                t.shape(),
                store.get(id).shape()
            )));
        }
        *store.get_mut(id) = t;
    }
    Ok(())
}
