//! Parameter checkpoints: the magic `LCCK`, a little-endian `u32` version, a
//! little-endian `u64` header length, a JSON header listing every tensor
//! (name, layer kind, shape, trainable flag) plus free-form metadata, then
//! the raw little-endian `f32` arrays in header order.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ParamStore, Real, Tensor};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"LCCK";
const VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    entries: Vec<HeaderEntry>,
    #[serde(default)]
    meta: serde_json::Value,
}

#[derive(Debug, Serialize, Deserialize)]
struct HeaderEntry {
    name: String,
    kind: String,
    shape: Vec<usize>,
    trainable: bool,
}

/// A decoded checkpoint: the tensors and the metadata stored with them
/// (typically the model configuration).
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub meta: serde_json::Value,
    pub store: ParamStore<f32>,
}

pub fn write_checkpoint<T: Real, W: Write>(mut w: W, store: &ParamStore<T>, meta: &serde_json::Value) -> Result<()> {
    let header = Header {
        entries: store
            .entries()
            .iter()
            .map(|e| HeaderEntry {
                name: e.name.clone(),
                kind: e.kind.clone(),
                shape: e.tensor.shape().to_vec(),
                trainable: e.tensor.requires_grad(),
            })
            .collect(),
        meta: meta.clone(),
    };
    let json = serde_json::to_vec(&header)?;
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(json.len() as u64).to_le_bytes())?;
    w.write_all(&json)?;
    for e in store.entries() {
        for v in e.tensor.data() {
            w.write_all(&v.to_f32().expect("finite").to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_checkpoint<R: Read>(mut r: R) -> Result<Checkpoint> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Format("not a checkpoint (bad magic)".into()));
    }
    let mut b4 = [0u8; 4];
    r.read_exact(&mut b4)?;
    let version = u32::from_le_bytes(b4);
    if version != VERSION {
        return Err(Error::Format(format!("unsupported checkpoint version {version}")));
    }
    let mut b8 = [0u8; 8];
    r.read_exact(&mut b8)?;
    let len = u64::from_le_bytes(b8) as usize;
    let mut json = vec![0u8; len];
    r.read_exact(&mut json)?;
    let header: Header = serde_json::from_slice(&json)?;
    let mut store = ParamStore::new();
    for e in header.entries {
        let n: usize = e.shape.iter().product();
        let mut raw = vec![0u8; n * 4];
        r.read_exact(&mut raw)?;
        let data = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        let t = Tensor::new(e.shape, data)?.with_requires_grad(e.trainable);
        store.add(e.name, e.kind, t);
    }
    Ok(Checkpoint {
        meta: header.meta,
        store,
    })
}

pub fn save_checkpoint<T: Real>(path: &Path, store: &ParamStore<T>, meta: &serde_json::Value) -> Result<()> {
    write_checkpoint(BufWriter::new(File::create(path)?), store, meta)
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    read_checkpoint(BufReader::new(File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_is_magic_header_then_le_f32() {
        let mut store = ParamStore::<f32>::new();
        store.add("a.weight", "linear.weight", Tensor::new(vec![2], vec![1.5, -2.0]).unwrap().with_requires_grad(true));
        store.add("b.running_var", "batchnorm.running_var", Tensor::new(vec![1, 1], vec![0.25]).unwrap());
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, &store, &serde_json::json!({"arch": "toy"})).unwrap();
        assert_eq!(&buf[..4], b"LCCK");
        let hlen = u64::from_le_bytes(buf[8..16].try_into().unwrap()) as usize;
        let body = &buf[16 + hlen..];
        assert_eq!(body.len(), 12);
        assert_eq!(f32::from_le_bytes(body[4..8].try_into().unwrap()), -2.0);

        let back = read_checkpoint(&buf[..]).unwrap();
        assert_eq!(back.store, store);
        assert_eq!(back.meta["arch"], "toy");
    }

    #[test]
    fn truncated_file_is_an_error() {
        let mut store = ParamStore::<f32>::new();
        store.add("w", "linear.weight", Tensor::full(&[4], 1.0));
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, &store, &serde_json::Value::Null).unwrap();
        buf.truncate(buf.len() - 3);
        assert!(read_checkpoint(&buf[..]).is_err());
    }
}
