//! Binary checkpoint of named parameter tensors.
//!
//! Layout, little-endian: magic `GBCK`, `u32` version, `u32` length plus a
//! JSON hyperparameter block, `u32` record count, then per record a `u32`
//! name length, the UTF-8 name, `u32` rank (always 2), `u64` rows, `u64`
//! cols and the `f64` payload in row-major order.

use crate::autodiff::{Matrix, ParamStore};
use crate::error::{Error, Result};
use serde::Serialize;
use std::io::{Read, Write};
use std::path::Path;

const MAGIC: &[u8; 4] = b"GBCK";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    /// Hyperparameters as JSON text.
    pub hyperparams: String,
    pub tensors: Vec<(String, Matrix)>,
}

impl Checkpoint {
    pub fn from_store<H: Serialize>(store: &ParamStore, hyperparams: &H) -> Result<Self> {
        let hyperparams = serde_json::to_string(hyperparams)
            .map_err(|e| Error::Checkpoint(format!("hyperparameters: {e}")))?;
        Ok(Self {
            hyperparams,
            tensors: store.iter().map(|(_, p)| (p.name.clone(), p.value.clone())).collect(),
        })
    }

    /// Copies values into same-named parameters; every parameter of the
    /// store must be present with a matching shape.
    pub fn restore_into(&self, store: &mut ParamStore) -> Result<()> {
        let ids: Vec<_> = store.ids().collect();
        for id in ids {
            let name = store.get(id).name.clone();
            let (_, m) = self
                .tensors
                .iter()
                .find(|(n, _)| *n == name)
                .ok_or_else(|| Error::Checkpoint(format!("missing tensor {name}")))?;
            if m.shape() != store.value(id).shape() {
                return Err(Error::Checkpoint(format!(
                    "tensor {name} has shape {:?}, expected {:?}",
                    m.shape(),
                    store.value(id).shape()
                )));
            }
            store.get_mut(id).value = m.clone();
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.hyperparams.len() as u32).to_le_bytes());
        out.extend_from_slice(self.hyperparams.as_bytes());
        out.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        for (name, m) in &self.tensors {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&2u32.to_le_bytes());
            out.extend_from_slice(&(m.rows() as u64).to_le_bytes());
            out.extend_from_slice(&(m.cols() as u64).to_le_bytes());
            for v in m.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = bytes;
        let mut magic = [0u8; 4];
        read_exact(&mut r, &mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Checkpoint("bad magic".into()));
        }
        let version = read_u32(&mut r)?;
        if version != VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {version}")));
        }
        let hlen = read_u32(&mut r)? as usize;
        let hyperparams = read_string(&mut r, hlen)?;
        let count = read_u32(&mut r)? as usize;
        let mut tensors = Vec::with_capacity(count.min(4096));
        for _ in 0..count {
            let nlen = read_u32(&mut r)? as usize;
            let name = read_string(&mut r, nlen)?;
            let rank = read_u32(&mut r)?;
            if rank != 2 {
                return Err(Error::Checkpoint(format!("tensor {name} has rank {rank}")));
            }
            let rows = read_u64(&mut r)? as usize;
            let cols = read_u64(&mut r)? as usize;
            let len = rows
                .checked_mul(cols)
                .filter(|&l| l.saturating_mul(8) <= r.len())
                .ok_or_else(|| Error::Checkpoint(format!("tensor {name} is truncated")))?;
            let mut data = Vec::with_capacity(len);
            for _ in 0..len {
                let mut b = [0u8; 8];
                read_exact(&mut r, &mut b)?;
                data.push(f64::from_le_bytes(b));
            }
            tensors.push((name, Matrix::from_vec(rows, cols, data)?));
        }
        if !r.is_empty() {
            return Err(Error::Checkpoint(format!("{} trailing bytes", r.len())));
        }
        Ok(Self { hyperparams, tensors })
    }
}

fn read_exact(r: &mut &[u8], buf: &mut [u8]) -> Result<()> {
    r.read_exact(buf)
        .map_err(|_| Error::Checkpoint("unexpected end of data".into()))
}

fn read_u32(r: &mut &[u8]) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact(r, &mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64(r: &mut &[u8]) -> Result<u64> {
    let mut b = [0u8; 8];
    read_exact(r, &mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_string(r: &mut &[u8], len: usize) -> Result<String> {
    if len > r.len() {
        return Err(Error::Checkpoint("unexpected end of data".into()));
    }
    let mut buf = vec![0u8; len];
    read_exact(r, &mut buf)?;
    String::from_utf8(buf).map_err(|_| Error::Checkpoint("invalid UTF-8".into()))
}

pub fn save_checkpoint<H: Serialize>(path: &Path, store: &ParamStore, hyperparams: &H) -> Result<()> {
    let bytes = Checkpoint::from_store(store, hyperparams)?.to_bytes();
    let mut f = std::fs::File::create(path)?;
    f.write_all(&bytes)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    Checkpoint::from_bytes(&std::fs::read(path)?)
}
