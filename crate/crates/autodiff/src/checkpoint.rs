//! Binary container for named tensors plus a UTF-8 metadata string.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic "WVCK" | u32 version | u32 meta_len | meta bytes | u32 count
//! count x { u16 name_len | name | u8 trainable | u8 width | u8 ndim | ndim x u32 dim | data }
//! ```
//!
//! `width` is the element size in bytes (4 for f32, 8 for f64).

use std::path::Path;

use crate::error::{AutodiffError, Result};
use crate::params::ParamStore;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 4] = b"WVCK";
pub const CHECKPOINT_VERSION: u32 = 1;
const MAX_NDIM: u8 = 8;

#[derive(Debug, Clone, PartialEq)]
pub struct NamedTensor<T> {
    pub name: String,
    pub trainable: bool,
    pub tensor: Tensor<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint<T> {
    pub metadata: String,
    pub tensors: Vec<NamedTensor<T>>,
}

fn bad<R>(msg: impl Into<String>) -> Result<R> {
    Err(AutodiffError::Checkpoint(msg.into()))
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return bad(format!("truncated at byte {}", self.pos));
        }
        let out = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("two bytes")))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("four bytes")))
    }

    fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }
}

impl<T: Scalar> Checkpoint<T> {
    pub fn from_store(store: &ParamStore<T>, metadata: impl Into<String>) -> Self {
        let tensors = store
            .iter()
            .map(|(_, p)| NamedTensor { name: p.name.clone(), trainable: p.trainable, tensor: p.value.clone() })
            .collect();
        Self { metadata: metadata.into(), tensors }
    }

    /// Copies every tensor into the entry of the same name. The store must
    /// contain exactly the checkpoint's names with matching shapes.
    pub fn restore_into(&self, store: &mut ParamStore<T>) -> Result<()> {
        if self.tensors.len() != store.len() {
            return bad(format!("checkpoint holds {} tensors, model has {}", self.tensors.len(), store.len()));
        }
        for t in &self.tensors {
            let Some(id) = store.id(&t.name) else {
                return bad(format!("unknown tensor {:?}", t.name));
            };
            let p = store.get_mut(id);
            if p.value.shape() != t.tensor.shape() {
                return bad(format!(
                    "tensor {:?} has shape {:?}, model expects {:?}",
                    t.name,
                    t.tensor.shape(),
                    p.value.shape()
                ));
            }
            p.value = t.tensor.clone();
        }
        Ok(())
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.metadata.len() as u32).to_le_bytes());
        out.extend_from_slice(self.metadata.as_bytes());
        out.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        for t in &self.tensors {
            out.extend_from_slice(&(t.name.len() as u16).to_le_bytes());
            out.extend_from_slice(t.name.as_bytes());
            out.push(t.trainable as u8);
            out.push(T::WIDTH);
            out.push(t.tensor.ndim() as u8);
            for &d in t.tensor.shape() {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
            for &v in t.tensor.data() {
                v.write_le(&mut out);
            }
        }
        out
    }

    /// Parses a checkpoint. Every length is checked against the remaining
    /// input before anything is allocated.
    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { buf: bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return bad("not a checkpoint (bad magic)");
        }
        let version = r.u32()?;
        if version != CHECKPOINT_VERSION {
            return bad(format!("unsupported version {version}, expected {CHECKPOINT_VERSION}"));
        }
        let meta_len = r.u32()? as usize;
        let metadata = std::str::from_utf8(r.take(meta_len)?)
            .map_err(|_| AutodiffError::Checkpoint("metadata is not UTF-8".into()))?
            .to_owned();
        let count = r.u32()? as usize;
        // each tensor header needs at least 5 bytes.
        if count > r.remaining() / 5 {
            return bad(format!("tensor count {count} exceeds the file size"));
        }
        let mut tensors = Vec::with_capacity(count);
        for _ in 0..count {
            let name_len = r.u16()? as usize;
            let name = std::str::from_utf8(r.take(name_len)?)
                .map_err(|_| AutodiffError::Checkpoint("tensor name is not UTF-8".into()))?
                .to_owned();
            let trainable = match r.u8()? {
                0 => false,
                1 => true,
                k => return bad(format!("tensor {name:?}: bad kind byte {k}")),
            };
            let width = r.u8()?;
            if width != T::WIDTH {
                return bad(format!("tensor {name:?}: element width {width}, expected {}", T::WIDTH));
            }
            let ndim = r.u8()?;
            if ndim > MAX_NDIM {
                return bad(format!("tensor {name:?}: {ndim} dimensions"));
            }
            let mut shape = Vec::with_capacity(ndim as usize);
            let mut numel = 1usize;
            for _ in 0..ndim {
                let d = r.u32()? as usize;
                numel = numel
                    .checked_mul(d)
                    .ok_or_else(|| AutodiffError::Checkpoint(format!("tensor {name:?}: size overflows")))?;
                shape.push(d);
            }
            let nbytes = numel
                .checked_mul(width as usize)
                .filter(|&b| b <= r.remaining())
                .ok_or_else(|| AutodiffError::Checkpoint(format!("tensor {name:?}: data truncated")))?;
            let data = r.take(nbytes)?.chunks_exact(width as usize).map(T::read_le).collect();
            tensors.push(NamedTensor { name, trainable, tensor: Tensor::new(shape, data)? });
        }
        if r.remaining() != 0 {
            return bad(format!("{} trailing bytes", r.remaining()));
        }
        Ok(Self { metadata, tensors })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.encode())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::decode(&std::fs::read(path)?)
    }
}
