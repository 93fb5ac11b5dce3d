//! `GDC1` checkpoints: named tensors with float32 payloads.
//!
//! Layout (little endian): magic `GDC1`, `u32` entry count, then per entry
//! `u32` name length, UTF-8 name, `u32` rank, `u32` extents, `f32` values.

use std::collections::BTreeMap;
use std::path::Path;

use super::Module;
use crate::error::{Error, Result};
use crate::tensor::Grid;

pub const MAGIC: &[u8; 4] = b"GDC1";

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Checkpoint {
    entries: Vec<(String, Grid)>,
}

fn format_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Format(msg.into()))
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return format_err(format!("checkpoint truncated at byte {}", self.pos));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<usize> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as usize)
    }
}

impl Checkpoint {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends an entry; names must be unique.
    pub fn insert(&mut self, name: impl Into<String>, value: Grid) -> Result<()> {
        let name = name.into();
        if self.get(&name).is_some() {
            return Err(Error::InvalidArgument(format!("duplicate checkpoint entry {name}")));
        }
        self.entries.push((name, value));
        Ok(())
    }

    pub fn insert_scalar(&mut self, name: impl Into<String>, v: f64) -> Result<()> {
        self.insert(name, Grid::from_parts(vec![1], vec![v]))
    }

    pub fn get(&self, name: &str) -> Option<&Grid> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, g)| g)
    }

    pub fn require(&self, name: &str) -> Result<&Grid> {
        self.get(name).ok_or_else(|| Error::Format(format!("checkpoint lacks entry {name}")))
    }

    pub fn scalar(&self, name: &str) -> Result<f64> {
        let g = self.require(name)?;
        if g.len() != 1 {
            return format_err(format!("entry {name} is not a scalar"));
        }
        Ok(g.data()[0])
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(n, _)| n.as_str())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Stores every parameter and running statistic of `module` under `prefix.`.
    pub fn insert_module(&mut self, prefix: &str, module: &dyn Module) -> Result<()> {
        for p in module.params() {
            self.insert(format!("{prefix}.{}", p.name), p.value.clone())?;
        }
        Ok(())
    }

    /// Loads values saved by [`Self::insert_module`]; any missing name or
    /// shape mismatch is rejected before `module` is modified.
    pub fn load_module(&self, prefix: &str, module: &mut dyn Module) -> Result<()> {
        let mut staged = BTreeMap::new();
        for p in module.params() {
            let key = format!("{prefix}.{}", p.name);
            let g = self.require(&key)?;
            if g.shape() != p.value.shape() {
                return format_err(format!("{key}: checkpoint shape {:?}, model shape {:?}", g.shape(), p.value.shape()));
            }
            staged.insert(p.name.clone(), g.clone());
        }
        for p in module.params_mut() {
            p.value = staged.remove(&p.name).expect("staged above");
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(self.entries.len() as u32).to_le_bytes());
        for (name, g) in &self.entries {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&(g.rank() as u32).to_le_bytes());
            for &d in g.shape() {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
            for &v in g.data() {
                out.extend_from_slice(&(v as f32).to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return format_err("not a GDC1 checkpoint");
        }
        let count = r.u32()?;
        let mut ck = Checkpoint::new();
        for _ in 0..count {
            let len = r.u32()?;
            let name = std::str::from_utf8(r.take(len)?)
                .map_err(|_| Error::Format("entry name is not UTF-8".into()))?
                .to_string();
            let rank = r.u32()?;
            let shape = (0..rank).map(|_| r.u32()).collect::<Result<Vec<_>>>()?;
            let n: usize = shape.iter().product();
            let payload = r.take(n.checked_mul(4).ok_or_else(|| Error::Format("extent overflow".into()))?)?;
            let data = payload
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
                .collect();
            ck.insert(name, Grid::new(&shape, data).map_err(|e| Error::Format(e.to_string()))?)
                .map_err(|e| Error::Format(e.to_string()))?;
        }
        if r.pos != bytes.len() {
            return format_err("trailing bytes after last checkpoint entry");
        }
        Ok(ck)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}
