//! Versioned binary parameter container.
//!
//! Layout, all integers little-endian `u32`, floats little-endian `f64`:
//!
//! ```text
//! "WDM1" | version | d_z | section count
//! per section: name len | name | array count
//! per array:   name len | name | rows | cols | rows·cols values, row-major
//! ```
//!
//! Arrays appear in parameter declaration order, so a load is a bit-exact
//! inverse of a save.

use std::path::Path;

use ndarray::Array2;
use thiserror::Error;

use crate::nn::ParamStore;

pub const MAGIC: &[u8; 4] = b"WDM1";
pub const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("not a checkpoint: bad magic bytes")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    Version(u32),
    #[error("checkpoint truncated")]
    Truncated,
    #[error("checkpoint has trailing bytes")]
    TrailingBytes,
    #[error("invalid utf-8 in checkpoint name")]
    BadName,
    #[error("missing section `{0}`")]
    MissingSection(String),
    #[error("section `{section}` does not match the model layout: {detail}")]
    Layout { section: String, detail: String },
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Section {
    pub name: String,
    pub arrays: Vec<(String, Array2<f64>)>,
}

impl Section {
    pub fn from_store(name: impl Into<String>, store: &ParamStore) -> Self {
        Self {
            name: name.into(),
            arrays: store
                .iter()
                .map(|p| (p.name.clone(), p.value.clone()))
                .collect(),
        }
    }

    /// Overwrites `store` with this section's arrays; names and shapes must
    /// match exactly.
    pub fn load_into(&self, store: &mut ParamStore) -> Result<(), CheckpointError> {
        let layout = |detail: String| CheckpointError::Layout {
            section: self.name.clone(),
            detail,
        };
        if self.arrays.len() != store.len() {
            return Err(layout(format!(
                "{} arrays, model has {}",
                self.arrays.len(),
                store.len()
            )));
        }
        for ((name, value), param) in self.arrays.iter().zip(store.iter()) {
            if name != &param.name || value.dim() != param.value.dim() {
                return Err(layout(format!(
                    "`{name}` {:?} vs `{}` {:?}",
                    value.dim(),
                    param.name,
                    param.value.dim()
                )));
            }
        }
        for ((_, value), param) in self.arrays.iter().zip(store.iter_mut()) {
            param.value.assign(value);
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub latent_dim: u32,
    pub sections: Vec<Section>,
}

impl Checkpoint {
    pub fn section(&self, name: &str) -> Result<&Section, CheckpointError> {
        self.sections
            .iter()
            .find(|s| s.name == name)
            .ok_or_else(|| CheckpointError::MissingSection(name.to_string()))
    }

    pub fn has_section(&self, name: &str) -> bool {
        self.sections.iter().any(|s| s.name == name)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        put_u32(&mut out, VERSION);
        put_u32(&mut out, self.latent_dim);
        put_u32(&mut out, self.sections.len() as u32);
        for s in &self.sections {
            put_str(&mut out, &s.name);
            put_u32(&mut out, s.arrays.len() as u32);
            for (name, a) in &s.arrays {
                put_str(&mut out, name);
                put_u32(&mut out, a.nrows() as u32);
                put_u32(&mut out, a.ncols() as u32);
                for v in a.iter() {
                    out.extend_from_slice(&v.to_le_bytes());
                }
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CheckpointError> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(CheckpointError::BadMagic);
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(CheckpointError::Version(version));
        }
        let latent_dim = r.u32()?;
        let n_sections = r.u32()?;
        let mut sections = Vec::new();
        for _ in 0..n_sections {
            let name = r.string()?;
            let n_arrays = r.u32()?;
            let mut arrays = Vec::new();
            for _ in 0..n_arrays {
                let array_name = r.string()?;
                let rows = r.u32()? as usize;
                let cols = r.u32()? as usize;
                let n = rows.checked_mul(cols).ok_or(CheckpointError::Truncated)?;
                let raw = r.take(n.checked_mul(8).ok_or(CheckpointError::Truncated)?)?;
                let values = raw
                    .chunks_exact(8)
                    .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
                    .collect();
                let a = Array2::from_shape_vec((rows, cols), values).expect("rows·cols values");
                arrays.push((array_name, a));
            }
            sections.push(Section { name, arrays });
        }
        if r.pos != bytes.len() {
            return Err(CheckpointError::TrailingBytes);
        }
        Ok(Self {
            latent_dim,
            sections,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), CheckpointError> {
        std::fs::write(path, self.to_bytes()).map_err(|source| CheckpointError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self, CheckpointError> {
        let bytes = std::fs::read(path).map_err(|source| CheckpointError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_bytes(&bytes)
    }
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    put_u32(out, s.len() as u32);
    out.extend_from_slice(s.as_bytes());
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CheckpointError> {
        let end = self.pos.checked_add(n).ok_or(CheckpointError::Truncated)?;
        let s = self.bytes.get(self.pos..end).ok_or(CheckpointError::Truncated)?;
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn string(&mut self) -> Result<String, CheckpointError> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| CheckpointError::BadName)
    }
}
