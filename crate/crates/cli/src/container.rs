//! The shared binary container used for coefficients, instance sets, and
//! model weights.
//!
//! Layout: magic `MILO`, format version (u32 LE), length-prefixed UTF-8
//! JSON metadata (u32 LE length), then named arrays. Each array is: name
//! length (u16 LE), name bytes, rank (u8), extents (u32 LE each), payload
//! (f64 LE, row-major). The extents product times eight must equal the
//! payload length, and readers reject unknown magic or versions.

use anyhow::{bail, Context, Result};
use std::io::{Read, Write};
use std::path::Path;

pub const MAGIC: [u8; 4] = *b"MILO";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct NamedArray {
    pub name: String,
    pub extents: Vec<u32>,
    pub data: Vec<f64>,
}

impl NamedArray {
    pub fn rank1(name: &str, data: Vec<f64>) -> Self {
        Self {
            name: name.to_string(),
            extents: vec![data.len() as u32],
            data,
        }
    }

    pub fn rank2(name: &str, rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(rows * cols, data.len(), "extent/data mismatch for {name}");
        Self {
            name: name.to_string(),
            extents: vec![rows as u32, cols as u32],
            data,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Container {
    pub metadata: serde_json::Value,
    pub arrays: Vec<NamedArray>,
}

impl Container {
    pub fn new(metadata: serde_json::Value) -> Self {
        Self {
            metadata,
            arrays: Vec::new(),
        }
    }

    pub fn push(&mut self, array: NamedArray) {
        self.arrays.push(array);
    }

    pub fn array(&self, name: &str) -> Result<&NamedArray> {
        self.arrays
            .iter()
            .find(|a| a.name == name)
            .with_context(|| format!("container has no array named {name:?}"))
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        out.extend_from_slice(&MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        // serde_json maps are sorted, so the metadata bytes are canonical
        // and rewrites are bit-identical.
        let meta = serde_json::to_vec(&self.metadata)?;
        out.extend_from_slice(&(meta.len() as u32).to_le_bytes());
        out.extend_from_slice(&meta);
        for a in &self.arrays {
            let name = a.name.as_bytes();
            if name.len() > u16::MAX as usize {
                bail!("array name too long: {} bytes", name.len());
            }
            let count: u64 = a.extents.iter().map(|&e| e as u64).product();
            if count != a.data.len() as u64 {
                bail!(
                    "array {:?}: extents {:?} do not match {} values",
                    a.name,
                    a.extents,
                    a.data.len()
                );
            }
            out.extend_from_slice(&(name.len() as u16).to_le_bytes());
            out.extend_from_slice(name);
            out.push(a.extents.len() as u8);
            for &e in &a.extents {
                out.extend_from_slice(&e.to_le_bytes());
            }
            for &v in &a.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = bytes;
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic).context("truncated header")?;
        if magic != MAGIC {
            bail!("bad magic {:?}; not a MILO container", magic);
        }
        let version = read_u32(&mut r)?;
        if version != VERSION {
            bail!("unsupported container version {version} (expected {VERSION})");
        }
        let meta_len = read_u32(&mut r)? as usize;
        let mut meta = vec![0u8; meta_len];
        r.read_exact(&mut meta).context("truncated metadata")?;
        let metadata =
            serde_json::from_slice(&meta).context("metadata is not valid JSON")?;
        let mut arrays = Vec::new();
        while !r.is_empty() {
            let mut nl = [0u8; 2];
            r.read_exact(&mut nl).context("truncated array name length")?;
            let name_len = u16::from_le_bytes(nl) as usize;
            let mut name = vec![0u8; name_len];
            r.read_exact(&mut name).context("truncated array name")?;
            let name = String::from_utf8(name).context("array name is not UTF-8")?;
            let mut rank = [0u8; 1];
            r.read_exact(&mut rank).context("truncated array rank")?;
            let mut extents = Vec::with_capacity(rank[0] as usize);
            for _ in 0..rank[0] {
                extents.push(read_u32(&mut r)?);
            }
            let count: u64 = extents.iter().map(|&e| e as u64).product();
            let mut data = Vec::with_capacity(count as usize);
            for _ in 0..count {
                let mut b = [0u8; 8];
                r.read_exact(&mut b)
                    .with_context(|| format!("truncated payload for array {name:?}"))?;
                data.push(f64::from_le_bytes(b));
            }
            arrays.push(NamedArray {
                name,
                extents,
                data,
            });
        }
        Ok(Self { metadata, arrays })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let bytes = self.to_bytes()?;
        let mut f = std::fs::File::create(path)
            .with_context(|| format!("cannot create {}", path.display()))?;
        f.write_all(&bytes)?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path)
            .with_context(|| format!("cannot read {}", path.display()))?;
        Self::from_bytes(&bytes)
    }
}

fn read_u32(r: &mut &[u8]) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b).context("truncated u32 field")?;
    Ok(u32::from_le_bytes(b))
}
