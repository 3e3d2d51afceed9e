//! Binary graph cache.
//!
//! Layout (little-endian): `"CAYG"`, version `u16`, `n: u64`, `degree: u16`,
//! `generators: u16`, `encoding_len: u32`, the element table (`n · encoding_len`
//! bytes), `n + 1` CSR offsets (`u64`), then `n · degree` neighbor/label pairs
//! (`u64`, `u16`), and a CRC32 of everything before it.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use super::{CayleyError, CayleyGraph};
use crate::algebra::{Group, GroupHandle};

const MAGIC: &[u8; 4] = b"CAYG";
const VERSION: u16 = 1;

pub fn encode_graph(g: &CayleyGraph) -> Vec<u8> {
    let mut out = Vec::with_capacity(24 + g.encodings.len() + 8 * g.offsets.len() + 10 * g.targets.len() + 4);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(g.n as u64).to_le_bytes());
    out.extend_from_slice(&(g.degree as u16).to_le_bytes());
    out.extend_from_slice(&(g.generator_count as u16).to_le_bytes());
    out.extend_from_slice(&(g.encoding_len as u32).to_le_bytes());
    out.extend_from_slice(&g.encodings);
    for &o in &g.offsets {
        out.extend_from_slice(&o.to_le_bytes());
    }
    for (&t, &l) in g.targets.iter().zip(&g.labels) {
        out.extend_from_slice(&(t as u64).to_le_bytes());
        out.extend_from_slice(&l.to_le_bytes());
    }
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, k: usize) -> Result<&'a [u8], CayleyError> {
        let end = self.pos.checked_add(k).filter(|&e| e <= self.buf.len()).ok_or_else(|| CayleyError::Cache("truncated".into()))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }
    fn u16(&mut self) -> Result<u16, CayleyError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }
    fn u32(&mut self) -> Result<u32, CayleyError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64, CayleyError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn decode_graph(bytes: &[u8]) -> Result<CayleyGraph, CayleyError> {
    if bytes.len() < 4 + 2 + 8 + 2 + 2 + 4 + 4 {
        return Err(CayleyError::Cache("truncated header".into()));
    }
    let (body, tail) = bytes.split_at(bytes.len() - 4);
    if crc32fast::hash(body) != u32::from_le_bytes(tail.try_into().unwrap()) {
        return Err(CayleyError::Cache("checksum mismatch".into()));
    }
    let mut r = Reader { buf: body, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(CayleyError::Cache("bad magic".into()));
    }
    let version = r.u16()?;
    if version != VERSION {
        return Err(CayleyError::Cache(format!("unsupported version {version}")));
    }
    let n = r.u64()? as usize;
    let degree = r.u16()? as usize;
    let generator_count = r.u16()? as usize;
    let encoding_len = r.u32()? as usize;
    let table = n.checked_mul(encoding_len).ok_or_else(|| CayleyError::Cache("size overflow".into()))?;
    let encodings = r.take(table)?.to_vec();
    let mut offsets = Vec::with_capacity(n + 1);
    for _ in 0..=n {
        offsets.push(r.u64()?);
    }
    let m = n * degree;
    if offsets.first() != Some(&0) || offsets.last() != Some(&(m as u64)) || offsets.windows(2).any(|w| w[1] - w[0] != degree as u64) {
        return Err(CayleyError::Cache("inconsistent offsets".into()));
    }
    let mut targets = Vec::with_capacity(m);
    let mut labels = Vec::with_capacity(m);
    for _ in 0..m {
        let t = r.u64()?;
        if t >= n as u64 {
            return Err(CayleyError::Cache(format!("neighbor {t} out of range")));
        }
        targets.push(t as u32);
        labels.push(r.u16()?);
    }
    if r.pos != body.len() {
        return Err(CayleyError::Cache("trailing bytes".into()));
    }
    Ok(CayleyGraph { n, degree, generator_count, encoding_len, encodings, offsets, targets, labels, cayley: encoding_len > 0 })
}

pub fn save_graph(g: &CayleyGraph, path: &Path) -> Result<(), CayleyError> {
    let tmp = path.with_extension("tmp");
    let mut f = fs::File::create(&tmp)?;
    f.write_all(&encode_graph(g))?;
    f.sync_all()?;
    fs::rename(tmp, path)?;
    Ok(())
}

pub fn load_graph(path: &Path) -> Result<CayleyGraph, CayleyError> {
    decode_graph(&fs::read(path)?)
}

/// Hex SHA-256 of the carrier description, generator list and budget.
pub fn cache_key<G: Group>(handle: &GroupHandle<G>, budget: usize) -> String {
    let mut h = Sha256::new();
    h.update(handle.describe().as_bytes());
    h.update(b"\0");
    h.update((budget as u64).to_le_bytes());
    hex::encode(h.finalize())
}

/// A directory of cached graphs, one `<key>.cayg` file each.
#[derive(Clone, Debug)]
pub struct GraphCache {
    dir: PathBuf,
}

impl GraphCache {
    pub fn new(dir: impl Into<PathBuf>) -> Result<Self, CayleyError> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        Ok(GraphCache { dir })
    }

    pub fn path_for(&self, key: &str) -> PathBuf {
        self.dir.join(format!("{key}.cayg"))
    }

    pub fn get(&self, key: &str) -> Result<Option<CayleyGraph>, CayleyError> {
        let p = self.path_for(key);
        if !p.exists() {
            return Ok(None);
        }
        load_graph(&p).map(Some)
    }

    pub fn put(&self, key: &str, g: &CayleyGraph) -> Result<PathBuf, CayleyError> {
        let p = self.path_for(key);
        save_graph(g, &p)?;
        Ok(p)
    }
}
