//! Binary store of precomputed item embeddings.
//!
//! ```text
//! "TBEC"       4 bytes magic
//! version      u32 LE (currently 1)
//! count        u64 LE
//! dim          u32 LE
//! ids          count x u64 LE
//! rows         count x dim x f32 LE, in id-table order
//! ```

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Seek, SeekFrom, Write};
use std::path::Path;

use crate::error::{Error, Result};

pub const CACHE_MAGIC: &[u8; 4] = b"TBEC";
pub const CACHE_VERSION: u32 = 1;
const HEADER_LEN: u64 = 4 + 4 + 8 + 4;

/// In-memory id -> embedding map with insertion order preserved.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct EmbeddingCache {
    dim: usize,
    ids: Vec<u64>,
    rows: Vec<f32>,
    index: HashMap<u64, usize>,
}

impl EmbeddingCache {
    pub fn new(dim: usize) -> Self {
        Self { dim, ..Default::default() }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[u64] {
        &self.ids
    }

    /// Adds or replaces the embedding of `id`.
    pub fn insert(&mut self, id: u64, row: &[f32]) -> Result<()> {
        if row.len() != self.dim {
            return Err(Error::dim("EmbeddingCache::insert", (1, self.dim), (1, row.len())));
        }
        match self.index.get(&id) {
            Some(&k) => self.rows[k * self.dim..(k + 1) * self.dim].copy_from_slice(row),
            None => {
                self.index.insert(id, self.ids.len());
                self.ids.push(id);
                self.rows.extend_from_slice(row);
            }
        }
        Ok(())
    }

    pub fn get(&self, id: u64) -> Result<&[f32]> {
        let k = *self.index.get(&id).ok_or(Error::MissingId(id))?;
        Ok(&self.rows[k * self.dim..(k + 1) * self.dim])
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(CACHE_MAGIC)?;
        w.write_all(&CACHE_VERSION.to_le_bytes())?;
        w.write_all(&(self.ids.len() as u64).to_le_bytes())?;
        w.write_all(&(self.dim as u32).to_le_bytes())?;
        for id in &self.ids {
            w.write_all(&id.to_le_bytes())?;
        }
        for v in &self.rows {
            w.write_all(&v.to_le_bytes())?;
        }
        w.flush()?;
        Ok(())
    }

    /// Loads a whole cache file.
    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let mut reader = CacheReader::open(path)?;
        let ids = reader.ids.clone();
        let mut cache = EmbeddingCache::new(reader.dim);
        let rows = reader.read_rows(&ids)?;
        for (id, row) in ids.iter().zip(&rows) {
            cache.insert(*id, row)?;
        }
        Ok(cache)
    }
}

/// Random-access reader that keeps only the id table in memory.
#[derive(Debug)]
pub struct CacheReader {
    file: BufReader<File>,
    dim: usize,
    ids: Vec<u64>,
    index: HashMap<u64, usize>,
    rows_offset: u64,
}

impl CacheReader {
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let file = File::open(path)?;
        let file_len = file.metadata()?.len();
        let mut file = BufReader::new(file);
        let mut header = [0u8; HEADER_LEN as usize];
        file.read_exact(&mut header)
            .map_err(|_| Error::Format("embedding cache shorter than its header".into()))?;
        if &header[0..4] != CACHE_MAGIC {
            return Err(Error::Format("not an embedding cache: bad magic bytes".into()));
        }
        let version = u32::from_le_bytes(header[4..8].try_into().expect("4 bytes"));
        if version != CACHE_VERSION {
            return Err(Error::Format(format!(
                "unsupported embedding cache version {version}, expected {CACHE_VERSION}"
            )));
        }
        let count = u64::from_le_bytes(header[8..16].try_into().expect("8 bytes"));
        let dim = u32::from_le_bytes(header[16..20].try_into().expect("4 bytes")) as usize;
        let rows_offset = HEADER_LEN + 8 * count;
        let expected = rows_offset + count * dim as u64 * 4;
        if file_len != expected {
            return Err(Error::Format(format!(
                "embedding cache is {file_len} bytes, header implies {expected}"
            )));
        }
        let mut raw = vec![0u8; 8 * count as usize];
        file.read_exact(&mut raw)?;
        let ids: Vec<u64> = raw.chunks_exact(8).map(|b| u64::from_le_bytes(b.try_into().expect("8 bytes"))).collect();
        let index = ids.iter().enumerate().map(|(k, &id)| (id, k)).collect();
        Ok(Self { file, dim, ids, index, rows_offset })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn ids(&self) -> &[u64] {
        &self.ids
    }

    /// Rows for `ids`, in request order. Any unknown id fails the whole read.
    pub fn read_rows(&mut self, ids: &[u64]) -> Result<Vec<Vec<f32>>> {
        let slots: Vec<usize> =
            ids.iter().map(|id| self.index.get(id).copied().ok_or(Error::MissingId(*id))).collect::<Result<_>>()?;
        let mut buf = vec![0u8; 4 * self.dim];
        let mut out = Vec::with_capacity(ids.len());
        for k in slots {
            self.file.seek(SeekFrom::Start(self.rows_offset + (k * self.dim * 4) as u64))?;
            self.file.read_exact(&mut buf)?;
            out.push(buf.chunks_exact(4).map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes"))).collect());
        }
        Ok(out)
    }
}

/// Reads the embeddings of `ids` from the cache file at `path`.
pub fn read_cache(path: impl AsRef<Path>, ids: &[u64]) -> Result<Vec<Vec<f32>>> {
    CacheReader::open(path)?.read_rows(ids)
}

pub fn write_cache(path: impl AsRef<Path>, cache: &EmbeddingCache) -> Result<()> {
    cache.write(path)
}
