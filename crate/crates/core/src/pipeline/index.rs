//! Exhaustive dot-product descriptor index and the DIDX file format.
//!
//! ```text
//! "DIDX" | version u32 | count u32 | K' u32
//!        | count × (id length u32 | utf-8 id | K' × f32)
//! ```

use std::cmp::Ordering;
use std::collections::HashSet;
use std::io::{Read, Write};

use crate::encoder::Descriptor;
use crate::error::{Error, Result};
use crate::scalar::Real;

pub const DIDX_MAGIC: &[u8; 4] = b"DIDX";
pub const DIDX_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct SearchHit<T> {
    pub id: String,
    pub similarity: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DescriptorIndex<T> {
    dim: usize,
    entries: Vec<(String, Descriptor<T>)>,
    ids: HashSet<String>,
}

impl<T: Real> DescriptorIndex<T> {
    pub fn new(dim: usize) -> Self {
        DescriptorIndex {
            dim,
            entries: Vec::new(),
            ids: HashSet::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[(String, Descriptor<T>)] {
        &self.entries
    }

    pub fn get(&self, id: &str) -> Option<&Descriptor<T>> {
        self.entries.iter().find(|(i, _)| i == id).map(|(_, d)| d)
    }

    pub fn insert(&mut self, id: impl Into<String>, descriptor: Descriptor<T>) -> Result<()> {
        let id = id.into();
        if descriptor.dim() != self.dim {
            return Err(Error::dims(self.dim, descriptor.dim()));
        }
        if !self.ids.insert(id.clone()) {
            return Err(Error::InvalidArgument(format!("duplicate id `{id}`")));
        }
        self.entries.push((id, descriptor));
        Ok(())
    }

    /// Every entry ranked by descending dot product, ties by ascending id.
    pub fn rank_all(&self, query: &Descriptor<T>) -> Result<Vec<SearchHit<T>>> {
        if self.entries.is_empty() {
            return Err(Error::InvalidArgument("search on an empty index".into()));
        }
        if query.dim() != self.dim {
            return Err(Error::dims(self.dim, query.dim()));
        }
        let mut hits: Vec<SearchHit<T>> = self
            .entries
            .iter()
            .map(|(id, d)| SearchHit {
                id: id.clone(),
                similarity: d.dot(query),
            })
            .collect();
        hits.sort_by(|a, b| {
            b.similarity
                .partial_cmp(&a.similarity)
                .unwrap_or(Ordering::Equal)
                .then_with(|| a.id.cmp(&b.id))
        });
        Ok(hits)
    }

    /// Top `k` entries by dot product.
    pub fn search(&self, query: &Descriptor<T>, k: usize) -> Result<Vec<SearchHit<T>>> {
        if k == 0 {
            return Err(Error::InvalidArgument("k must be >= 1".into()));
        }
        let mut hits = self.rank_all(query)?;
        hits.truncate(k);
        Ok(hits)
    }

    pub fn write<W: Write>(&self, mut sink: W) -> Result<()> {
        let mut buf = Vec::new();
        buf.extend_from_slice(DIDX_MAGIC);
        for v in [DIDX_VERSION, self.entries.len() as u32, self.dim as u32] {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        for (id, d) in &self.entries {
            buf.extend_from_slice(&(id.len() as u32).to_le_bytes());
            buf.extend_from_slice(id.as_bytes());
            for v in d.as_slice() {
                buf.extend_from_slice(&v.to_f32().unwrap_or(f32::NAN).to_le_bytes());
            }
        }
        sink.write_all(&buf)?;
        Ok(())
    }

    pub fn read<R: Read>(mut source: R) -> Result<Self> {
        let mut bytes = Vec::new();
        source.read_to_end(&mut bytes)?;
        if bytes.len() < 16 || &bytes[..4] != DIDX_MAGIC {
            return Err(Error::Format("missing DIDX magic".into()));
        }
        let mut pos = 4;
        let word = |pos: &mut usize| -> Result<usize> {
            let end = *pos + 4;
            let b = bytes.get(*pos..end).ok_or(Error::Truncated {
                expected: end,
                found: bytes.len(),
            })?;
            *pos = end;
            Ok(u32::from_le_bytes(b.try_into().unwrap()) as usize)
        };
        let version = word(&mut pos)?;
        if version != DIDX_VERSION as usize {
            return Err(Error::Format(format!("unsupported DIDX version {version}")));
        }
        let count = word(&mut pos)?;
        let dim = word(&mut pos)?;
        let mut index = DescriptorIndex::new(dim);
        for _ in 0..count {
            let len = word(&mut pos)?;
            let end = pos + len + 4 * dim;
            if bytes.len() < end {
                return Err(Error::Truncated {
                    expected: end,
                    found: bytes.len(),
                });
            }
            let id = std::str::from_utf8(&bytes[pos..pos + len])
                .map_err(|e| Error::Format(format!("bad id: {e}")))?
                .to_string();
            let values = bytes[pos + len..end]
                .chunks_exact(4)
                .map(|c| T::from(f32::from_le_bytes(c.try_into().unwrap())).unwrap_or_else(T::nan))
                .collect();
            pos = end;
            index.insert(id, Descriptor::from_raw(values))?;
        }
        if pos != bytes.len() {
            return Err(Error::dims(pos, bytes.len()));
        }
        Ok(index)
    }
}
