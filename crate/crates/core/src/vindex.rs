//! Exact cosine top-k retrieval over an in-memory embedding bank.
//!
//! Vectors live in one contiguous `f32` buffer and every query is a full
//! scan. Results are ordered by score descending, then id ascending.
//!
//! # Snapshot format
//!
//! All integers little-endian:
//!
//! ```text
//! magic    b"KW4S"
//! version  u16
//! dim      u32
//! count    u64
//! count × { id_len u32, id utf-8 bytes, kind u8, dim × f32 }
//! crc32    u32   (IEEE CRC-32 of every preceding byte)
//! ```

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashSet};
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;
use std::sync::{Arc, RwLock};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedder::EmbeddingVector;

pub const SNAPSHOT_MAGIC: &[u8; 4] = b"KW4S";
pub const SNAPSHOT_VERSION: u16 = 1;
/// Default minimum cosine for an answer passage.
pub const DEFAULT_PASSAGE_THRESHOLD: f64 = 0.30;
/// Default minimum cosine for a related exam question.
pub const DEFAULT_QUESTION_THRESHOLD: f64 = 0.30;

#[derive(Debug, Error)]
pub enum IndexError {
    #[error("duplicate id {0}")]
    DuplicateId(String),
    #[error("dimension mismatch: index has {expected}, got {actual}")]
    DimMismatch { expected: usize, actual: usize },
    #[error("threshold must be a finite number, got {0}")]
    InvalidThreshold(f64),
    #[error("corrupt snapshot {path}: {reason}")]
    Corrupt { path: String, reason: String },
    #[error("snapshot I/O on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntryKind {
    Passage,
    ExamQuestion,
}

impl EntryKind {
    fn to_byte(self) -> u8 {
        match self {
            EntryKind::Passage => 0,
            EntryKind::ExamQuestion => 1,
        }
    }

    fn from_byte(b: u8) -> Option<Self> {
        match b {
            0 => Some(EntryKind::Passage),
            1 => Some(EntryKind::ExamQuestion),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IndexEntry {
    pub id: String,
    pub vector: EmbeddingVector,
    pub kind: EntryKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredHit {
    pub id: String,
    pub score: f64,
}

/// Streaming constructor; rejects duplicate ids and dimension mismatches.
#[derive(Debug)]
pub struct IndexBuilder {
    dim: usize,
    seen: HashSet<String>,
    ids: Vec<String>,
    kinds: Vec<EntryKind>,
    norms: Vec<f64>,
    data: Vec<f32>,
}

impl IndexBuilder {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            seen: HashSet::new(),
            ids: Vec::new(),
            kinds: Vec::new(),
            norms: Vec::new(),
            data: Vec::new(),
        }
    }

    pub fn with_capacity(dim: usize, capacity: usize) -> Self {
        let mut b = Self::new(dim);
        b.ids.reserve(capacity);
        b.kinds.reserve(capacity);
        b.norms.reserve(capacity);
        b.data.reserve(capacity * dim);
        b
    }

    pub fn push(&mut self, entry: IndexEntry) -> Result<(), IndexError> {
        self.push_parts(entry.id, entry.vector.as_slice(), entry.kind)
    }

    fn push_parts(
        &mut self,
        id: String,
        vector: &[f32],
        kind: EntryKind,
    ) -> Result<(), IndexError> {
        if vector.len() != self.dim {
            return Err(IndexError::DimMismatch {
                expected: self.dim,
                actual: vector.len(),
            });
        }
        if !self.seen.insert(id.clone()) {
            return Err(IndexError::DuplicateId(id));
        }
        self.norms.push(
            vector
                .iter()
                .map(|&v| f64::from(v) * f64::from(v))
                .sum::<f64>()
                .sqrt(),
        );
        self.data.extend_from_slice(vector);
        self.ids.push(id);
        self.kinds.push(kind);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn finish(self) -> VectorIndex {
        VectorIndex {
            dim: self.dim,
            ids: self.ids,
            kinds: self.kinds,
            norms: self.norms,
            data: self.data,
        }
    }
}

/// Immutable embedding bank answering exact cosine top-k queries.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorIndex {
    dim: usize,
    ids: Vec<String>,
    kinds: Vec<EntryKind>,
    norms: Vec<f64>,
    data: Vec<f32>,
}

/// Heap element ordered so the *worst* hit is at the top.
struct Candidate<'a> {
    score: f64,
    id: &'a str,
}

impl Candidate<'_> {
    /// `Less` means `self` ranks ahead of `other`.
    fn rank_cmp(&self, other: &Self) -> Ordering {
        other
            .score
            .total_cmp(&self.score)
            .then_with(|| self.id.cmp(other.id))
    }
}

impl PartialEq for Candidate<'_> {
    fn eq(&self, other: &Self) -> bool {
        self.rank_cmp(other) == Ordering::Equal
    }
}
impl Eq for Candidate<'_> {}
impl PartialOrd for Candidate<'_> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Candidate<'_> {
    fn cmp(&self, other: &Self) -> Ordering {
        self.rank_cmp(other)
    }
}

impl VectorIndex {
    pub fn build(
        dim: usize,
        entries: impl IntoIterator<Item = IndexEntry>,
    ) -> Result<Self, IndexError> {
        let mut builder = IndexBuilder::new(dim);
        for e in entries {
            builder.push(e)?;
        }
        Ok(builder.finish())
    }

    pub fn empty(dim: usize) -> Self {
        IndexBuilder::new(dim).finish()
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

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.ids.iter().map(String::as_str)
    }

    pub fn kind(&self, position: usize) -> Option<EntryKind> {
        self.kinds.get(position).copied()
    }

    pub fn vector(&self, position: usize) -> Option<&[f32]> {
        (position < self.len()).then(|| &self.data[position * self.dim..(position + 1) * self.dim])
    }

    /// The `k` entries with the highest cosine to `query` whose score is at
    /// least `threshold`. Zero-norm queries and entries never match.
    pub fn top_k(
        &self,
        query: &EmbeddingVector,
        k: usize,
        threshold: f64,
    ) -> Result<Vec<ScoredHit>, IndexError> {
        if query.dim() != self.dim {
            return Err(IndexError::DimMismatch {
                expected: self.dim,
                actual: query.dim(),
            });
        }
        if !threshold.is_finite() {
            return Err(IndexError::InvalidThreshold(threshold));
        }
        let q = query.as_slice();
        let q_norm = query.norm();
        if k == 0 || q_norm == 0.0 || self.is_empty() {
            return Ok(Vec::new());
        }

        let mut heap: BinaryHeap<Candidate<'_>> = BinaryHeap::with_capacity(k + 1);
        for (i, row) in self.data.chunks_exact(self.dim).enumerate() {
            let norm = self.norms[i];
            if norm == 0.0 {
                continue;
            }
            let dot: f64 = row
                .iter()
                .zip(q)
                .map(|(&a, &b)| f64::from(a) * f64::from(b))
                .sum();
            let score = (dot / (q_norm * norm)).clamp(-1.0, 1.0);
            if score < threshold {
                continue;
            }
            let cand = Candidate {
                score,
                id: &self.ids[i],
            };
            if heap.len() < k {
                heap.push(cand);
            } else if let Some(worst) = heap.peek() {
                if cand < *worst {
                    heap.pop();
                    heap.push(cand);
                }
            }
        }
        Ok(heap
            .into_sorted_vec()
            .into_iter()
            .map(|c| ScoredHit {
                id: c.id.to_string(),
                score: c.score,
            })
            .collect())
    }

    /// Write a snapshot atomically (temp file, then rename).
    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), IndexError> {
        let path = path.as_ref();
        let io = |source| IndexError::Io {
            path: path.display().to_string(),
            source,
        };
        let tmp = path.with_extension("tmp");
        {
            let file = File::create(&tmp).map_err(io)?;
            let mut w = CrcWriter {
                inner: BufWriter::new(file),
                hasher: crc32fast::Hasher::new(),
            };
            self.write_body(&mut w).map_err(io)?;
            let crc = w.hasher.finalize();
            w.inner.write_all(&crc.to_le_bytes()).map_err(io)?;
            w.inner.flush().map_err(io)?;
            w.inner.get_ref().sync_all().map_err(io)?;
        }
        fs::rename(&tmp, path).map_err(io)
    }

    fn write_body(&self, w: &mut impl Write) -> std::io::Result<()> {
        w.write_all(SNAPSHOT_MAGIC)?;
        w.write_all(&SNAPSHOT_VERSION.to_le_bytes())?;
        w.write_all(&(self.dim as u32).to_le_bytes())?;
        w.write_all(&(self.len() as u64).to_le_bytes())?;
        for (i, id) in self.ids.iter().enumerate() {
            w.write_all(&(id.len() as u32).to_le_bytes())?;
            w.write_all(id.as_bytes())?;
            w.write_all(&[self.kinds[i].to_byte()])?;
            for v in &self.data[i * self.dim..(i + 1) * self.dim] {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, IndexError> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|source| IndexError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_snapshot_bytes(&bytes).map_err(|reason| IndexError::Corrupt {
            path: path.display().to_string(),
            reason,
        })
    }

    fn from_snapshot_bytes(bytes: &[u8]) -> Result<Self, String> {
        const HEADER: usize = 4 + 2 + 4 + 8;
        if bytes.len() < HEADER + 4 {
            return Err("corrupt snapshot: truncated header".into());
        }
        if &bytes[..4] != SNAPSHOT_MAGIC {
            return Err("corrupt snapshot: bad magic".into());
        }
        let (payload, crc_bytes) = bytes.split_at(bytes.len() - 4);
        let stored = u32::from_le_bytes(crc_bytes.try_into().expect("4 bytes"));
        if crc32fast::hash(payload) != stored {
            return Err("corrupt snapshot: checksum mismatch".into());
        }

        let mut r = Reader {
            buf: payload,
            pos: 4,
        };
        let version = u16::from_le_bytes(r.take_array()?);
        if version != SNAPSHOT_VERSION {
            return Err(format!("unsupported snapshot version {version}"));
        }
        let dim = u32::from_le_bytes(r.take_array()?) as usize;
        let count = u64::from_le_bytes(r.take_array()?);
        let count = usize::try_from(count).map_err(|_| "corrupt snapshot: count overflow")?;
        let per_entry_min = 4 + 1 + 4 * dim;
        if count.saturating_mul(per_entry_min) > payload.len() {
            return Err("corrupt snapshot: count exceeds file size".into());
        }

        let mut builder = IndexBuilder::with_capacity(dim, count);
        let mut vector = Vec::with_capacity(dim);
        for _ in 0..count {
            let id_len = u32::from_le_bytes(r.take_array()?) as usize;
            let id = std::str::from_utf8(r.take(id_len)?)
                .map_err(|_| "corrupt snapshot: id is not UTF-8")?
                .to_string();
            let kind = EntryKind::from_byte(r.take_array::<1>()?[0])
                .ok_or("corrupt snapshot: unknown entry kind")?;
            vector.clear();
            for _ in 0..dim {
                vector.push(f32::from_le_bytes(r.take_array()?));
            }
            builder
                .push_parts(id, &vector, kind)
                .map_err(|e| format!("corrupt snapshot: {e}"))?;
        }
        if r.pos != payload.len() {
            return Err("corrupt snapshot: trailing bytes".into());
        }
        Ok(builder.finish())
    }
}

struct CrcWriter<W> {
    inner: W,
    hasher: crc32fast::Hasher,
}

impl<W: Write> Write for CrcWriter<W> {
    fn write(&mut self, buf: &[u8]) -> std::io::Result<usize> {
        let n = self.inner.write(buf)?;
        self.hasher.update(&buf[..n]);
        Ok(n)
    }

    fn flush(&mut self) -> std::io::Result<()> {
        self.inner.flush()
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], String> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or("corrupt snapshot: truncated")?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn take_array<const N: usize>(&mut self) -> Result<[u8; N], String> {
        Ok(self.take(N)?.try_into().expect("length checked"))
    }
}

/// Shared handle to the current index; a rebuild swaps in a new one while
/// in-flight queries keep the old `Arc`.
#[derive(Debug)]
pub struct IndexCell(RwLock<Arc<VectorIndex>>);

impl IndexCell {
    pub fn new(index: VectorIndex) -> Self {
        Self(RwLock::new(Arc::new(index)))
    }

    pub fn current(&self) -> Arc<VectorIndex> {
        Arc::clone(&self.0.read().unwrap_or_else(|e| e.into_inner()))
    }

    pub fn replace(&self, index: VectorIndex) {
        *self.0.write().unwrap_or_else(|e| e.into_inner()) = Arc::new(index);
    }
}
