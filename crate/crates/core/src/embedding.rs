//! Per-document embedding tables and their on-disk formats.
//!
//! TDEB layout (all integers little-endian):
//!
//! ```text
//! 0..4    magic "TDEB"
//! 4..8    u32 version (1)
//! 8..12   u32 dim
//! 12..20  u64 record count
//! then per record: u16 id length, id bytes (UTF-8), dim x f32
//! ```
//!
//! The JSONL alternative starts with a header line
//! `{"encoder_id": ..., "dim": ...}` followed by one `{"id", "vector"}`
//! object per line.

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const TDEB_MAGIC: &[u8; 4] = b"TDEB";
pub const TDEB_VERSION: u32 = 1;
const HEADER_LEN: usize = 20;

#[derive(Debug, Error)]
#[error("{}: {kind}", path.display())]
pub struct EmbeddingError {
    pub path: PathBuf,
    pub kind: EmbeddingErrorKind,
}

#[derive(Debug, Error)]
pub enum EmbeddingErrorKind {
    #[error("{0}")]
    Io(#[from] std::io::Error),
    #[error("bad magic bytes, not a TDEB file")]
    BadMagic,
    #[error("unsupported TDEB version {0}")]
    UnsupportedVersion(u32),
    #[error("dimension must be at least 1")]
    ZeroDim,
    #[error("truncated at record {record}")]
    Truncated { record: u64 },
    #[error("{0} trailing bytes after the last record")]
    TrailingBytes(usize),
    #[error("record {record} ({id:?}) has {found} components, header dim is {expected}")]
    DimMismatch { record: u64, id: String, expected: usize, found: usize },
    #[error("record {record}: id is not valid UTF-8")]
    BadId { record: u64 },
    #[error("record {record}: duplicate id {id:?}")]
    DuplicateId { record: u64, id: String },
    #[error("record {record} ({id:?}) has a non-finite component")]
    NonFinite { record: u64, id: String },
    #[error("line {line}: {message}")]
    Malformed { line: u64, message: String },
    #[error("id {0:?} longer than 65535 bytes")]
    IdTooLong(String),
    #[error("file declares encoder {found:?} but {expected:?} was requested")]
    EncoderMismatch { expected: String, found: String },
}

/// Embedding vectors for one encoder, keyed by document id.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    encoder_id: String,
    dim: usize,
    ids: Vec<String>,
    values: Vec<f64>,
    index: HashMap<String, usize>,
}

impl EmbeddingTable {
    pub fn new(encoder_id: impl Into<String>, dim: usize) -> Self {
        Self {
            encoder_id: encoder_id.into(),
            dim,
            ids: Vec::new(),
            values: Vec::new(),
            index: HashMap::new(),
        }
    }

    fn push_checked(&mut self, record: u64, id: String, vector: Vec<f64>) -> Result<(), EmbeddingErrorKind> {
        if vector.len() != self.dim {
            return Err(EmbeddingErrorKind::DimMismatch {
                record,
                id,
                expected: self.dim,
                found: vector.len(),
            });
        }
        if vector.iter().any(|x| !x.is_finite()) {
            return Err(EmbeddingErrorKind::NonFinite { record, id });
        }
        if self.index.contains_key(&id) {
            return Err(EmbeddingErrorKind::DuplicateId { record, id });
        }
        self.index.insert(id.clone(), self.ids.len());
        self.ids.push(id);
        self.values.extend(vector);
        Ok(())
    }

    /// Adds one vector, enforcing the table invariants.
    pub fn insert(&mut self, id: impl Into<String>, vector: Vec<f64>) -> Result<(), EmbeddingErrorKind> {
        let record = self.ids.len() as u64;
        self.push_checked(record, id.into(), vector)
    }

    pub fn encoder_id(&self) -> &str {
        &self.encoder_id
    }

    pub fn set_encoder_id(&mut self, encoder_id: impl Into<String>) {
        self.encoder_id = encoder_id.into();
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

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn get(&self, id: &str) -> Option<&[f64]> {
        self.index
            .get(id)
            .map(|&i| &self.values[i * self.dim..(i + 1) * self.dim])
    }
}

fn err(path: &Path, kind: impl Into<EmbeddingErrorKind>) -> EmbeddingError {
    EmbeddingError { path: path.to_path_buf(), kind: kind.into() }
}

/// Loads a table, picking the format by extension (`.jsonl`/`.json` vs
/// TDEB). TDEB files carry no encoder name, so the file stem is used.
pub fn load_embedding_table(path: &Path) -> Result<EmbeddingTable, EmbeddingError> {
    if is_jsonl(path) {
        read_embedding_jsonl(path)
    } else {
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("embeddings");
        read_tdeb(path, stem)
    }
}

/// Loads a table for a named encoder. JSONL headers must agree with the name.
pub fn load_embedding_table_as(path: &Path, encoder_id: &str) -> Result<EmbeddingTable, EmbeddingError> {
    if is_jsonl(path) {
        let table = read_embedding_jsonl(path)?;
        if table.encoder_id != encoder_id {
            return Err(err(
                path,
                EmbeddingErrorKind::EncoderMismatch {
                    expected: encoder_id.to_string(),
                    found: table.encoder_id,
                },
            ));
        }
        Ok(table)
    } else {
        read_tdeb(path, encoder_id)
    }
}

fn is_jsonl(path: &Path) -> bool {
    matches!(
        path.extension().and_then(|e| e.to_str()),
        Some("jsonl" | "json" | "ndjson")
    )
}

// ============================================================================
// TDEB
// ============================================================================

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Option<&'a [u8]> {
        let slice = self.bytes.get(self.pos..self.pos.checked_add(n)?)?;
        self.pos += n;
        Some(slice)
    }

    fn u16(&mut self) -> Option<u16> {
        self.take(2).map(|b| u16::from_le_bytes([b[0], b[1]]))
    }
}

pub fn read_tdeb(path: &Path, encoder_id: &str) -> Result<EmbeddingTable, EmbeddingError> {
    let bytes = fs::read(path).map_err(|e| err(path, e))?;
    parse_tdeb(&bytes, encoder_id).map_err(|kind| err(path, kind))
}

pub fn parse_tdeb(bytes: &[u8], encoder_id: &str) -> Result<EmbeddingTable, EmbeddingErrorKind> {
    if bytes.len() < 4 || &bytes[..4] != TDEB_MAGIC {
        return Err(EmbeddingErrorKind::BadMagic);
    }
    if bytes.len() < HEADER_LEN {
        return Err(EmbeddingErrorKind::Truncated { record: 0 });
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != TDEB_VERSION {
        return Err(EmbeddingErrorKind::UnsupportedVersion(version));
    }
    let dim = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    if dim == 0 {
        return Err(EmbeddingErrorKind::ZeroDim);
    }
    let count = u64::from_le_bytes(bytes[12..20].try_into().unwrap());

    let mut table = EmbeddingTable::new(encoder_id, dim);
    let mut cur = Cursor { bytes, pos: HEADER_LEN };
    for record in 0..count {
        let id_len = cur.u16().ok_or(EmbeddingErrorKind::Truncated { record })?;
        let id_bytes = cur.take(id_len as usize).ok_or(EmbeddingErrorKind::Truncated { record })?;
        let id = std::str::from_utf8(id_bytes)
            .map_err(|_| EmbeddingErrorKind::BadId { record })?
            .to_string();
        let raw = cur.take(dim * 4).ok_or(EmbeddingErrorKind::Truncated { record })?;
        let vector = raw
            .chunks_exact(4)
            .map(|c| f64::from(f32::from_le_bytes([c[0], c[1], c[2], c[3]])))
            .collect();
        table.push_checked(record, id, vector)?;
    }
    if cur.pos != bytes.len() {
        return Err(EmbeddingErrorKind::TrailingBytes(bytes.len() - cur.pos));
    }
    Ok(table)
}

/// Serializes a table as TDEB. Components are narrowed to f32.
pub fn encode_tdeb(table: &EmbeddingTable) -> Result<Vec<u8>, EmbeddingErrorKind> {
    let mut buf = Vec::with_capacity(HEADER_LEN + table.len() * (table.dim * 4 + 16));
    buf.extend_from_slice(TDEB_MAGIC);
    buf.extend_from_slice(&TDEB_VERSION.to_le_bytes());
    buf.extend_from_slice(&(table.dim as u32).to_le_bytes());
    buf.extend_from_slice(&(table.len() as u64).to_le_bytes());
    for id in &table.ids {
        let len = u16::try_from(id.len()).map_err(|_| EmbeddingErrorKind::IdTooLong(id.clone()))?;
        buf.extend_from_slice(&len.to_le_bytes());
        buf.extend_from_slice(id.as_bytes());
        for &x in table.get(id).unwrap() {
            buf.extend_from_slice(&(x as f32).to_le_bytes());
        }
    }
    Ok(buf)
}

pub fn write_tdeb(path: &Path, table: &EmbeddingTable) -> Result<(), EmbeddingError> {
    let bytes = encode_tdeb(table).map_err(|k| err(path, k))?;
    fs::write(path, bytes).map_err(|e| err(path, e))
}

// ============================================================================
// JSONL
// ============================================================================

#[derive(Serialize, Deserialize)]
struct JsonlHeader {
    encoder_id: String,
    dim: usize,
}

#[derive(Serialize, Deserialize)]
struct JsonlRecord {
    id: String,
    vector: Vec<f64>,
}

pub fn read_embedding_jsonl(path: &Path) -> Result<EmbeddingTable, EmbeddingError> {
    let text = fs::read_to_string(path).map_err(|e| err(path, e))?;
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i as u64 + 1, l))
        .filter(|(_, l)| !l.trim().is_empty());
    let malformed = |line: u64, message: String| err(path, EmbeddingErrorKind::Malformed { line, message });

    let (line, first) = lines.next().ok_or_else(|| malformed(1, "missing header line".into()))?;
    let header: JsonlHeader = serde_json::from_str(first)
        .map_err(|e| malformed(line, format!("bad header: {e}")))?;
    if header.dim == 0 {
        return Err(err(path, EmbeddingErrorKind::ZeroDim));
    }
    let mut table = EmbeddingTable::new(header.encoder_id, header.dim);
    for (record, (line, l)) in lines.enumerate() {
        let rec: JsonlRecord = serde_json::from_str(l).map_err(|e| malformed(line, e.to_string()))?;
        table
            .push_checked(record as u64, rec.id, rec.vector)
            .map_err(|k| err(path, k))?;
    }
    Ok(table)
}

pub fn write_embedding_jsonl(path: &Path, table: &EmbeddingTable) -> Result<(), EmbeddingError> {
    let mut out = Vec::new();
    let header = JsonlHeader { encoder_id: table.encoder_id.clone(), dim: table.dim };
    serde_json::to_writer(&mut out, &header).expect("header serializes");
    out.push(b'\n');
    for id in &table.ids {
        let rec = JsonlRecord { id: id.clone(), vector: table.get(id).unwrap().to_vec() };
        serde_json::to_writer(&mut out, &rec).expect("record serializes");
        out.push(b'\n');
    }
    fs::File::create(path)
        .and_then(|mut f| f.write_all(&out))
        .map_err(|e| err(path, e))
}
