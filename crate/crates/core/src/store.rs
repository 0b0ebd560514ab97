//! Flat-file feature store.
//!
//! Each entry lives at `<store>/<kind>/<id>.feat`:
//!
//! ```text
//! magic   8 bytes  "TWFUSE01"
//! kind    u8       1 mfcc, 2 ear_vector, 3 dcva_model, 4 score_matrix
//! arity   u8       number of dimensions
//! dims    u64 LE   x arity
//! payload f64 LE   x product(dims)
//! ```
//!
//! Writes go to a temporary sibling and are renamed into place.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use thiserror::Error;

pub const MAGIC: &[u8; 8] = b"TWFUSE01";

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("no {kind} entry '{id}' in store")]
    NotFound { kind: EntryKind, id: String },
    #[error("corrupt entry {}: {reason}", path.display())]
    CorruptEntry { path: PathBuf, reason: String },
    #[error("invalid entry: {0}")]
    InvalidEntry(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EntryKind {
    Mfcc,
    EarVector,
    DcvaModel,
    ScoreMatrix,
}

impl EntryKind {
    pub const ALL: [EntryKind; 4] = [
        Self::Mfcc,
        Self::EarVector,
        Self::DcvaModel,
        Self::ScoreMatrix,
    ];

    pub fn tag(self) -> u8 {
        match self {
            Self::Mfcc => 1,
            Self::EarVector => 2,
            Self::DcvaModel => 3,
            Self::ScoreMatrix => 4,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.tag() == tag)
    }

    pub fn dir_name(self) -> &'static str {
        match self {
            Self::Mfcc => "mfcc",
            Self::EarVector => "ear_vector",
            Self::DcvaModel => "dcva_model",
            Self::ScoreMatrix => "score_matrix",
        }
    }

    pub fn arity(self) -> usize {
        match self {
            Self::EarVector => 1,
            Self::Mfcc | Self::DcvaModel | Self::ScoreMatrix => 2,
        }
    }
}

impl std::fmt::Display for EntryKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.dir_name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StoreEntry {
    pub kind: EntryKind,
    pub id: String,
    pub shape: Vec<usize>,
    pub payload: Vec<f64>,
}

impl StoreEntry {
    pub fn new(
        kind: EntryKind,
        id: impl Into<String>,
        shape: Vec<usize>,
        payload: Vec<f64>,
    ) -> Result<Self, StoreError> {
        let entry = Self {
            kind,
            id: id.into(),
            shape,
            payload,
        };
        entry.validate()?;
        Ok(entry)
    }

    fn validate(&self) -> Result<(), StoreError> {
        validate_id(&self.id)?;
        if self.shape.len() != self.kind.arity() {
            return Err(StoreError::InvalidEntry(format!(
                "{} entries are {}-D, got shape {:?}",
                self.kind,
                self.kind.arity(),
                self.shape
            )));
        }
        let n = shape_product(&self.shape)
            .ok_or_else(|| StoreError::InvalidEntry(format!("shape {:?} overflows", self.shape)))?;
        if n != self.payload.len() {
            return Err(StoreError::InvalidEntry(format!(
                "shape {:?} needs {n} values, payload has {}",
                self.shape,
                self.payload.len()
            )));
        }
        Ok(())
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(10 + 8 * self.shape.len() + 8 * self.payload.len());
        out.extend_from_slice(MAGIC);
        out.push(self.kind.tag());
        out.push(self.shape.len() as u8);
        for &d in &self.shape {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for v in &self.payload {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }
}

fn shape_product(shape: &[usize]) -> Option<usize> {
    shape.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d))
}

fn validate_id(id: &str) -> Result<(), StoreError> {
    let ok = !id.is_empty()
        && id != "."
        && id != ".."
        && !id.starts_with('.')
        && !id.contains(['/', '\\', '\0']);
    if ok {
        Ok(())
    } else {
        Err(StoreError::InvalidEntry(format!("bad entry id '{id}'")))
    }
}

pub fn entry_path(store_dir: &Path, kind: EntryKind, id: &str) -> PathBuf {
    store_dir.join(kind.dir_name()).join(format!("{id}.feat"))
}

pub fn put(store_dir: impl AsRef<Path>, entry: &StoreEntry) -> Result<(), StoreError> {
    entry.validate()?;
    let dir = store_dir.as_ref().join(entry.kind.dir_name());
    fs::create_dir_all(&dir)?;
    let final_path = dir.join(format!("{}.feat", entry.id));
    let tmp_path = dir.join(format!(".{}.feat.tmp{}", entry.id, std::process::id()));
    let result = (|| {
        let mut f = fs::File::create(&tmp_path)?;
        f.write_all(&entry.encode())?;
        f.sync_all()?;
        fs::rename(&tmp_path, &final_path)
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp_path);
    }
    result.map_err(StoreError::from)
}

pub fn decode(bytes: &[u8], path: &Path) -> Result<StoreEntry, StoreError> {
    let corrupt = |reason: String| StoreError::CorruptEntry {
        path: path.to_path_buf(),
        reason,
    };
    if bytes.len() < 10 || &bytes[..8] != MAGIC {
        return Err(corrupt("bad magic".into()));
    }
    let kind = EntryKind::from_tag(bytes[8])
        .ok_or_else(|| corrupt(format!("unknown kind byte {}", bytes[8])))?;
    let arity = bytes[9] as usize;
    if arity != kind.arity() {
        return Err(corrupt(format!("{kind} entry with arity {arity}")));
    }
    let header = 10 + 8 * arity;
    if bytes.len() < header {
        return Err(corrupt("truncated shape".into()));
    }
    let shape: Vec<usize> = bytes[10..header]
        .chunks_exact(8)
        .map(|c| u64::from_le_bytes(c.try_into().unwrap()) as usize)
        .collect();
    let n = shape_product(&shape).ok_or_else(|| corrupt("shape overflows".into()))?;
    let body = &bytes[header..];
    if Some(body.len()) != n.checked_mul(8) {
        return Err(corrupt(format!(
            "shape {shape:?} needs {n} values, file holds {} bytes",
            body.len()
        )));
    }
    let payload = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    Ok(StoreEntry {
        kind,
        id,
        shape,
        payload,
    })
}

pub fn get(
    store_dir: impl AsRef<Path>,
    kind: EntryKind,
    id: &str,
) -> Result<StoreEntry, StoreError> {
    validate_id(id)?;
    let path = entry_path(store_dir.as_ref(), kind, id);
    let bytes = match fs::read(&path) {
        Ok(b) => b,
        Err(e) if e.kind() == io::ErrorKind::NotFound => {
            return Err(StoreError::NotFound {
                kind,
                id: id.to_string(),
            })
        }
        Err(e) => return Err(e.into()),
    };
    let entry = decode(&bytes, &path)?;
    if entry.kind != kind {
        return Err(StoreError::CorruptEntry {
            path,
            reason: format!("file holds a {} entry", entry.kind),
        });
    }
    Ok(entry)
}

pub fn contains(store_dir: impl AsRef<Path>, kind: EntryKind, id: &str) -> bool {
    entry_path(store_dir.as_ref(), kind, id).is_file()
}
