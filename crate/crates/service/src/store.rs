//! Append-only JSONL judgment log.
//!
//! Every acknowledged judgment is one newline-terminated JSON record that
//! has been synced to disk. On open, the log is replayed; a trailing
//! fragment without its newline can only come from a write that was cut
//! short, was never acknowledged, and is truncated away.

use std::collections::{HashMap, HashSet};
use std::fs::{File, OpenOptions};
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use emotrans_core::bws::Judgment;

use crate::error::ServiceError;

#[derive(Default)]
struct Index {
    records: Vec<Judgment>,
    keys: HashSet<(String, String)>,
    per_tuple: HashMap<String, usize>,
    per_annotator: HashMap<String, HashSet<String>>,
}

impl Index {
    fn insert(&mut self, j: Judgment) -> bool {
        if !self.keys.insert((j.tuple_id.clone(), j.annotator_id.clone())) {
            return false;
        }
        *self.per_tuple.entry(j.tuple_id.clone()).or_default() += 1;
        self.per_annotator
            .entry(j.annotator_id.clone())
            .or_default()
            .insert(j.tuple_id.clone());
        self.records.push(j);
        true
    }
}

struct Inner {
    file: File,
    len: u64,
    index: Index,
}

/// Read access to the store state while the writer lock is held.
pub struct StoreView<'a>(&'a Index);

impl StoreView<'_> {
    pub fn judgments(&self) -> &[Judgment] {
        &self.0.records
    }

    pub fn count_for_tuple(&self, tuple_id: &str) -> usize {
        self.0.per_tuple.get(tuple_id).copied().unwrap_or(0)
    }

    pub fn has_judged(&self, annotator_id: &str, tuple_id: &str) -> bool {
        self.0
            .per_annotator
            .get(annotator_id)
            .is_some_and(|s| s.contains(tuple_id))
    }
}

/// What was found when replaying the log.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Replay {
    pub records: usize,
    /// Bytes of an unterminated trailing record that were discarded.
    pub truncated_bytes: u64,
}

pub struct JudgmentStore {
    path: PathBuf,
    inner: Mutex<Inner>,
}

impl JudgmentStore {
    /// Opens (creating if needed) and replays the log at `path`.
    pub fn open(path: impl AsRef<Path>) -> Result<(Self, Replay), ServiceError> {
        let path = path.as_ref().to_path_buf();
        let io = |e: std::io::Error| ServiceError::Io(format!("{}: {e}", path.display()));
        let mut file = OpenOptions::new()
            .read(true)
            .append(true)
            .create(true)
            .open(&path)
            .map_err(io)?;
        let mut bytes = Vec::new();
        file.read_to_end(&mut bytes).map_err(io)?;

        let complete = bytes.iter().rposition(|&b| b == b'\n').map_or(0, |i| i + 1);
        let truncated_bytes = (bytes.len() - complete) as u64;
        if truncated_bytes > 0 {
            log::warn!(
                "{}: dropping {truncated_bytes} bytes of an unterminated trailing record",
                path.display()
            );
            file.set_len(complete as u64).map_err(io)?;
            file.sync_data().map_err(io)?;
        }

        let mut index = Index::default();
        for (i, line) in bytes[..complete].split(|&b| b == b'\n').enumerate() {
            if line.iter().all(u8::is_ascii_whitespace) {
                continue;
            }
            let corrupt = |m: String| ServiceError::Io(format!("{} line {}: {m}", path.display(), i + 1));
            let j: Judgment = serde_json::from_slice(line).map_err(|e| corrupt(e.to_string()))?;
            let key = format!("({}, {})", j.tuple_id, j.annotator_id);
            if !index.insert(j) {
                return Err(corrupt(format!("second record for {key}")));
            }
        }
        let replay = Replay {
            records: index.records.len(),
            truncated_bytes,
        };
        let store = JudgmentStore {
            path,
            inner: Mutex::new(Inner {
                file,
                len: complete as u64,
                index,
            }),
        };
        Ok((store, replay))
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, Inner> {
        // a panic while holding the lock cannot leave a half-applied index:
        // the index is only touched after the write succeeded
        self.inner.lock().unwrap_or_else(|p| p.into_inner())
    }

    /// Runs `f` against the current state under the writer lock.
    pub fn view<R>(&self, f: impl FnOnce(&StoreView<'_>) -> R) -> R {
        let inner = self.lock();
        f(&StoreView(&inner.index))
    }

    /// Copy of all records, in log order.
    pub fn snapshot(&self) -> Vec<Judgment> {
        self.lock().index.records.clone()
    }

    pub fn len(&self) -> usize {
        self.lock().index.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Appends `j` durably. `then` runs under the same lock after the record
    /// is on disk, so its view includes `j` and no other writer.
    pub fn append<R>(&self, j: Judgment, then: impl FnOnce(&StoreView<'_>) -> R) -> Result<R, ServiceError> {
        let mut inner = self.lock();
        let key = (j.tuple_id.clone(), j.annotator_id.clone());
        if inner.index.keys.contains(&key) {
            return Err(ServiceError::Conflict(format!(
                "annotator {:?} already judged tuple {:?}",
                j.annotator_id, j.tuple_id
            )));
        }
        let mut line = serde_json::to_vec(&j).map_err(|e| ServiceError::Io(e.to_string()))?;
        line.push(b'\n');
        let start = inner.len;
        let written = inner.file.write_all(&line).and_then(|_| inner.file.sync_data());
        if let Err(e) = written {
            // best effort: do not leave a fragment that a later append would extend
            let _ = inner.file.set_len(start);
            return Err(ServiceError::Io(format!("{}: {e}", self.path.display())));
        }
        inner.len = start + line.len() as u64;
        inner.index.insert(j);
        Ok(then(&StoreView(&inner.index)))
    }
}
