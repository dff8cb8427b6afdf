//! Modeling-data files grouped by effective knowledge domain, plus the index table.

use std::collections::BTreeMap;
use std::fs::{self, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bddb::{ModelingBatch, ModelingRecord};
use crate::frontend::DomainSet;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}: {source}")]
    Format { path: String, source: serde_json::Error },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> StoreError + '_ {
    move |source| StoreError::Io { path: path.display().to_string(), source }
}

/// One line of a data file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredRecord {
    pub state_tokens: Vec<u32>,
    pub root: usize,
    pub delta_pi: f64,
    /// Sequence number of the batch the record arrived in, per domain key.
    #[serde(default)]
    pub batch: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileRef {
    pub cycle: u32,
    pub path: String,
    pub records: usize,
    /// Records before this index were already used for training.
    pub watermark: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct IndexEntry {
    pub domains: DomainSet,
    pub files: Vec<FileRef>,
    pub batches: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexTable {
    pub cycle: u32,
    pub entries: BTreeMap<String, IndexEntry>,
}

impl Default for IndexTable {
    fn default() -> Self {
        IndexTable { cycle: 1, entries: BTreeMap::new() }
    }
}

/// Records of one domain with their cycle.
#[derive(Debug, Clone, PartialEq)]
pub struct DomainData {
    pub domains: DomainSet,
    /// `(cycle, record, already trained)`.
    pub records: Vec<(u32, StoredRecord, bool)>,
}

/// Test membership of batch `n` under test ratio `r`: every batch where the
/// running count `floor(n·r)` advances.
pub fn is_test_batch(n: usize, r: f64) -> bool {
    ((n + 1) as f64 * r + 1e-9).floor() > (n as f64 * r + 1e-9).floor()
}

pub struct DataStore {
    root: PathBuf,
}

impl DataStore {
    pub fn open(root: impl Into<PathBuf>) -> Self {
        DataStore { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn index_path(&self) -> PathBuf {
        self.root.join("index.json")
    }

    pub fn index(&self) -> Result<IndexTable, StoreError> {
        let p = self.index_path();
        match fs::read_to_string(&p) {
            Ok(text) => serde_json::from_str(&text).map_err(|source| StoreError::Format { path: p.display().to_string(), source }),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(IndexTable::default()),
            Err(e) => Err(io_err(&p)(e)),
        }
    }

    fn save_index(&self, idx: &IndexTable) -> Result<(), StoreError> {
        fs::create_dir_all(&self.root).map_err(io_err(&self.root))?;
        let p = self.index_path();
        let tmp = self.root.join("index.json.tmp");
        let text = serde_json::to_string_pretty(idx).map_err(|source| StoreError::Format { path: p.display().to_string(), source })?;
        fs::write(&tmp, text).map_err(io_err(&tmp))?;
        fs::rename(&tmp, &p).map_err(io_err(&p))
    }

    pub fn cycle(&self) -> Result<u32, StoreError> {
        Ok(self.index()?.cycle)
    }

    pub fn advance_cycle(&self) -> Result<u32, StoreError> {
        let mut idx = self.index()?;
        idx.cycle += 1;
        self.save_index(&idx)?;
        Ok(idx.cycle)
    }

    /// Append a batch to the current-cycle file of its domain key.
    pub fn record_batch(&self, b: &ModelingBatch) -> Result<(), StoreError> {
        if b.records.is_empty() {
            return Ok(());
        }
        let mut idx = self.index()?;
        let key = b.domains.key();
        let cycle = idx.cycle;
        let entry = idx.entries.entry(key.clone()).or_insert_with(|| IndexEntry { domains: b.domains.clone(), ..Default::default() });
        let batch = entry.batches;
        entry.batches += 1;
        let rel = format!("{key}/cycle-{cycle}.jsonl");
        let path = self.root.join(&rel);
        fs::create_dir_all(path.parent().expect("file has a parent")).map_err(io_err(&path))?;
        let mut text = String::new();
        for r in &b.records {
            let line = StoredRecord { state_tokens: r.state_tokens.clone(), root: r.root, delta_pi: r.delta_pi, batch };
            text.push_str(&serde_json::to_string(&line).map_err(|source| StoreError::Format { path: rel.clone(), source })?);
            text.push('\n');
        }
        let mut f = OpenOptions::new().create(true).append(true).open(&path).map_err(io_err(&path))?;
        f.write_all(text.as_bytes()).map_err(io_err(&path))?;
        match entry.files.iter_mut().find(|f| f.cycle == cycle) {
            Some(fr) => fr.records += b.records.len(),
            None => entry.files.push(FileRef { cycle, path: rel, records: b.records.len(), watermark: 0 }),
        }
        self.save_index(&idx)
    }

    pub fn load(&self, key: &str) -> Result<Option<DomainData>, StoreError> {
        let idx = self.index()?;
        let Some(entry) = idx.entries.get(key) else { return Ok(None) };
        let mut records = Vec::new();
        for fr in &entry.files {
            let path = self.root.join(&fr.path);
            let f = fs::File::open(&path).map_err(io_err(&path))?;
            for (i, line) in BufReader::new(f).lines().enumerate() {
                let line = line.map_err(io_err(&path))?;
                if line.trim().is_empty() {
                    continue;
                }
                let r: StoredRecord = serde_json::from_str(&line)
                    .map_err(|source| StoreError::Format { path: path.display().to_string(), source })?;
                records.push((fr.cycle, r, i < fr.watermark));
            }
        }
        Ok(Some(DomainData { domains: entry.domains.clone(), records }))
    }

    /// Mark every stored record of `key` as used.
    pub fn mark_trained(&self, key: &str) -> Result<(), StoreError> {
        let mut idx = self.index()?;
        if let Some(e) = idx.entries.get_mut(key) {
            for f in &mut e.files {
                f.watermark = f.records;
            }
            self.save_index(&idx)?;
        }
        Ok(())
    }

    pub fn keys(&self) -> Result<Vec<(String, DomainSet)>, StoreError> {
        Ok(self.index()?.entries.into_iter().map(|(k, e)| (k, e.domains)).collect())
    }
}

impl From<&StoredRecord> for ModelingRecord {
    fn from(r: &StoredRecord) -> Self {
        ModelingRecord { state_tokens: r.state_tokens.clone(), root: r.root, delta_pi: r.delta_pi }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn batch(names: &[&str], n: usize) -> ModelingBatch {
        ModelingBatch {
            records: (0..n).map(|i| ModelingRecord { state_tokens: vec![i as u32; 5], root: i, delta_pi: 1.0 }).collect(),
            domains: DomainSet::from_names(names.iter().copied()),
        }
    }

    #[test]
    fn batches_group_by_domain_key() {
        let dir = tempfile::tempdir().unwrap();
        let s = DataStore::open(dir.path());
        assert_eq!(s.cycle().unwrap(), 1);
        s.record_batch(&batch(&["C"], 2)).unwrap();
        let idx = s.index().unwrap();
        assert_eq!(idx.entries.len(), 1);
        assert!(dir.path().join("C/cycle-1.jsonl").exists());
        s.record_batch(&batch(&["C"], 3)).unwrap();
        assert_eq!(s.index().unwrap().entries["C"].files[0].records, 5);
        s.record_batch(&batch(&["C", "D"], 1)).unwrap();
        assert_eq!(s.index().unwrap().entries.len(), 2);
        let data = s.load("C").unwrap().unwrap();
        assert_eq!(data.records.len(), 5);
        assert_eq!(data.records[4].1.batch, 1);
    }

    #[test]
    fn cycles_separate_files() {
        let dir = tempfile::tempdir().unwrap();
        let s = DataStore::open(dir.path());
        s.record_batch(&batch(&["C"], 1)).unwrap();
        assert_eq!(s.advance_cycle().unwrap(), 2);
        s.record_batch(&batch(&["C"], 1)).unwrap();
        let cycles: Vec<u32> = s.load("C").unwrap().unwrap().records.iter().map(|r| r.0).collect();
        assert_eq!(cycles, vec![1, 2]);
        s.mark_trained("C").unwrap();
        assert!(s.load("C").unwrap().unwrap().records.iter().all(|r| r.2));
    }

    #[test]
    fn test_batches_follow_ratio() {
        let tests: Vec<usize> = (0..20).filter(|&n| is_test_batch(n, 0.2)).collect();
        assert_eq!(tests, vec![4, 9, 14, 19]);
        assert!(!(0..50).any(|n| is_test_batch(n, 0.0)));
        assert!((0..50).all(|n| is_test_batch(n, 1.0)));
    }
}
