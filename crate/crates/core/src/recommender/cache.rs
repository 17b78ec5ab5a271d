//! Append-only JSON-lines response cache.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{QuerySpec, Source};

/// One cached response, stored as a single JSON line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheEntry {
    pub key: String,
    pub query: QuerySpec,
    pub text: String,
    pub timestamp: DateTime<Utc>,
    pub source: Source,
}

#[derive(Debug)]
pub struct ResponseCache {
    path: Option<PathBuf>,
    entries: HashMap<String, CacheEntry>,
    order: Vec<String>,
    file: Option<File>,
    /// Lines that failed to parse at load (e.g. a torn final line).
    pub skipped_lines: Vec<usize>,
}

impl ResponseCache {
    pub fn in_memory() -> Self {
        Self { path: None, entries: HashMap::new(), order: Vec::new(), file: None, skipped_lines: Vec::new() }
    }

    /// Open (creating if needed) a cache file and load its entries.
    pub fn open(path: impl AsRef<Path>) -> std::io::Result<Self> {
        let path = path.as_ref().to_path_buf();
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir)?;
        }
        let mut cache = Self::in_memory();
        if path.exists() {
            let reader = BufReader::new(File::open(&path)?);
            for (i, line) in reader.lines().enumerate() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                match serde_json::from_str::<CacheEntry>(&line) {
                    Ok(e) => cache.insert(e),
                    Err(_) => cache.skipped_lines.push(i + 1),
                }
            }
        }
        cache.file = Some(OpenOptions::new().create(true).append(true).open(&path)?);
        cache.path = Some(path);
        Ok(cache)
    }

    fn insert(&mut self, e: CacheEntry) {
        if !self.entries.contains_key(&e.key) {
            self.order.push(e.key.clone());
        }
        self.entries.insert(e.key.clone(), e);
    }

    pub fn get(&self, key: &str) -> Option<&CacheEntry> {
        self.entries.get(key)
    }

    pub fn contains(&self, key: &str) -> bool {
        self.entries.contains_key(key)
    }

    /// Append an entry. Existing keys are never overwritten.
    pub fn append(&mut self, entry: CacheEntry) -> std::io::Result<()> {
        if self.entries.contains_key(&entry.key) {
            return Ok(());
        }
        if let Some(f) = self.file.as_mut() {
            let mut line = serde_json::to_string(&entry).map_err(std::io::Error::other)?;
            line.push('\n');
            f.write_all(line.as_bytes())?;
            f.flush()?;
        }
        self.insert(entry);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    /// Entries in insertion order.
    pub fn entries(&self) -> impl Iterator<Item = &CacheEntry> {
        self.order.iter().map(|k| &self.entries[k])
    }

    /// SHA-256 of the cache file bytes, if file-backed.
    pub fn file_hash(&self) -> Option<String> {
        let bytes = std::fs::read(self.path.as_ref()?).ok()?;
        Some(hex::encode(Sha256::digest(bytes)))
    }
}
