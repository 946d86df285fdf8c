use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use thiserror::Error;

use super::ResponseRecord;

#[derive(Debug, Error)]
pub enum CacheError {
    #[error("cache {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Append-only line-delimited store of [`ResponseRecord`]s keyed by prompt hash.
///
/// Lines that fail to parse are skipped on load; they never poison the rest of
/// the file. The first record for a hash wins.
#[derive(Debug)]
pub struct ResponseCache {
    path: Option<PathBuf>,
    entries: HashMap<String, ResponseRecord>,
    file: Option<File>,
    skipped_lines: usize,
}

impl ResponseCache {
    pub fn in_memory() -> Self {
        Self {
            path: None,
            entries: HashMap::new(),
            file: None,
            skipped_lines: 0,
        }
    }

    pub fn open(path: &Path) -> Result<Self, CacheError> {
        let io_err = |source| CacheError::Io {
            path: path.to_path_buf(),
            source,
        };
        let mut file = OpenOptions::new()
            .read(true)
            .append(true)
            .create(true)
            .open(path)
            .map_err(io_err)?;

        let mut entries = HashMap::new();
        let mut skipped_lines = 0;
        for line in BufReader::new(&file).lines() {
            let line = match line {
                Ok(l) => l,
                Err(_) => {
                    skipped_lines += 1;
                    continue;
                }
            };
            if line.trim().is_empty() {
                continue;
            }
            match serde_json::from_str::<ResponseRecord>(&line) {
                Ok(rec) => {
                    entries.entry(rec.prompt_hash.clone()).or_insert(rec);
                }
                Err(_) => skipped_lines += 1,
            }
        }

        // A torn final line must not swallow the next appended record.
        let len = file.metadata().map_err(io_err)?.len();
        if len > 0 {
            let mut last = [0u8; 1];
            file.seek(SeekFrom::Start(len - 1)).map_err(io_err)?;
            file.read_exact(&mut last).map_err(io_err)?;
            if last[0] != b'\n' {
                file.write_all(b"\n").map_err(io_err)?;
            }
        }

        Ok(Self {
            path: Some(path.to_path_buf()),
            entries,
            file: Some(file),
            skipped_lines,
        })
    }

    pub fn get(&self, prompt_hash: &str) -> Option<&ResponseRecord> {
        self.entries.get(prompt_hash)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Lines ignored while loading because they did not parse.
    pub fn skipped_lines(&self) -> usize {
        self.skipped_lines
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    /// Persists the record (one line, flushed) and indexes it.
    pub fn insert(&mut self, record: ResponseRecord) -> Result<(), CacheError> {
        if self.entries.contains_key(&record.prompt_hash) {
            return Ok(());
        }
        if let Some(file) = self.file.as_mut() {
            let mut line = serde_json::to_vec(&record).expect("record serializes");
            line.push(b'\n');
            file.write_all(&line)
                .and_then(|_| file.flush())
                .map_err(|source| CacheError::Io {
                    path: self.path.clone().unwrap_or_default(),
                    source,
                })?;
        }
        self.entries.insert(record.prompt_hash.clone(), record);
        Ok(())
    }
}
