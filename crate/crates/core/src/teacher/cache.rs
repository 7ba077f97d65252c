//! Append-only store of teacher elaborations.
//!
//! On disk: UTF-8, one JSON record per line,
//! `{"dataset", "id", "text", "decode_params", "timestamp"}`.

use std::collections::{BTreeMap, HashSet};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{DecodeConfig, Elaboration, Source};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheRecord {
    pub dataset: String,
    pub id: String,
    pub text: String,
    pub decode_params: DecodeConfig,
    pub timestamp: u64,
}

pub type CacheKey = (String, String);

#[derive(Debug, Default)]
pub struct TeacherCache {
    path: Option<PathBuf>,
    entries: BTreeMap<CacheKey, Vec<Elaboration>>,
}

/// What an append did.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct AppendOutcome {
    pub added: usize,
    pub duplicates: usize,
    pub blank: usize,
}

impl TeacherCache {
    /// A cache that is never written to disk.
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Opens (or creates on first append) the cache file at `path`.
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let mut cache = Self {
            path: Some(path.clone()),
            entries: BTreeMap::new(),
        };
        if path.exists() {
            let reader = BufReader::new(File::open(&path)?);
            for (i, line) in reader.lines().enumerate() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                let rec: CacheRecord = serde_json::from_str(&line).map_err(|e| Error::at_line(i + 1, e))?;
                let e = Elaboration::from_text(&rec.text, Source::Teacher).map_err(|e| Error::at_line(i + 1, e))?;
                let list = cache.entries.entry((rec.dataset, rec.id)).or_default();
                if !list.iter().any(|x| x.text() == e.text()) {
                    list.push(e);
                }
            }
        }
        Ok(cache)
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn get(&self, dataset: &str, id: &str) -> &[Elaboration] {
        self.entries
            .get(&(dataset.to_string(), id.to_string()))
            .map_or(&[], Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.entries.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.values().all(Vec::is_empty)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&CacheKey, &[Elaboration])> {
        self.entries.iter().map(|(k, v)| (k, v.as_slice()))
    }

    /// Adds the non-blank texts not already cached under the key, persisting them.
    pub fn append(&mut self, dataset: &str, id: &str, texts: &[String], decode: &DecodeConfig) -> Result<AppendOutcome> {
        let key = (dataset.to_string(), id.to_string());
        let existing: HashSet<String> = self.get(dataset, id).iter().map(|e| e.text().to_string()).collect();
        let mut seen = existing;
        let mut out = AppendOutcome::default();
        let mut fresh = Vec::new();
        for t in texts {
            match Elaboration::from_text(t, Source::Teacher) {
                Err(_) => out.blank += 1,
                Ok(e) if !seen.insert(e.text().to_string()) => out.duplicates += 1,
                Ok(e) => fresh.push(e),
            }
        }
        out.added = fresh.len();
        if fresh.is_empty() {
            return Ok(out);
        }
        if let Some(path) = &self.path {
            let timestamp = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
            if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir)?;
            }
            let mut w = BufWriter::new(OpenOptions::new().create(true).append(true).open(path)?);
            for e in &fresh {
                let rec = CacheRecord {
                    dataset: dataset.to_string(),
                    id: id.to_string(),
                    text: e.text().to_string(),
                    decode_params: *decode,
                    timestamp,
                };
                serde_json::to_writer(&mut w, &rec)?;
                w.write_all(b"\n")?;
            }
            w.flush()?;
        }
        self.entries.entry(key).or_default().extend(fresh);
        Ok(out)
    }

    /// Drops every elaboration under the key, rewriting the file without it.
    pub fn invalidate(&mut self, dataset: &str, id: &str) -> Result<usize> {
        let removed = self
            .entries
            .remove(&(dataset.to_string(), id.to_string()))
            .map_or(0, |v| v.len());
        if removed == 0 {
            return Ok(0);
        }
        if let Some(path) = &self.path {
            let kept: Vec<String> = BufReader::new(File::open(path)?)
                .lines()
                .collect::<std::io::Result<Vec<_>>>()?
                .into_iter()
                .filter(|line| match serde_json::from_str::<CacheRecord>(line) {
                    Ok(r) => !(r.dataset == dataset && r.id == id),
                    Err(_) => !line.trim().is_empty(),
                })
                .collect();
            let tmp = path.with_extension("tmp");
            {
                let mut w = BufWriter::new(File::create(&tmp)?);
                for line in kept {
                    w.write_all(line.as_bytes())?;
                    w.write_all(b"\n")?;
                }
                w.flush()?;
            }
            std::fs::rename(tmp, path)?;
        }
        Ok(removed)
    }
}
