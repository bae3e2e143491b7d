//! Append-only JSON Lines completion cache. The last record for a key wins;
//! a truncated final line from an interrupted write is ignored.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{self, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::sync::{Mutex, RwLock};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::{DecodeParams, TokenDistribution};

#[derive(Debug, Error)]
pub enum CacheError {
    #[error("cache {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("cache {path}, line {line}: {reason}")]
    Corrupt { path: PathBuf, line: usize, reason: String },
    #[error("cache record encoding failed: {0}")]
    Encode(#[from] serde_json::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheRecord {
    pub key: String,
    pub model: String,
    pub decode: DecodeParams,
    pub distributions: Vec<TokenDistribution>,
    /// Seconds since the Unix epoch.
    pub created_at: u64,
}

/// Digest of (model, prompt, decode parameters).
pub fn cache_key(model: &str, prompt: &str, params: &DecodeParams) -> String {
    let canonical = serde_json::json!({
        "model": model,
        "prompt": prompt,
        "positions": params.positions,
        "logprobs": params.logprobs,
        "temperature": params.temperature,
    });
    hex::encode(Sha256::digest(canonical.to_string().as_bytes()))
}

pub struct Cache {
    path: PathBuf,
    index: RwLock<HashMap<String, CacheRecord>>,
    writer: Mutex<BufWriter<File>>,
}

impl Cache {
    /// Opens or creates the cache file and loads its records.
    pub fn open(path: impl AsRef<Path>) -> Result<Self, CacheError> {
        let path = path.as_ref().to_path_buf();
        let io_err = |source| CacheError::Io { path: path.clone(), source };
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent).map_err(io_err)?;
        }
        let mut file = OpenOptions::new().create(true).read(true).append(true).open(&path).map_err(io_err)?;
        let mut text = String::new();
        file.read_to_string(&mut text).map_err(io_err)?;

        let mut index = HashMap::new();
        let complete = text.is_empty() || text.ends_with('\n');
        let lines: Vec<&str> = text.lines().collect();
        for (i, line) in lines.iter().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            match serde_json::from_str::<CacheRecord>(line) {
                Ok(rec) => {
                    index.insert(rec.key.clone(), rec);
                }
                Err(_) if !complete && i + 1 == lines.len() => {
                    log::warn!("{}: ignoring truncated final record", path.display());
                }
                Err(e) => return Err(CacheError::Corrupt { path, line: i + 1, reason: e.to_string() }),
            }
        }
        if !complete {
            // drop the partial line so the next append starts cleanly
            let keep = text.rfind('\n').map_or(0, |i| i + 1);
            file.set_len(keep as u64).map_err(io_err)?;
        }
        Ok(Self { path, index: RwLock::new(index), writer: Mutex::new(BufWriter::new(file)) })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn len(&self) -> usize {
        self.index.read().expect("cache index lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, key: &str) -> Option<Vec<TokenDistribution>> {
        self.index.read().expect("cache index lock").get(key).map(|r| r.distributions.clone())
    }

    pub fn record(&self, key: &str) -> Option<CacheRecord> {
        self.index.read().expect("cache index lock").get(key).cloned()
    }

    /// Appends and flushes one record, then makes it visible to readers.
    pub fn put(&self, record: CacheRecord) -> Result<(), CacheError> {
        let line = serde_json::to_string(&record)?;
        {
            let mut w = self.writer.lock().expect("cache writer lock");
            let io_err = |source| CacheError::Io { path: self.path.clone(), source };
            w.write_all(line.as_bytes()).map_err(io_err)?;
            w.write_all(b"\n").map_err(io_err)?;
            w.flush().map_err(io_err)?;
        }
        self.index.write().expect("cache index lock").insert(record.key.clone(), record);
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(key: &str, token: &str) -> CacheRecord {
        CacheRecord {
            key: key.into(),
            model: "m".into(),
            decode: DecodeParams::new(1),
            distributions: vec![TokenDistribution::new(vec![(token.into(), -0.25)], "h".into()).unwrap()],
            created_at: 1,
        }
    }

    #[test]
    fn key_depends_on_every_input() {
        let p = DecodeParams::new(1);
        let k = cache_key("m", "prompt", &p);
        assert_eq!(k, cache_key("m", "prompt", &p));
        assert_eq!(k.len(), 64);
        assert_ne!(k, cache_key("m2", "prompt", &p));
        assert_ne!(k, cache_key("m", "prompt ", &p));
        assert_ne!(k, cache_key("m", "prompt", &DecodeParams::new(2)));
    }

    #[test]
    fn round_trip_and_last_wins() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cache.jsonl");
        {
            let cache = Cache::open(&path).unwrap();
            cache.put(record("a", " yes")).unwrap();
            cache.put(record("b", " no")).unwrap();
            cache.put(record("a", " no")).unwrap();
        }
        let cache = Cache::open(&path).unwrap();
        assert_eq!(cache.len(), 2);
        assert_eq!(cache.get("a").unwrap()[0].entries[0].0, " no");
        assert_eq!(cache.record("b").unwrap(), record("b", " no"));
    }

    #[test]
    fn truncated_tail_is_skipped_and_repaired() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cache.jsonl");
        let full = serde_json::to_string(&record("a", " yes")).unwrap();
        std::fs::write(&path, format!("{full}\n{}", &full[..full.len() / 2])).unwrap();
        {
            let cache = Cache::open(&path).unwrap();
            assert_eq!(cache.len(), 1);
            cache.put(record("b", " no")).unwrap();
        }
        let cache = Cache::open(&path).unwrap();
        assert_eq!(cache.len(), 2);
    }

    #[test]
    fn corrupt_middle_line_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cache.jsonl");
        let full = serde_json::to_string(&record("a", " yes")).unwrap();
        std::fs::write(&path, format!("{{oops\n{full}\n")).unwrap();
        assert!(matches!(Cache::open(&path), Err(CacheError::Corrupt { line: 1, .. })));
    }
}
