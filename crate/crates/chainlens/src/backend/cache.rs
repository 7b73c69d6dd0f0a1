//! Content-addressed response cache: `cache/<2-hex>/<digest>.json`, written
//! atomically so runs can resume and parallel workers can share it.

use std::fs;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use super::BackendError;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CacheEntry {
    pub query_digest: String,
    pub raw_text: String,
    pub input_tokens: u64,
    pub output_tokens: u64,
    pub timestamp: u64,
}

#[derive(Debug, Clone)]
pub struct QueryCache {
    root: PathBuf,
}

impl QueryCache {
    pub fn new(root: PathBuf) -> Self {
        Self { root }
    }

    pub fn root(&self) -> &std::path::Path {
        &self.root
    }

    fn path_for(&self, key: &str) -> PathBuf {
        let shard = &key[..2.min(key.len())];
        self.root.join(shard).join(format!("{key}.json"))
    }

    pub fn get(&self, key: &str) -> Result<Option<CacheEntry>, BackendError> {
        let path = self.path_for(key);
        match fs::read(&path) {
            Ok(bytes) => Ok(serde_json::from_slice(&bytes).ok()),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(e.into()),
        }
    }

    /// Write-then-rename keeps concurrent readers safe.
    pub fn put(&self, key: &str, entry: &CacheEntry) -> Result<(), BackendError> {
        let path = self.path_for(key);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        let tmp = path.with_extension(format!("tmp.{}", std::process::id()));
        fs::write(&tmp, serde_json::to_vec_pretty(entry).expect("serializable"))?;
        fs::rename(&tmp, &path)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_miss() {
        let dir = tempfile::tempdir().unwrap();
        let cache = QueryCache::new(dir.path().join("cache"));
        let key = "ab12cd";
        assert!(cache.get(key).unwrap().is_none());
        let entry = CacheEntry {
            query_digest: "qd".into(),
            raw_text: "Answer: yes".into(),
            input_tokens: 10,
            output_tokens: 3,
            timestamp: 123,
        };
        cache.put(key, &entry).unwrap();
        let back = cache.get(key).unwrap().unwrap();
        assert_eq!(back.raw_text, "Answer: yes");
        assert_eq!(back.input_tokens, 10);
        assert!(dir.path().join("cache/ab").join("ab12cd.json").is_file());
    }
}
