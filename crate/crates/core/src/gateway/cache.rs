//! Content-addressed disk cache for chat completions.
//!
//! Layout: `<root>/<sanitized_model>/<cache_key>`, one JSON file per
//! exchange. Writes go to a unique temp sibling and are renamed into place,
//! so concurrent writers of the same key leave a complete file either way.

use crate::types::ChatMessage;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};

/// What a cache file holds: the request messages (for audit) and the raw
/// response text. Parsed views are always re-derived, never cached.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CachedExchange {
    pub messages: Vec<ChatMessage>,
    pub raw_response: String,
}

#[derive(Debug, thiserror::Error)]
pub enum CacheError {
    #[error("cache I/O at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("corrupt cache entry at {path}: {detail}")]
    Corrupt { path: PathBuf, detail: String },
}

#[derive(Debug, Clone)]
pub struct DiskCache {
    root: PathBuf,
}

static TEMP_COUNTER: AtomicU64 = AtomicU64::new(0);

impl DiskCache {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn entry_path(&self, model_name: &str, cache_key: &str) -> PathBuf {
        self.root.join(sanitize_component(model_name)).join(cache_key)
    }

    /// Whether any entry exists for this model. Used to decide if a run is
    /// starting cold (worth a connectivity preflight) or warm.
    pub fn has_entries(&self, model_name: &str) -> bool {
        let dir = self.root.join(sanitize_component(model_name));
        std::fs::read_dir(&dir)
            .map(|mut entries| entries.next().is_some())
            .unwrap_or(false)
    }

    pub fn load(
        &self,
        model_name: &str,
        cache_key: &str,
    ) -> Result<Option<CachedExchange>, CacheError> {
        let path = self.entry_path(model_name, cache_key);
        let bytes = match std::fs::read(&path) {
            Ok(bytes) => bytes,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
            Err(source) => return Err(CacheError::Io { path, source }),
        };
        let entry = serde_json::from_slice(&bytes).map_err(|e| CacheError::Corrupt {
            path: path.clone(),
            detail: e.to_string(),
        })?;
        Ok(Some(entry))
    }

    pub fn store(
        &self,
        model_name: &str,
        cache_key: &str,
        entry: &CachedExchange,
    ) -> Result<(), CacheError> {
        let path = self.entry_path(model_name, cache_key);
        let dir = path.parent().expect("entry path has a parent");
        std::fs::create_dir_all(dir).map_err(|source| CacheError::Io {
            path: dir.to_owned(),
            source,
        })?;
        let tmp = path.with_extension(format!(
            "tmp.{}.{}",
            std::process::id(),
            TEMP_COUNTER.fetch_add(1, Ordering::Relaxed)
        ));
        let bytes = serde_json::to_vec_pretty(entry).expect("exchange serializes");
        std::fs::write(&tmp, bytes).map_err(|source| CacheError::Io {
            path: tmp.clone(),
            source,
        })?;
        std::fs::rename(&tmp, &path).map_err(|source| CacheError::Io { path, source })
    }
}

/// Maps a model name to a directory component: anything outside
/// `[A-Za-z0-9._-]` becomes `_`.
fn sanitize_component(name: &str) -> String {
    let mapped: String = name
        .chars()
        .map(|c| match c {
            'A'..='Z' | 'a'..='z' | '0'..='9' | '.' | '_' | '-' => c,
            _ => '_',
        })
        .collect();
    if mapped.is_empty() {
        "_".to_owned()
    } else {
        mapped
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::ChatMessage;

    fn sample() -> CachedExchange {
        CachedExchange {
            messages: vec![ChatMessage::system("sys"), ChatMessage::user("hi")],
            raw_response: r#"{"score": 4}"#.to_owned(),
        }
    }

    #[test]
    fn store_then_load_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let cache = DiskCache::new(dir.path());
        assert!(!cache.has_entries("gpt-4o"));
        assert!(cache.load("gpt-4o", "abc123").unwrap().is_none());

        cache.store("gpt-4o", "abc123", &sample()).unwrap();
        let loaded = cache.load("gpt-4o", "abc123").unwrap().unwrap();
        assert_eq!(loaded.raw_response, sample().raw_response);
        assert_eq!(loaded.messages.len(), 2);
        assert!(cache.has_entries("gpt-4o"));
        assert!(!cache.has_entries("other-model"));
    }

    #[test]
    fn model_names_with_separators_stay_inside_root() {
        let dir = tempfile::tempdir().unwrap();
        let cache = DiskCache::new(dir.path());
        cache.store("org/model:v1", "k", &sample()).unwrap();
        assert!(dir.path().join("org_model_v1").join("k").exists());
        assert!(cache.load("org/model:v1", "k").unwrap().is_some());
    }

    #[test]
    fn corrupt_entry_is_reported_not_swallowed() {
        let dir = tempfile::tempdir().unwrap();
        let cache = DiskCache::new(dir.path());
        let model_dir = dir.path().join("m");
        std::fs::create_dir_all(&model_dir).unwrap();
        std::fs::write(model_dir.join("key"), b"not json").unwrap();
        assert!(matches!(
            cache.load("m", "key"),
            Err(CacheError::Corrupt { .. })
        ));
    }

    #[test]
    fn no_temp_files_left_behind() {
        let dir = tempfile::tempdir().unwrap();
        let cache = DiskCache::new(dir.path());
        cache.store("m", "k1", &sample()).unwrap();
        cache.store("m", "k2", &sample()).unwrap();
        let leftovers: Vec<_> = std::fs::read_dir(dir.path().join("m"))
            .unwrap()
            .map(|e| e.unwrap().file_name().into_string().unwrap())
            .filter(|n| n.contains("tmp"))
            .collect();
        assert!(leftovers.is_empty(), "temp files remain: {leftovers:?}");
    }
}
