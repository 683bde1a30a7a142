//! Content-addressed on-disk cache for chat responses.
//!
//! One file per sample: `{dir}/{hex[0..2]}/{hex[2..4]}/{hex}.json`, where
//! `hex` is the SHA-256 of the provider id, prompt, temperature and sample
//! index. Files hold the request summary and the response text.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use chainqa_core::client::{ChatClient, ChatError};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheRecord {
    pub provider: String,
    pub prompt: String,
    pub temperature: f64,
    pub sample: usize,
    pub response: String,
}

pub fn cache_key(provider: &str, prompt: &str, temperature: f64, sample: usize) -> String {
    let mut h = Sha256::new();
    for part in [provider.as_bytes(), prompt.as_bytes(), &temperature.to_bits().to_le_bytes(), &sample.to_le_bytes()] {
        h.update((part.len() as u64).to_le_bytes());
        h.update(part);
    }
    hex::encode(h.finalize())
}

pub struct CachedChat<C> {
    inner: C,
    dir: PathBuf,
    remote_calls: AtomicUsize,
    write_lock: Mutex<()>,
}

impl<C: ChatClient> CachedChat<C> {
    pub fn new(inner: C, dir: impl Into<PathBuf>) -> Self {
        CachedChat { inner, dir: dir.into(), remote_calls: AtomicUsize::new(0), write_lock: Mutex::new(()) }
    }

    pub fn path_for(&self, key: &str) -> PathBuf {
        self.dir.join(&key[0..2]).join(&key[2..4]).join(format!("{key}.json"))
    }

    /// Calls forwarded to the wrapped client.
    pub fn remote_calls(&self) -> usize {
        self.remote_calls.load(Ordering::SeqCst)
    }

    fn load(&self, path: &Path, want: &CacheRecord) -> Option<String> {
        let text = fs::read_to_string(path).ok()?;
        let rec: CacheRecord = serde_json::from_str(&text).ok()?;
        let same = rec.provider == want.provider
            && rec.prompt == want.prompt
            && rec.temperature.to_bits() == want.temperature.to_bits()
            && rec.sample == want.sample;
        same.then_some(rec.response)
    }

    fn store(&self, path: &Path, rec: &CacheRecord) -> std::io::Result<()> {
        let dir = path.parent().expect("cache paths have a parent");
        let _guard = self.write_lock.lock().unwrap_or_else(|p| p.into_inner());
        fs::create_dir_all(dir)?;
        let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
        tmp.write_all(serde_json::to_string(rec).map_err(std::io::Error::other)?.as_bytes())?;
        tmp.persist(path).map_err(|e| e.error)?;
        Ok(())
    }
}

impl<C: ChatClient> ChatClient for CachedChat<C> {
    fn id(&self) -> &str {
        self.inner.id()
    }

    fn complete(&self, prompt: &str, temperature: f64, n: usize) -> Result<Vec<String>, ChatError> {
        let provider = self.inner.id().to_string();
        let mut out: Vec<Option<String>> = Vec::with_capacity(n);
        let mut missing = Vec::new();
        let mut records = Vec::with_capacity(n);
        for sample in 0..n {
            let rec = CacheRecord { provider: provider.clone(), prompt: prompt.to_string(), temperature, sample, response: String::new() };
            let path = self.path_for(&cache_key(&provider, prompt, temperature, sample));
            let hit = self.load(&path, &rec);
            if hit.is_none() {
                missing.push(sample);
            }
            out.push(hit);
            records.push((path, rec));
        }
        if !missing.is_empty() {
            self.remote_calls.fetch_add(1, Ordering::SeqCst);
            let fresh = self.inner.complete(prompt, temperature, missing.len())?;
            if fresh.len() != missing.len() {
                return Err(ChatError::Malformed(format!("asked for {} samples, got {}", missing.len(), fresh.len())));
            }
            for (sample, text) in missing.into_iter().zip(fresh) {
                let (path, rec) = &mut records[sample];
                rec.response = text.clone();
                self.store(path, rec).map_err(|e| ChatError::Transport(format!("cache write failed: {e}")))?;
                out[sample] = Some(text);
            }
        }
        Ok(out.into_iter().map(|s| s.expect("every sample filled")).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use chainqa_core::client::ScriptedChat;

    #[test]
    fn warm_cache_skips_remote() {
        let dir = tempfile::tempdir().unwrap();
        let c = CachedChat::new(ScriptedChat::new("m").with("q", ["a", "b", "c"]), dir.path());
        let first = c.complete("q", 0.8, 3).unwrap();
        assert_eq!(c.complete("q", 0.8, 3).unwrap(), first);
        assert_eq!(c.remote_calls(), 1);
        c.complete("q", 0.0, 3).unwrap();
        assert_eq!(c.remote_calls(), 2);
        // a larger request only fetches the new sample indices
        c.complete("q", 0.8, 4).unwrap();
        assert_eq!(c.remote_calls(), 3);
        c.complete("q", 0.8, 4).unwrap();
        assert_eq!(c.remote_calls(), 3);
    }

    #[test]
    fn layout_and_corruption() {
        let dir = tempfile::tempdir().unwrap();
        let c = CachedChat::new(ScriptedChat::constant("m", "x"), dir.path());
        c.complete("p", 0.5, 1).unwrap();
        let key = cache_key("m", "p", 0.5, 0);
        let path = dir.path().join(&key[..2]).join(&key[2..4]).join(format!("{key}.json"));
        let rec: CacheRecord = serde_json::from_str(&fs::read_to_string(&path).unwrap()).unwrap();
        assert_eq!(rec.response, "x");
        fs::write(&path, "{not json").unwrap();
        assert_eq!(c.complete("p", 0.5, 1).unwrap(), vec!["x"]);
        assert_eq!(c.remote_calls(), 2);
        assert!(serde_json::from_str::<CacheRecord>(&fs::read_to_string(&path).unwrap()).is_ok());
    }

    #[test]
    fn keys_separate_fields() {
        assert_ne!(cache_key("ab", "c", 0.8, 0), cache_key("a", "bc", 0.8, 0));
        assert_ne!(cache_key("a", "b", 0.8, 0), cache_key("a", "b", 0.8, 1));
        assert_eq!(cache_key("a", "b", 0.8, 0).len(), 64);
    }
}
