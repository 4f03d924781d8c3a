//! The materialization cache: `<cachedir>/<xx>/<digest>/` holding the
//! artifact and a `meta.tsv` describing how it was made.

use std::fs::{self, File};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use crate::error::{Error, Result};
use crate::storage::atomic_dir;

pub const META: &str = "meta.tsv";

/// Called with the staging directory after the artifact is written and
/// before it is published. Tests use it to simulate a crash.
pub type CrashHook = Arc<dyn Fn(&Path) -> Result<()> + Send + Sync>;

/// Instrumentation shared by every planner of a session.
#[derive(Debug, Default)]
pub struct Counters {
    pub evaluations: AtomicU64,
    pub cache_hits: AtomicU64,
    evaluated: Mutex<Vec<String>>,
}

impl Counters {
    pub fn evaluations(&self) -> u64 {
        self.evaluations.load(Ordering::Relaxed)
    }

    pub fn cache_hits(&self) -> u64 {
        self.cache_hits.load(Ordering::Relaxed)
    }

    /// Names of evaluated creates, in evaluation order.
    pub fn evaluated(&self) -> Vec<String> {
        self.evaluated.lock().unwrap().clone()
    }

    pub fn reset(&self) {
        self.evaluations.store(0, Ordering::Relaxed);
        self.cache_hits.store(0, Ordering::Relaxed);
        self.evaluated.lock().unwrap().clear();
    }

    pub(crate) fn record(&self, name: &str) {
        self.evaluations.fetch_add(1, Ordering::Relaxed);
        self.evaluated.lock().unwrap().push(name.to_string());
    }
}

/// One published cache entry.
#[derive(Debug, Clone)]
pub struct CacheEntry {
    pub digest: String,
    pub dir: PathBuf,
    /// `meta.tsv` lines split at the first tab.
    pub meta: Vec<(String, String)>,
}

impl CacheEntry {
    pub fn get(&self, key: &str) -> Option<&str> {
        self.meta.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn artifact(&self) -> PathBuf {
        self.dir.join(self.get("artifact").unwrap_or_default())
    }
}

#[derive(Clone)]
pub struct Cache {
    pub dir: PathBuf,
    pub crash_hook: Option<CrashHook>,
}

impl std::fmt::Debug for Cache {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Cache").field("dir", &self.dir).finish()
    }
}

/// An exclusive claim on one digest, held while its artifact is built.
pub struct Claim<'a> {
    cache: &'a Cache,
    digest: String,
    _lock: File,
}

impl Cache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Cache { dir: dir.into(), crash_hook: None }
    }

    fn entry_dir(&self, digest: &str) -> PathBuf {
        self.dir.join(&digest[..2]).join(digest)
    }

    fn read_entry(&self, dir: &Path) -> Option<CacheEntry> {
        let digest = dir.file_name()?.to_str()?.to_string();
        let text = fs::read_to_string(dir.join(META)).ok()?;
        let meta: Vec<(String, String)> = text
            .lines()
            .filter_map(|l| l.split_once('\t').map(|(k, v)| (k.to_string(), v.to_string())))
            .collect();
        let e = CacheEntry { digest, dir: dir.to_path_buf(), meta };
        e.artifact().exists().then_some(e)
    }

    /// The published entry for `digest`, if any.
    pub fn lookup(&self, digest: &str) -> Option<CacheEntry> {
        self.read_entry(&self.entry_dir(digest))
    }

    /// Takes the per-digest lock, waiting for a concurrent writer. Fails only
    /// when the cache directory is unusable.
    pub fn claim(&self, digest: &str) -> Result<Claim<'_>> {
        let parent = self.dir.join(&digest[..2]);
        fs::create_dir_all(&parent).map_err(|e| Error::io(&parent, e))?;
        let lock_path = parent.join(format!("{digest}.lock"));
        let lock = File::options()
            .create(true)
            .truncate(false)
            .write(true)
            .open(&lock_path)
            .map_err(|e| Error::io(&lock_path, e))?;
        lock.lock().map_err(|e| Error::io(&lock_path, e))?;
        Ok(Claim { cache: self, digest: digest.to_string(), _lock: lock })
    }

    pub fn entries(&self) -> Result<Vec<CacheEntry>> {
        let mut out = Vec::new();
        let Ok(shards) = fs::read_dir(&self.dir) else { return Ok(out) };
        for shard in shards.flatten() {
            if !shard.path().is_dir() {
                continue;
            }
            for e in fs::read_dir(shard.path()).map_err(|e| Error::io(shard.path(), e))?.flatten() {
                let p = e.path();
                if p.is_dir() && !e.file_name().to_string_lossy().starts_with('.') {
                    out.extend(self.read_entry(&p));
                }
            }
        }
        out.sort_by(|a, b| a.digest.cmp(&b.digest));
        Ok(out)
    }

    /// Entries whose digest starts with `prefix`.
    pub fn find(&self, prefix: &str) -> Result<Vec<CacheEntry>> {
        Ok(self.entries()?.into_iter().filter(|e| e.digest.starts_with(prefix)).collect())
    }

    /// Removes every entry; returns how many there were.
    pub fn clear(&self) -> Result<usize> {
        let n = self.entries()?.len();
        if self.dir.exists() {
            fs::remove_dir_all(&self.dir).map_err(|e| Error::io(&self.dir, e))?;
        }
        Ok(n)
    }
}

impl Claim<'_> {
    /// The entry, if another writer published it while we waited.
    pub fn existing(&self) -> Option<CacheEntry> {
        self.cache.lookup(&self.digest)
    }

    /// Builds the artifact in a staging directory and publishes it with one
    /// rename. `write` returns the artifact's file name.
    pub fn publish(self, meta: &[(String, String)], write: impl FnOnce(&Path) -> Result<String>) -> Result<CacheEntry> {
        let dir = self.cache.entry_dir(&self.digest);
        atomic_dir(&dir, |tmp| {
            let name = write(tmp)?;
            let mut text = String::new();
            for (k, v) in meta {
                text.push_str(&format!("{k}\t{v}\n"));
            }
            text.push_str(&format!("artifact\t{name}\n"));
            let p = tmp.join(META);
            fs::write(&p, text).map_err(|e| Error::io(p, e))?;
            if let Some(hook) = &self.cache.crash_hook {
                hook(tmp)?;
            }
            Ok(())
        })?;
        self.cache
            .lookup(&self.digest)
            .ok_or_else(|| Error::io(&dir, std::io::Error::other("published cache entry is unreadable")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const D: &str = "ab0123456789";

    #[test]
    fn publish_lookup_clear() {
        let dir = tempfile::tempdir().unwrap();
        let cache = Cache::new(dir.path().join("c"));
        assert!(cache.lookup(D).is_none());
        let claim = cache.claim(D).unwrap();
        assert!(claim.existing().is_none());
        let meta = vec![("name".to_string(), "r1".to_string())];
        let e = claim
            .publish(&meta, |tmp| {
                fs::write(tmp.join("result.tsv"), "#a\n1\n").unwrap();
                Ok("result.tsv".into())
            })
            .unwrap();
        assert_eq!(e.get("name"), Some("r1"));
        assert!(e.artifact().ends_with("ab/ab0123456789/result.tsv"));
        assert_eq!(cache.find("ab01").unwrap().len(), 1);
        assert_eq!(cache.clear().unwrap(), 1);
        assert!(cache.lookup(D).is_none());
    }

    #[test]
    fn failed_publish_leaves_nothing() {
        let dir = tempfile::tempdir().unwrap();
        let mut cache = Cache::new(dir.path());
        cache.crash_hook = Some(Arc::new(|_| Err(Error::Usage("injected".into()))));
        let r = cache.claim(D).unwrap().publish(&[], |tmp| {
            fs::write(tmp.join("x.tsv"), "1\n").unwrap();
            Ok("x.tsv".into())
        });
        assert!(r.is_err());
        assert!(cache.lookup(D).is_none());
        assert!(cache.entries().unwrap().is_empty());
    }
}
