//! Content-addressed stage cache and atomic file output.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

const MAGIC: &str = "eegfist-cache";
/// Bumped whenever a cached type changes shape.
pub const CACHE_FORMAT_VERSION: u32 = 1;

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Hash of a stage name, its input hashes and its configuration.
pub fn stage_key<C: Serialize>(stage: &str, inputs: &[&str], config: &C) -> Result<String> {
    let cfg = serde_json::to_string(config).map_err(|e| Error::Serialization(e.to_string()))?;
    let mut h = Sha256::new();
    for part in [MAGIC, &CACHE_FORMAT_VERSION.to_string(), stage, &cfg] {
        h.update((part.len() as u64).to_le_bytes());
        h.update(part.as_bytes());
    }
    for i in inputs {
        h.update((i.len() as u64).to_le_bytes());
        h.update(i.as_bytes());
    }
    Ok(hex::encode(h.finalize()))
}

pub fn to_cbor<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    ciborium::into_writer(value, &mut out).map_err(|e| Error::Serialization(e.to_string()))?;
    Ok(out)
}

#[derive(Serialize, Deserialize)]
struct Envelope {
    magic: String,
    version: u32,
    stage: String,
    #[serde(with = "serde_bytes_compat")]
    payload: Vec<u8>,
}

/// CBOR byte strings rather than arrays of integers.
mod serde_bytes_compat {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &[u8], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_bytes(v)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u8>, D::Error> {
        ciborium::value::Value::deserialize(d).and_then(|v| match v {
            ciborium::value::Value::Bytes(b) => Ok(b),
            _ => Err(serde::de::Error::custom("expected a byte string")),
        })
    }
}

/// Writes `bytes` to a sibling temp file and renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("out");
    let tmp = dir.join(format!(".{name}.{}.tmp", std::process::id()));
    let result = (|| {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        std::fs::rename(&tmp, path)
    })();
    if let Err(e) = result {
        let _ = std::fs::remove_file(&tmp);
        return Err(Error::io(path, e));
    }
    Ok(())
}

/// Stage outputs stored as `<dir>/<stage>/<key>.cbor`.
#[derive(Debug, Clone)]
pub struct Cache {
    dir: PathBuf,
}

/// A value loaded from or stored in the cache.
#[derive(Debug, Clone)]
pub struct Cached<T> {
    pub value: T,
    pub key: String,
    /// sha256 of the CBOR payload.
    pub hash: String,
    pub hit: bool,
    pub path: PathBuf,
}

impl Cache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Cache { dir: dir.into() }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path(&self, stage: &str, key: &str) -> PathBuf {
        self.dir.join(stage).join(format!("{key}.cbor"))
    }

    /// The cached value, or `None` when absent or unreadable.
    pub fn load<T: DeserializeOwned>(&self, stage: &str, key: &str) -> Option<(T, String)> {
        let path = self.path(stage, key);
        let bytes = std::fs::read(&path).ok()?;
        let env: Envelope = match ciborium::from_reader(bytes.as_slice()) {
            Ok(e) => e,
            Err(e) => {
                log::warn!("ignoring unreadable cache entry {}: {e}", path.display());
                return None;
            }
        };
        if env.magic != MAGIC || env.version != CACHE_FORMAT_VERSION || env.stage != stage {
            log::warn!("ignoring stale cache entry {}", path.display());
            return None;
        }
        match ciborium::from_reader(env.payload.as_slice()) {
            Ok(v) => Some((v, sha256_hex(&env.payload))),
            Err(e) => {
                log::warn!("ignoring undecodable cache entry {}: {e}", path.display());
                None
            }
        }
    }

    pub fn store<T: Serialize>(&self, stage: &str, key: &str, value: &T) -> Result<String> {
        let payload = to_cbor(value)?;
        let hash = sha256_hex(&payload);
        let env = Envelope {
            magic: MAGIC.into(),
            version: CACHE_FORMAT_VERSION,
            stage: stage.into(),
            payload,
        };
        write_atomic(&self.path(stage, key), &to_cbor(&env)?)?;
        Ok(hash)
    }

    /// Loads `key` or computes, stores and returns it.
    pub fn get_or_compute<T, F>(&self, stage: &str, key: String, compute: F) -> Result<Cached<T>>
    where
        T: Serialize + DeserializeOwned,
        F: FnOnce() -> Result<T>,
    {
        let path = self.path(stage, &key);
        if let Some((value, hash)) = self.load(stage, &key) {
            log::debug!("{stage}: cache hit {key}");
            return Ok(Cached {
                value,
                key,
                hash,
                hit: true,
                path,
            });
        }
        let value = compute()?;
        let hash = self.store(stage, &key, &value)?;
        Ok(Cached {
            value,
            key,
            hash,
            hit: false,
            path,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_miss() {
        let dir = tempfile::tempdir().unwrap();
        let cache = Cache::new(dir.path());
        let key = stage_key("demo", &["abc"], &(1, "x")).unwrap();
        let first = cache.get_or_compute("demo", key.clone(), || Ok(vec![1.5f64, -2.0])).unwrap();
        assert!(!first.hit);
        let second: Cached<Vec<f64>> = cache.get_or_compute("demo", key, || panic!("recomputed")).unwrap();
        assert!(second.hit);
        assert_eq!(second.value, vec![1.5, -2.0]);
        assert_eq!(first.hash, second.hash);
    }

    #[test]
    fn key_depends_on_every_part() {
        let base = stage_key("s", &["a", "b"], &1).unwrap();
        assert_ne!(base, stage_key("t", &["a", "b"], &1).unwrap());
        assert_ne!(base, stage_key("s", &["ab"], &1).unwrap());
        assert_ne!(base, stage_key("s", &["a", "b"], &2).unwrap());
    }

    #[test]
    fn corrupt_entry_is_recomputed() {
        let dir = tempfile::tempdir().unwrap();
        let cache = Cache::new(dir.path());
        std::fs::create_dir_all(dir.path().join("s")).unwrap();
        std::fs::write(cache.path("s", "k"), b"not cbor").unwrap();
        let v = cache.get_or_compute("s", "k".into(), || Ok(3u32)).unwrap();
        assert!(!v.hit);
        assert_eq!(cache.load::<u32>("s", "k").unwrap().0, 3);
    }
}
