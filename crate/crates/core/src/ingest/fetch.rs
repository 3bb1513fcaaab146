//! Retrieval of raw source files into a content-addressed cache.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::model::SourceId;

#[derive(Debug, Error)]
pub enum FetchError {
    #[error("offline: refusing to fetch {origin}")]
    Offline { origin: String },
    #[error("network failure fetching {origin}: {message}")]
    Network { origin: String, message: String },
    #[error("{origin} answered HTTP {status}")]
    Http { origin: String, status: u16 },
    #[error("cannot read {origin}: {source}")]
    Io {
        origin: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{origin} returned an empty payload")]
    Empty { origin: String },
}

impl FetchError {
    /// Only transport failures are worth retrying.
    pub fn is_retryable(&self) -> bool {
        matches!(self, FetchError::Network { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawSnapshot {
    pub source: SourceId,
    /// RFC 3339 retrieval time; provenance only, never part of outputs.
    pub retrieved_at: String,
    #[serde(skip)]
    pub payload: Vec<u8>,
    pub origin: String,
    pub sha256: String,
}

impl RawSnapshot {
    pub fn new(source: SourceId, origin: impl Into<String>, payload: Vec<u8>) -> Self {
        RawSnapshot {
            source,
            retrieved_at: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
            sha256: content_hash(&payload),
            payload,
            origin: origin.into(),
        }
    }
}

pub fn content_hash(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn is_url(endpoint: &str) -> bool {
    endpoint.starts_with("http://") || endpoint.starts_with("https://")
}

/// Reads a local path (optionally `file://`-prefixed) or downloads a URL.
/// With `offline` set, URLs fail permanently without touching the network.
pub fn fetch_source(source: SourceId, endpoint: &str, offline: bool) -> Result<RawSnapshot, FetchError> {
    let origin = endpoint.to_string();
    let payload = if is_url(endpoint) {
        if offline {
            return Err(FetchError::Offline { origin });
        }
        download(endpoint)?
    } else {
        let path = endpoint.strip_prefix("file://").unwrap_or(endpoint);
        std::fs::read(path).map_err(|source| FetchError::Io {
            origin: origin.clone(),
            source,
        })?
    };
    if payload.is_empty() {
        return Err(FetchError::Empty { origin });
    }
    Ok(RawSnapshot::new(source, origin, payload))
}

fn download(url: &str) -> Result<Vec<u8>, FetchError> {
    let origin = url.to_string();
    match ureq::get(url).call() {
        Ok(mut resp) => resp
            .body_mut()
            .with_config()
            .limit(u64::MAX)
            .read_to_vec()
            .map_err(|e| FetchError::Network {
                origin,
                message: e.to_string(),
            }),
        Err(ureq::Error::StatusCode(status)) => Err(FetchError::Http { origin, status }),
        Err(e) => Err(FetchError::Network {
            origin,
            message: e.to_string(),
        }),
    }
}

/// [`fetch_source`] retried on transport failures with linear back-off.
pub fn fetch_with_retry(
    source: SourceId,
    endpoint: &str,
    offline: bool,
    attempts: usize,
) -> Result<RawSnapshot, FetchError> {
    let mut attempt = 0;
    loop {
        attempt += 1;
        match fetch_source(source, endpoint, offline) {
            Err(e) if e.is_retryable() && attempt < attempts => {
                log::warn!("{e}; retrying ({attempt}/{attempts})");
                std::thread::sleep(std::time::Duration::from_millis(500 * attempt as u64));
            }
            other => return other,
        }
    }
}

static MANIFEST_LOCK: Mutex<()> = Mutex::new(());

/// Content-addressed store: payloads under `objects/<sha256>`, plus a
/// manifest mapping `source/date/label` to the payload hash.
#[derive(Debug, Clone)]
pub struct SnapshotCache {
    root: PathBuf,
}

impl SnapshotCache {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        SnapshotCache { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn object_path(&self, hash: &str) -> PathBuf {
        self.root.join("objects").join(hash)
    }

    fn manifest_path(&self) -> PathBuf {
        self.root.join("manifest.json")
    }

    pub fn manifest_key(source: SourceId, date: &str, label: &str) -> String {
        format!("{source}/{date}/{label}")
    }

    /// Stores the payload (if new) and records it in the manifest.
    pub fn store(&self, snap: &RawSnapshot, date: &str, label: &str) -> std::io::Result<String> {
        let path = self.object_path(&snap.sha256);
        if !path.exists() {
            crate::pipeline::atomic_write(&path, &snap.payload)?;
        }
        let _guard = MANIFEST_LOCK.lock().unwrap_or_else(|e| e.into_inner());
        let mut manifest = self.manifest()?;
        manifest.insert(Self::manifest_key(snap.source, date, label), snap.sha256.clone());
        let mut bytes = serde_json::to_vec_pretty(&manifest)?;
        bytes.push(b'\n');
        crate::pipeline::atomic_write(&self.manifest_path(), &bytes)?;
        Ok(snap.sha256.clone())
    }

    pub fn manifest(&self) -> std::io::Result<BTreeMap<String, String>> {
        match std::fs::read(self.manifest_path()) {
            Ok(b) => Ok(serde_json::from_slice(&b)?),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(BTreeMap::new()),
            Err(e) => Err(e),
        }
    }

    pub fn lookup(&self, source: SourceId, date: &str, label: &str) -> std::io::Result<Option<String>> {
        Ok(self.manifest()?.get(&Self::manifest_key(source, date, label)).cloned())
    }

    /// Loads a stored payload, verifying its hash.
    pub fn load(&self, hash: &str) -> std::io::Result<Vec<u8>> {
        let bytes = std::fs::read(self.object_path(hash))?;
        if content_hash(&bytes) != hash {
            return Err(std::io::Error::new(
                std::io::ErrorKind::InvalidData,
                format!("cached object {hash} is corrupt"),
            ));
        }
        Ok(bytes)
    }
}
