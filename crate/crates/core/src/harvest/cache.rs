use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use super::HarvestRecord;

#[derive(Debug, thiserror::Error)]
pub enum CacheError {
    #[error("cache i/o error at {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("corrupt cache entry {path}: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
}

/// Harvest records on disk, one JSON file per endpoint and harvest time.
#[derive(Debug, Clone)]
pub struct HarvestCache {
    dir: PathBuf,
}

impl HarvestCache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        HarvestCache { dir: dir.into() }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn key(endpoint_url: &str) -> String {
        let digest = Sha256::digest(endpoint_url.as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }

    pub fn save(&self, record: &HarvestRecord) -> Result<PathBuf, CacheError> {
        fs::create_dir_all(&self.dir).map_err(|source| CacheError::Io { path: self.dir.clone(), source })?;
        let name = format!("{}-{}.json", Self::key(&record.endpoint.endpoint_url), record.harvested_at);
        let path = self.dir.join(name);
        let json = serde_json::to_string_pretty(record)
            .map_err(|source| CacheError::Json { path: path.clone(), source })?;
        fs::write(&path, json).map_err(|source| CacheError::Io { path: path.clone(), source })?;
        Ok(path)
    }

    pub fn load(&self, path: &Path) -> Result<HarvestRecord, CacheError> {
        let text = fs::read_to_string(path).map_err(|source| CacheError::Io { path: path.into(), source })?;
        let mut record: HarvestRecord =
            serde_json::from_str(&text).map_err(|source| CacheError::Json { path: path.into(), source })?;
        record.reparse();
        Ok(record)
    }

    /// Most recent record for the endpoint, if any.
    pub fn load_latest(&self, endpoint_url: &str) -> Result<Option<HarvestRecord>, CacheError> {
        let prefix = format!("{}-", Self::key(endpoint_url));
        let entries = match fs::read_dir(&self.dir) {
            Ok(e) => e,
            Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(None),
            Err(source) => return Err(CacheError::Io { path: self.dir.clone(), source }),
        };
        let mut best: Option<(u64, PathBuf)> = None;
        for entry in entries.flatten() {
            let name = entry.file_name().to_string_lossy().into_owned();
            let Some(ts) = name
                .strip_prefix(&prefix)
                .and_then(|rest| rest.strip_suffix(".json"))
                .and_then(|ts| ts.parse::<u64>().ok())
            else {
                continue;
            };
            if best.as_ref().is_none_or(|(b, _)| ts > *b) {
                best = Some((ts, entry.path()));
            }
        }
        best.map(|(_, path)| self.load(&path)).transpose()
    }
}
