//! Content-addressed stage artifacts and the output-directory lock.

use std::fs;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Environment variable that overrides the cache location.
pub const CACHE_ENV: &str = "FCFUZZY_CACHE_DIR";

pub fn cache_dir(output_dir: &Path) -> PathBuf {
    match std::env::var_os(CACHE_ENV) {
        Some(d) if !d.is_empty() => PathBuf::from(d),
        _ => output_dir.join(".cache"),
    }
}

/// `sha256(stage ‖ version ‖ config ‖ upstream)` as hex, fields NUL-separated.
pub fn stage_key(stage: &str, version: u32, config_json: &str, upstream: &str) -> String {
    let mut h = Sha256::new();
    for part in [stage, &version.to_string(), config_json, upstream] {
        h.update(part.as_bytes());
        h.update([0u8]);
    }
    hex::encode(h.finalize())
}

#[derive(Debug, Clone)]
pub struct Cache {
    root: PathBuf,
}

const COMPLETE: &str = ".complete";

impl Cache {
    pub fn new(root: PathBuf) -> Self {
        Self { root }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn entry(&self, stage: &str, key: &str) -> PathBuf {
        self.root
            .join(format!("{stage}-{}", &key[..16.min(key.len())]))
    }

    pub fn lookup(&self, stage: &str, key: &str) -> Option<PathBuf> {
        let dir = self.entry(stage, key);
        let stamp = fs::read_to_string(dir.join(COMPLETE)).ok()?;
        (stamp.trim() == key).then_some(dir)
    }

    /// Returns the cached artifact directory, building it first on a miss.
    /// The flag is true for a cache hit.
    pub fn get_or_build(
        &self,
        stage: &str,
        key: &str,
        build: impl FnOnce(&Path) -> Result<()>,
    ) -> Result<(PathBuf, bool)> {
        if let Some(dir) = self.lookup(stage, key) {
            log::info!("stage {stage}: cache hit at {}", dir.display());
            return Ok((dir, true));
        }
        let dir = self.entry(stage, key);
        let tmp = self
            .root
            .join(format!(".tmp-{stage}-{}", std::process::id()));
        for d in [&dir, &tmp] {
            if d.exists() {
                fs::remove_dir_all(d).map_err(|e| Error::io(d, e))?;
            }
        }
        fs::create_dir_all(&tmp).map_err(|e| Error::io(&tmp, e))?;
        build(&tmp)?;
        fs::write(tmp.join(COMPLETE), key).map_err(|e| Error::io(&tmp, e))?;
        fs::rename(&tmp, &dir).map_err(|e| Error::io(&dir, e))?;
        log::info!("stage {stage}: built {}", dir.display());
        Ok((dir, false))
    }
}

/// Exclusive claim on an output directory, released on drop.
#[derive(Debug)]
pub struct OutputLock {
    path: PathBuf,
}

impl OutputLock {
    pub fn acquire(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join(".fcfuzzy.lock");
        match fs::OpenOptions::new()
            .write(true)
            .create_new(true)
            .open(&path)
        {
            Ok(_) => {
                fs::write(&path, std::process::id().to_string())
                    .map_err(|e| Error::io(&path, e))?;
                Ok(Self { path })
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(Error::Config(format!(
                "output directory {} is locked by another run (remove {} if that run is gone)",
                dir.display(),
                path.display()
            ))),
            Err(e) => Err(Error::io(&path, e)),
        }
    }
}

impl Drop for OutputLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}
