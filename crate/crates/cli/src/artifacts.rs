//! Output directory writer. Every file gets a `<name>.meta.json` sidecar
//! naming the config digest, the master seed and the file's own SHA-256.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{PipelineError, Result};

#[derive(Debug, Clone, Serialize)]
pub struct ArtifactMeta<'a> {
    pub artifact: &'a str,
    pub config_digest: &'a str,
    pub master_seed: u64,
    pub sha256: String,
    pub generator: &'a str,
}

pub const GENERATOR: &str = concat!("facegrowth ", env!("CARGO_PKG_VERSION"));

pub fn sha256_hex(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

#[derive(Debug)]
pub struct ArtifactWriter {
    dir: PathBuf,
    digest: String,
    master_seed: u64,
    written: Vec<PathBuf>,
}

impl ArtifactWriter {
    pub fn new(dir: &Path, digest: String, master_seed: u64) -> Result<Self> {
        fs::create_dir_all(dir).map_err(|e| PipelineError::io(dir, e))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            digest,
            master_seed,
            written: Vec::new(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn written(&self) -> &[PathBuf] {
        &self.written
    }

    pub fn write_bytes(&mut self, name: &str, bytes: &[u8]) -> Result<PathBuf> {
        let path = self.dir.join(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| PipelineError::io(parent, e))?;
        }
        fs::write(&path, bytes).map_err(|e| PipelineError::io(&path, e))?;
        let meta = ArtifactMeta {
            artifact: name,
            config_digest: &self.digest,
            master_seed: self.master_seed,
            sha256: sha256_hex(bytes),
            generator: GENERATOR,
        };
        let meta_path = self.dir.join(format!("{name}.meta.json"));
        let text = serde_json::to_vec_pretty(&meta).expect("metadata serializes");
        fs::write(&meta_path, text).map_err(|e| PipelineError::io(&meta_path, e))?;
        self.written.push(path.clone());
        Ok(path)
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<PathBuf> {
        let mut text = serde_json::to_vec_pretty(value).expect("artifact serializes to JSON");
        text.push(b'\n');
        self.write_bytes(name, &text)
    }

    /// Render into memory with `f`, then write.
    pub fn write_with<F>(&mut self, name: &str, f: F) -> Result<PathBuf>
    where
        F: FnOnce(&mut Vec<u8>) -> facegrowth_core::Result<()>,
    {
        let mut buf = Vec::new();
        f(&mut buf).map_err(PipelineError::stage("write"))?;
        self.write_bytes(name, &buf)
    }
}
