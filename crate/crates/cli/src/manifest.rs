//! Run manifests: everything that determines a run's checkpoints.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, BufReader, Read};
use std::path::{Path, PathBuf};

use fedsplit::data::stopwords_digest;
use fedsplit::runtime::{EmbeddingSource, TrainConfig};
use serde::Serialize;
use sha2::{Digest, Sha256};

#[derive(Debug, Serialize, PartialEq)]
pub struct RunManifest {
    pub role: String,
    pub code_version: String,
    pub config_digest: String,
    pub shared_seed: u64,
    /// sha256 of each input corpus file, keyed by its role.
    pub corpus_sha256: BTreeMap<String, String>,
    pub stopwords_sha256: String,
    pub embeddings_sha256: Option<String>,
    /// The effective config after flag overrides.
    pub config: serde_json::Value,
}

pub fn file_sha256(path: &Path) -> io::Result<String> {
    let mut r = BufReader::new(File::open(path)?);
    let mut h = Sha256::new();
    let mut buf = [0u8; 1 << 16];
    loop {
        let n = r.read(&mut buf)?;
        if n == 0 {
            break;
        }
        h.update(&buf[..n]);
    }
    Ok(hex::encode(h.finalize()))
}

impl RunManifest {
    pub fn new(role: &str, cfg: &TrainConfig, corpora: &[(&str, &Path)]) -> io::Result<Self> {
        let mut corpus_sha256 = BTreeMap::new();
        for (name, path) in corpora {
            corpus_sha256.insert(name.to_string(), file_sha256(path)?);
        }
        let embeddings_sha256 = match (cfg.embeddings, &cfg.paths.glove) {
            (EmbeddingSource::Glove, Some(p)) => Some(file_sha256(p)?),
            _ => None,
        };
        Ok(Self {
            role: role.to_string(),
            code_version: env!("CARGO_PKG_VERSION").to_string(),
            config_digest: cfg.digest_hex(),
            shared_seed: cfg.shared_seed,
            corpus_sha256,
            stopwords_sha256: stopwords_digest(),
            embeddings_sha256,
            config: serde_json::to_value(cfg).expect("config serializes"),
        })
    }

    pub fn write(&self, dir: &Path) -> io::Result<PathBuf> {
        std::fs::create_dir_all(dir)?;
        let path = dir.join(format!("{}.manifest.json", self.role));
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        std::fs::write(&path, text + "\n")?;
        Ok(path)
    }
}
