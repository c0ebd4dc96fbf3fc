use std::path::Path;

use sha2::{Digest, Sha256};
use volcast::experiment::ExperimentConfig;
use volcast::kv::KvRecord;
use volcast::{Error, Result};

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::Io { path: path.to_path_buf(), source: e })?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Command, version, configuration echo and input hashes.
pub fn manifest(command: &str, cfg: &ExperimentConfig) -> Result<KvRecord> {
    let mut r = KvRecord::new();
    r.set("command", command);
    r.set("version", env!("CARGO_PKG_VERSION"));
    r.extend_prefixed("config", &cfg.to_record());
    r.set("data.sp500.sha256", sha256_file(&cfg.data.sp500)?);
    if let Some(v) = &cfg.data.vix {
        r.set("data.vix.sha256", sha256_file(v)?);
    }
    Ok(r)
}

pub fn write(record: &KvRecord, dir: &Path) -> Result<()> {
    record.write(dir.join("manifest.txt"))
}
