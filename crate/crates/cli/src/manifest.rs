//! Run directories and manifests.
//!
//! A run directory is content-addressed by the hash of its resolved config
//! plus the seed, so identical requests land in the same place and differing
//! ones can never collide. A completed run always contains the resolved
//! config, the manifest, a final checkpoint and the training log; no command
//! ever mutates a previous run's directory.

use crate::config::RunConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};

pub const RESOLVED_CONFIG_FILE: &str = "config.resolved.json";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const FINAL_CHECKPOINT_FILE: &str = "checkpoint.ssb";
pub const TRAIN_LOG_FILE: &str = "train_log.csv";
pub const CHECKPOINT_DIR: &str = "checkpoints";

/// Hash of the training-relevant config sections and the seed; first 12 hex
/// chars address the run. Evaluation settings and the label stay out of the
/// hash so that test-time protocol changes reuse existing checkpoints.
pub fn config_hash(cfg: &RunConfig, seed: u64) -> String {
    let mut hasher = Sha256::new();
    hasher.update(serde_json::to_vec(&cfg.scenario).expect("config serializes"));
    hasher.update(serde_json::to_vec(&cfg.propagation).expect("config serializes"));
    hasher.update(serde_json::to_vec(&cfg.architecture).expect("config serializes"));
    hasher.update(serde_json::to_vec(&cfg.training).expect("config serializes"));
    hasher.update(seed.to_le_bytes());
    let digest = hasher.finalize();
    let hex: String = digest.iter().map(|b| format!("{b:02x}")).collect();
    hex[..12].to_string()
}

pub fn run_dir(root: &Path, cfg: &RunConfig, seed: u64) -> PathBuf {
    root.join(format!(
        "{}-{}-s{}",
        cfg.effective_label(),
        config_hash(cfg, seed),
        seed
    ))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub seed: u64,
    pub config: RunConfig,
    pub episodes_trained: usize,
    pub wall_clock_s: f64,
    pub files: Vec<String>,
}

impl RunManifest {
    pub fn write(&self, dir: &Path) -> std::io::Result<()> {
        let json = serde_json::to_string_pretty(self).expect("manifest serializes");
        std::fs::write(dir.join(MANIFEST_FILE), json)
    }

    pub fn read(dir: &Path) -> std::io::Result<Self> {
        let text = std::fs::read_to_string(dir.join(MANIFEST_FILE))?;
        serde_json::from_str(&text)
            .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))
    }
}

/// True when the directory holds a completed run (manifest + final
/// checkpoint).
pub fn is_complete(dir: &Path) -> bool {
    dir.join(MANIFEST_FILE).exists() && dir.join(FINAL_CHECKPOINT_FILE).exists()
}

/// Newest periodic checkpoint, if any.
pub fn latest_periodic(dir: &Path) -> Option<PathBuf> {
    let mut newest: Option<(usize, PathBuf)> = None;
    let entries = std::fs::read_dir(dir.join(CHECKPOINT_DIR)).ok()?;
    for entry in entries.flatten() {
        let name = entry.file_name().to_string_lossy().into_owned();
        if let Some(num) = name
            .strip_prefix("ep")
            .and_then(|s| s.strip_suffix(".ssb"))
            .and_then(|s| s.parse::<usize>().ok())
        {
            if newest.as_ref().map(|(n, _)| num > *n).unwrap_or(true) {
                newest = Some((num, entry.path()));
            }
        }
    }
    newest.map(|(_, p)| p)
}

pub fn version_string() -> String {
    format!("specshare {}", env!("CARGO_PKG_VERSION"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hash_distinguishes_configs_and_seeds() {
        let a = RunConfig::default();
        let mut b = RunConfig::default();
        b.architecture.n_k = 2;
        assert_ne!(config_hash(&a, 1), config_hash(&b, 1));
        assert_ne!(config_hash(&a, 1), config_hash(&a, 2));
        assert_eq!(config_hash(&a, 1), config_hash(&a, 1));
    }

    #[test]
    fn hash_ignores_test_time_protocol() {
        let a = RunConfig::default();
        let mut b = RunConfig::default();
        b.evaluation.feedback_interval = 10;
        b.evaluation.input_noise_ratio = 0.5;
        b.label = "renamed".into();
        assert_eq!(config_hash(&a, 1), config_hash(&b, 1));
    }
}
