//! Run manifests: every command hashes its canonicalized configuration
//! into a digest, stamps that digest into each output file, and writes a
//! manifest JSON next to the outputs. Reruns with an equal digest
//! reproduce the data files bit-for-bit on one platform (the manifest
//! itself carries wall-clock timing and is excluded from that contract).

use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::Result;
use serde::Serialize;
use sha2::{Digest, Sha256};

pub fn digest_of(canonical: &str) -> String {
    hex::encode(Sha256::digest(canonical.as_bytes()))
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub config_digest: String,
    pub seeds: Vec<u64>,
    pub artifact_version: String,
    pub wall_clock_secs: f64,
    pub outputs: Vec<String>,
}

/// Collects outputs while a command runs, then freezes the manifest.
pub struct ManifestBuilder {
    command: String,
    config_digest: String,
    seeds: Vec<u64>,
    started: Instant,
    outputs: Vec<PathBuf>,
}

impl ManifestBuilder {
    pub fn new(command: &str, canonical_config: &str, seeds: Vec<u64>) -> Self {
        Self {
            command: command.to_string(),
            config_digest: digest_of(canonical_config),
            seeds,
            started: Instant::now(),
            outputs: Vec::new(),
        }
    }

    pub fn digest(&self) -> &str {
        &self.config_digest
    }

    pub fn record(&mut self, path: PathBuf) {
        self.outputs.push(path);
    }

    /// Write `<stem>.manifest.json` into `dir` and return all artifacts
    /// (outputs first, manifest last).
    pub fn finish(self, dir: &Path, stem: &str) -> Result<Vec<PathBuf>> {
        let manifest = RunManifest {
            command: self.command,
            config_digest: self.config_digest,
            seeds: self.seeds,
            artifact_version: env!("CARGO_PKG_VERSION").to_string(),
            wall_clock_secs: self.started.elapsed().as_secs_f64(),
            outputs: self.outputs.iter().map(|p| p.display().to_string()).collect(),
        };
        let path = dir.join(format!("{stem}.manifest.json"));
        std::fs::write(&path, serde_json::to_string_pretty(&manifest)?)?;
        let mut all = self.outputs;
        all.push(path);
        Ok(all)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn digest_is_deterministic_and_content_sensitive() {
        let a = digest_of("mode=garch seeds=1,2");
        let b = digest_of("mode=garch seeds=1,2");
        let c = digest_of("mode=garch seeds=1,3");
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_eq!(a.len(), 64);
    }

    #[test]
    fn manifest_written_with_outputs() {
        let dir = tempfile::tempdir().unwrap();
        let mut builder = ManifestBuilder::new("simulate", "cfg", vec![1, 2]);
        builder.record(dir.path().join("a.csv"));
        let files = builder.finish(dir.path(), "run").unwrap();
        assert_eq!(files.len(), 2);
        let text = std::fs::read_to_string(dir.path().join("run.manifest.json")).unwrap();
        assert!(text.contains("\"command\": \"simulate\""));
        assert!(text.contains("a.csv"));
    }
}
