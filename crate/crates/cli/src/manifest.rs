use std::path::Path;

use anyhow::{Context, Result};
use serde::Serialize;

use crate::config::RunConfig;

#[derive(Debug, Serialize)]
pub struct Versions {
    pub maia2: &'static str,
    pub shard_format: u32,
    pub checkpoint_format: u32,
}

/// Everything needed to rerun a command: the resolved configuration, its
/// hash, the seeds and the software versions.
#[derive(Debug, Serialize)]
pub struct Manifest<'a> {
    pub command: &'a str,
    pub args: Vec<String>,
    pub config_sha256: String,
    pub seed: u64,
    pub derived_seeds: [(&'static str, u64); 4],
    pub workers: usize,
    pub reference_mode: bool,
    pub versions: Versions,
    pub config: &'a RunConfig,
}

impl<'a> Manifest<'a> {
    pub fn new(command: &'a str, cfg: &'a RunConfig, workers: usize, reference_mode: bool) -> Manifest<'a> {
        Manifest {
            command,
            args: std::env::args().skip(1).collect(),
            config_sha256: cfg.hash(),
            seed: cfg.seed,
            derived_seeds: [
                ("balancer", cfg.balancer.seed),
                ("trainer", cfg.optimizer.seed),
                ("gradcheck", cfg.gradcheck.seed),
                ("probes", cfg.probe_seed()),
            ],
            workers,
            reference_mode,
            versions: Versions {
                maia2: env!("CARGO_PKG_VERSION"),
                shard_format: maia2::pipeline::SHARD_VERSION,
                checkpoint_format: maia2::trainer::CHECKPOINT_VERSION,
            },
            config: cfg,
        }
    }

    /// Writes `manifest.json` and the resolved `config.toml`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        let json = serde_json::to_string_pretty(self)?;
        std::fs::write(dir.join("manifest.json"), json + "\n").context("writing manifest")?;
        let toml = toml::to_string(self.config).context("serializing config")?;
        std::fs::write(dir.join("config.toml"), toml).context("writing resolved config")?;
        Ok(())
    }
}
