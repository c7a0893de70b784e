use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use maia2::eval::EvalConfig;
use maia2::model::ModelConfig;
use maia2::pipeline::{BalancerConfig, BucketScheme, FilterConfig, IngestConfig};
use maia2::probes::ProbeConfig;
use maia2::trainer::{GradCheckConfig, OptimizerConfig};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::Usage;

/// External engine settings. Without `path` (or a replay cache) the
/// engine-backed metrics and concepts are skipped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EngineConfig {
    pub path: Option<String>,
    pub args: Vec<String>,
    pub timeout_secs: u64,
    /// Evaluation cache (JSONL); misses are appended when an engine runs.
    pub cache: Option<PathBuf>,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            path: None,
            args: Vec::new(),
            timeout_secs: 60,
            cache: None,
        }
    }
}

/// The whole run configuration, one TOML file. Every key is optional.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// The only seed; module seeds are derived from it.
    pub seed: u64,
    pub bucket_scheme: BucketScheme,
    pub filter: FilterConfig,
    pub balancer: BalancerConfig,
    pub model: ModelConfig,
    pub optimizer: OptimizerConfig,
    pub eval: EvalConfig,
    pub probe: ProbeConfig,
    pub gradcheck: GradCheckConfig,
    pub engine: EngineConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            bucket_scheme: BucketScheme::Standard,
            filter: FilterConfig::default(),
            balancer: BalancerConfig::default(),
            model: ModelConfig::default(),
            optimizer: OptimizerConfig::default(),
            eval: EvalConfig::default(),
            probe: ProbeConfig::default(),
            gradcheck: GradCheckConfig::default(),
            engine: EngineConfig::default(),
        }
    }
}

/// Per-module seed: the low 63 bits of sha256("<seed>/<module>"), so it
/// stays a valid TOML integer.
pub fn derive_seed(seed: u64, module: &str) -> u64 {
    let digest = Sha256::digest(format!("{seed}/{module}").as_bytes());
    u64::from_le_bytes(digest[..8].try_into().expect("eight bytes")) >> 1
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<RunConfig> {
        let raw = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
                toml::from_str::<RunConfig>(&text).map_err(|e| Usage(format!("config {}: {e}", p.display())))?
            }
            None => RunConfig::default(),
        };
        raw.resolve()
    }

    /// Validates the sections and fans the seed and bucket scheme out.
    pub fn resolve(mut self) -> Result<RunConfig> {
        // module seeds may only repeat their derived value (as in a written
        // config.toml)
        let seeded = [
            ("balancer.seed", self.balancer.seed, "balancer"),
            ("optimizer.seed", self.optimizer.seed, "trainer"),
            ("gradcheck.seed", self.gradcheck.seed, "gradcheck"),
        ];
        for (key, v, module) in seeded {
            if v != 0 && v != derive_seed(self.seed, module) {
                bail!(Usage(format!("{key} is derived from the top-level seed; set `seed` instead")));
            }
        }
        if self.eval.bucket_scheme != BucketScheme::default() && self.eval.bucket_scheme != self.bucket_scheme {
            bail!(Usage("eval.bucket_scheme must match the top-level bucket_scheme".into()));
        }
        self.eval.bucket_scheme = self.bucket_scheme;
        if self.model.buckets != self.bucket_scheme.bucket_count() {
            bail!(Usage(format!(
                "model.buckets is {} but the {:?} scheme has {} buckets",
                self.model.buckets,
                self.bucket_scheme,
                self.bucket_scheme.bucket_count()
            )));
        }
        let checks = [
            ("filter", self.filter.validate()),
            ("balancer", self.balancer.validate()),
            ("model", self.model.validate()),
            ("optimizer", self.optimizer.validate()),
        ];
        for (section, r) in checks {
            if let Err(e) = r {
                bail!(Usage(format!("[{section}] {e}")));
            }
        }
        self.balancer.seed = derive_seed(self.seed, "balancer");
        self.optimizer.seed = derive_seed(self.seed, "trainer");
        self.gradcheck.seed = derive_seed(self.seed, "gradcheck");
        Ok(self)
    }

    pub fn probe_seed(&self) -> u64 {
        derive_seed(self.seed, "probes")
    }

    pub fn ingest(&self) -> IngestConfig {
        IngestConfig {
            filter: self.filter,
            balancer: self.balancer,
            scheme: self.bucket_scheme,
        }
    }

    /// sha256 of the resolved configuration's JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        format!("{:x}", Sha256::digest(&json))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let cfg: RunConfig = toml::from_str("").unwrap();
        assert_eq!(cfg, RunConfig::default());
        assert_eq!(cfg.optimizer.learning_rate, 1e-4);
        assert_eq!(cfg.model.skill_dim, 128);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(toml::from_str::<RunConfig>("sead = 3").is_err());
        assert!(toml::from_str::<RunConfig>("[optimizer]\nlr = 0.1").is_err());
        assert!(toml::from_str::<RunConfig>("[model]\nheads = 4").is_ok());
    }

    #[test]
    fn seeds_fan_out_and_module_seeds_are_refused() {
        let a = RunConfig { seed: 1, ..Default::default() }.resolve().unwrap();
        let b = RunConfig { seed: 2, ..Default::default() }.resolve().unwrap();
        assert_ne!(a.optimizer.seed, b.optimizer.seed);
        assert_ne!(a.optimizer.seed, a.gradcheck.seed);
        assert_eq!(a.optimizer.seed, derive_seed(1, "trainer"));
        let mut c = RunConfig::default();
        c.optimizer.seed = 9;
        assert!(c.resolve().is_err());
        let again: RunConfig = toml::from_str(&toml::to_string(&a).unwrap()).unwrap();
        assert_eq!(again.resolve().unwrap(), a);
    }

    #[test]
    fn hash_tracks_content() {
        let a = RunConfig::default().resolve().unwrap();
        let mut b = a.clone();
        assert_eq!(a.hash(), b.hash());
        b.filter.min_ply += 1;
        assert_ne!(a.hash(), b.hash());
    }

    #[test]
    fn scheme_and_bucket_count_must_agree() {
        let cfg = RunConfig {
            bucket_scheme: BucketScheme::Extended,
            ..Default::default()
        };
        assert!(cfg.clone().resolve().is_err());
        let mut ok = cfg;
        ok.model.buckets = 12;
        assert_eq!(ok.resolve().unwrap().eval.bucket_scheme, BucketScheme::Extended);
    }
}
