use std::path::Path;

use agtrade_core::eml::{ClusterK, EmlConfig, TrainingCluster};
use agtrade_core::rules::MiningConfig;
use agtrade_core::sentinel::{FlagConfig, MadConfig};
use agtrade_core::trees::BoostConfig;
use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IngestSection {
    /// Chapters with a pair-year value at or below this are left out of baskets.
    pub min_value: f64,
}

impl Default for IngestSection {
    fn default() -> Self {
        IngestSection { min_value: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClusterSection {
    pub k_min: usize,
    pub k_max: usize,
    pub seeds_per_k: usize,
}

impl Default for ClusterSection {
    fn default() -> Self {
        ClusterSection { k_min: 2, k_max: 10, seeds_per_k: 5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmlSection {
    pub cluster_k: ClusterK,
    pub training_cluster: TrainingCluster,
    pub commodity: Option<String>,
    pub holdout_fraction: f64,
}

impl Default for EmlSection {
    fn default() -> Self {
        let d = EmlConfig::default();
        EmlSection {
            cluster_k: d.cluster_k,
            training_cluster: d.training_cluster,
            commodity: d.commodity,
            holdout_fraction: d.holdout_fraction,
        }
    }
}

/// Everything that shapes results. Input and output paths are deliberately
/// absent so the config hash only tracks algorithm settings.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub ingest: IngestSection,
    pub mining: MiningConfig,
    pub cluster: ClusterSection,
    pub boost: BoostConfig,
    pub eml: EmlSection,
    pub mad: MadConfig,
    pub flags: FlagConfig,
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else { return Ok(RunConfig::default()) };
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    /// First 12 hex digits of the SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(canonical.as_bytes()))[..12].to_string()
    }

    pub fn eml_config(&self) -> EmlConfig {
        EmlConfig {
            cluster_k: self.eml.cluster_k,
            k_min: self.cluster.k_min,
            k_max: self.cluster.k_max,
            seeds_per_k: self.cluster.seeds_per_k,
            training_cluster: self.eml.training_cluster,
            commodity: self.eml.commodity.clone(),
            holdout_fraction: self.eml.holdout_fraction,
            seed: self.seed,
            boost: BoostConfig { seed: self.seed, ..self.boost.clone() },
        }
    }
}
