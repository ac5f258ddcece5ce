use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::adversary::{MarketModel, TacticPolicy};
use crate::assignment::DecryptionSet;
use crate::error::{Error, Result};
use crate::routing::{Behavior, RevealPolicy, StampRule, TraversalMode};
use crate::simnet::DelayDistribution;
use crate::types::{SystemParams, Time, TimestampKind};

/// Full description of an experiment. Serialized as TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub params: SystemParams,
    #[serde(default)]
    pub network: NetworkConfig,
    #[serde(default)]
    pub mode: TraversalMode,
    #[serde(default)]
    pub stamp_rule: StampRule,
    #[serde(default = "default_block_interval")]
    pub block_interval: Time,
    #[serde(default)]
    pub workload: WorkloadConfig,
    #[serde(default)]
    pub adversary: AdversaryConfig,
    #[serde(default)]
    pub censorship: CensorshipConfig,
    #[serde(default)]
    pub reveal: Option<RevealPolicy>,
    #[serde(default)]
    pub decryption_set: Option<DecryptionSet>,
    #[serde(default)]
    pub market: Option<MarketModel>,
    #[serde(default = "default_trials")]
    pub trials: u32,
    #[serde(default)]
    pub seed: u64,
}

fn default_block_interval() -> Time {
    100
}

fn default_trials() -> u32 {
    1
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetworkConfig {
    pub min_delay: Time,
    pub distribution: DelayDistribution,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        NetworkConfig { min_delay: 1, distribution: DelayDistribution::Uniform }
    }
}

/// Which paths a client is willing to use. Anything other than `Any` is a
/// scenario knob for targeted experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PathFilter {
    #[default]
    Any,
    /// Every hub but the last is regular.
    RegularPrefix,
    /// The first hub contains at least one corrupted node.
    FirstHubCorrupted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WorkloadConfig {
    /// Number of transactions `T`.
    pub transactions: u32,
    /// Mean gap between submissions; gaps are uniform in `[0, 2 * mean_gap]`.
    pub mean_gap: Time,
    pub payload_len: u32,
    pub hidden_fraction: f64,
    /// Distinct paths per transaction.
    pub paths_per_tx: u32,
    pub path_filter: PathFilter,
}

impl Default for WorkloadConfig {
    fn default() -> Self {
        WorkloadConfig {
            transactions: 100,
            mean_gap: 5,
            payload_len: 250,
            hidden_fraction: 0.0,
            paths_per_tx: 4,
            path_filter: PathFilter::Any,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdversaryConfig {
    /// Corrupt `params.f()` nodes. When false the run is fully honest.
    pub corrupt: bool,
    /// Permit `f > (n-1)/3`.
    pub allow_stress: bool,
    pub behavior: Behavior,
    pub policy: TacticPolicy,
}

impl Default for AdversaryConfig {
    fn default() -> Self {
        AdversaryConfig { corrupt: true, allow_stress: false, behavior: Behavior::default(), policy: TacticPolicy::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case", tag = "model")]
pub enum CensorshipConfig {
    #[default]
    LeaderlessCr,
    /// Uses `params.kappa`.
    Kappa { per_certificate: bool },
    /// Adversarial leader drops certificates of victim transactions with these kinds.
    LeaderCensor { kinds: BTreeSet<TimestampKind> },
}

impl ExperimentConfig {
    pub fn new(params: SystemParams) -> Self {
        ExperimentConfig {
            params,
            network: NetworkConfig::default(),
            mode: TraversalMode::Iterative,
            stamp_rule: StampRule::ThresholdSigner,
            block_interval: default_block_interval(),
            workload: WorkloadConfig::default(),
            adversary: AdversaryConfig::default(),
            censorship: CensorshipConfig::default(),
            reveal: None,
            decryption_set: None,
            market: None,
            trials: 1,
            seed: 0,
        }
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(s)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.adversary.allow_stress {
            self.params.validate()?;
        } else {
            self.params.validate_bft()?;
        }
        if self.block_interval <= 0 {
            return Err(Error::Config("block_interval must be positive".into()));
        }
        if self.network.min_delay < 0 || self.network.min_delay > self.params.delta_net {
            return Err(Error::Config(format!(
                "min_delay {} outside [0, delta_net={}]",
                self.network.min_delay, self.params.delta_net
            )));
        }
        let w = &self.workload;
        if w.mean_gap < 0 || !(0.0..=1.0).contains(&w.hidden_fraction) {
            return Err(Error::Config("workload gap must be >= 0 and hidden_fraction in [0,1]".into()));
        }
        if w.paths_per_tx > self.params.paths_per_block() {
            return Err(Error::Config(format!(
                "paths_per_tx {} exceeds paths_per_block {}",
                w.paths_per_tx,
                self.params.paths_per_block()
            )));
        }
        if w.payload_len == 0 {
            return Err(Error::Config("payload_len must be positive".into()));
        }
        if w.hidden_fraction > 0.0 && self.reveal.as_ref().is_none_or(|r| r.decrypt_hub_indices.is_empty()) {
            return Err(Error::Config("hidden transactions need a reveal policy with decryption hubs".into()));
        }
        if let Some(r) = &self.reveal {
            if r.decrypt_hub_indices.iter().any(|&j| j >= self.params.k) {
                return Err(Error::Config("decryption hub index beyond path length".into()));
            }
        }
        if let Some(set) = &self.decryption_set {
            set.validate(&self.params)?;
        }
        if self.trials == 0 {
            return Err(Error::Config("trials must be at least 1".into()));
        }
        Ok(())
    }
}
