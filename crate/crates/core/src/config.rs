//! Flat run configuration shared by the CLI, the experiment sweeps and the
//! browser demo. Every key is optional in JSON; unknown keys are rejected.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{DomainError, RelevanceThreshold};
use crate::dtree::{TreeError, TreeParams};
use crate::rng;
use crate::simkern::{KernelError, LatencyConfig};
use crate::topology::{TopologyConfig, TopologyError};
use crate::workload::WorkloadConfig;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config parse error: {0}")]
    Parse(#[from] serde_json::Error),
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error(transparent)]
    Domain(#[from] DomainError),
    #[error(transparent)]
    Tree(#[from] TreeError),
    #[error(transparent)]
    Latency(#[from] KernelError),
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub num_themes: usize,
    pub num_peers: usize,
    pub vocab_size: usize,
    pub expertise_size: usize,
    pub vocab_overlap: f64,
    pub seed: u64,
    pub queries_per_peer: usize,
    /// Evaluation queries per peer; ignored when `eval_on_training` is set.
    pub eval_queries_per_peer: usize,
    /// Evaluate on the training workload instead of a fresh sample.
    pub eval_on_training: bool,
    pub arity: usize,
    pub id_base: u32,
    pub min_instances: usize,
    pub prune: bool,
    pub confidence: f64,
    pub hop_latency: f64,
    pub match_cost: f64,
    pub theta: f64,
    pub tau: f64,
    pub out_dir: Option<String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let topo = TopologyConfig::default();
        let work = WorkloadConfig::default();
        let tree = TreeParams::default();
        let lat = LatencyConfig::default();
        Self {
            num_themes: topo.num_themes,
            num_peers: topo.num_peers,
            vocab_size: topo.vocab_size,
            expertise_size: topo.expertise_size,
            vocab_overlap: topo.vocab_overlap,
            seed: topo.seed,
            queries_per_peer: work.queries_per_peer,
            eval_queries_per_peer: work.queries_per_peer,
            eval_on_training: false,
            arity: work.arity,
            id_base: work.id_base,
            min_instances: tree.min_instances,
            prune: tree.prune,
            confidence: tree.confidence,
            hop_latency: lat.hop_latency,
            match_cost: lat.match_cost,
            theta: RelevanceThreshold::default().value(),
            tau: 0.0,
            out_dir: None,
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.topology().validate()?;
        self.theta()?;
        self.tree_params().validate()?;
        self.latency().validate()?;
        if self.queries_per_peer == 0 || self.arity == 0 {
            return Err(ConfigError::Invalid("queries_per_peer and arity must be positive".into()));
        }
        if !self.eval_on_training && self.eval_queries_per_peer == 0 {
            return Err(ConfigError::Invalid("eval_queries_per_peer must be positive".into()));
        }
        if self.arity > self.expertise_size {
            return Err(ConfigError::Invalid(format!(
                "arity ({}) exceeds expertise_size ({})",
                self.arity, self.expertise_size
            )));
        }
        if !(0.0..=1.0).contains(&self.tau) {
            return Err(ConfigError::Invalid(format!("tau must lie in [0, 1], got {}", self.tau)));
        }
        Ok(())
    }

    pub fn topology(&self) -> TopologyConfig {
        TopologyConfig {
            num_themes: self.num_themes,
            num_peers: self.num_peers,
            vocab_size: self.vocab_size,
            expertise_size: self.expertise_size,
            vocab_overlap: self.vocab_overlap,
            seed: self.seed,
        }
    }

    pub fn training_workload(&self) -> WorkloadConfig {
        WorkloadConfig {
            queries_per_peer: self.queries_per_peer,
            arity: self.arity,
            id_base: self.id_base,
            seed: rng::child_seed(self.seed, "workload/train"),
        }
    }

    /// Evaluation queries continue numbering after the training queries of
    /// a topology with `num_peers` peers.
    pub fn eval_workload(&self, num_peers: usize) -> WorkloadConfig {
        let train_count = (num_peers * self.queries_per_peer) as u32;
        WorkloadConfig {
            queries_per_peer: self.eval_queries_per_peer,
            arity: self.arity,
            id_base: self.id_base + train_count,
            seed: rng::child_seed(self.seed, "workload/eval"),
        }
    }

    pub fn tree_params(&self) -> TreeParams {
        TreeParams { min_instances: self.min_instances, prune: self.prune, confidence: self.confidence }
    }

    pub fn latency(&self) -> LatencyConfig {
        LatencyConfig { hop_latency: self.hop_latency, match_cost: self.match_cost }
    }

    pub fn theta(&self) -> Result<RelevanceThreshold, DomainError> {
        RelevanceThreshold::new(self.theta)
    }
}
