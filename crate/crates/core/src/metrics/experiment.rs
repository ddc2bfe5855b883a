//! Parameter sweeps comparing flooding and knowledge routing.
//!
//! | id | sweep                                           |
//! |----|-------------------------------------------------|
//! | 1  | peers 500..=3000 step 500, 10 Super-Peers       |
//! | 2  | 3000 peers, Super-Peers 4..=24                  |
//! | 3  | peers and Super-Peers together, zipped pairs    |
//! | 4  | mean precision vs peers, 10 Super-Peers         |
//!
//! Every point runs the full bootstrap (flood, log, train, evaluate both
//! strategies) and yields one CSV row.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{format_float, format_optional};
use crate::config::{ConfigError, RunConfig};
use crate::routing::{bootstrap_and_run, RoutingError};
use crate::topology::{generate_topology, TopologyError};
use crate::workload::{generate_queries, WorkloadError};

pub const CSV_HEADER: &str =
    "peers,super_peers,flood_messages,flood_mean_completion,bk_messages,bk_mean_completion,bk_mean_precision_pct,tree_accuracy";

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("unknown experiment id {0} (expected 1-4)")]
    UnknownId(u8),
    #[error("invalid experiment: {0}")]
    Invalid(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error(transparent)]
    Workload(#[from] WorkloadError),
    #[error(transparent)]
    Routing(#[from] RoutingError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pairing {
    /// `peer_counts[i]` with `sp_counts[i]`.
    Zip,
    /// Every peer count with every Super-Peer count.
    Cross,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub id: u8,
    pub peer_counts: Vec<usize>,
    pub sp_counts: Vec<usize>,
    pub pairing: Pairing,
    pub base: RunConfig,
    pub seed: u64,
}

const PEER_SWEEP: [usize; 6] = [500, 1000, 1500, 2000, 2500, 3000];

impl ExperimentSpec {
    pub fn standard(id: u8, base: &RunConfig) -> Result<Self, ExperimentError> {
        let (peer_counts, sp_counts, pairing) = match id {
            1 | 4 => (PEER_SWEEP.to_vec(), vec![10], Pairing::Cross),
            2 => (vec![3000], (4..=24).collect(), Pairing::Cross),
            3 => (PEER_SWEEP.to_vec(), vec![4, 8, 12, 16, 20, 24], Pairing::Zip),
            other => return Err(ExperimentError::UnknownId(other)),
        };
        Ok(Self { id, peer_counts, sp_counts, pairing, base: base.clone(), seed: base.seed })
    }

    pub fn points(&self) -> Result<Vec<(usize, usize)>, ExperimentError> {
        if self.peer_counts.is_empty() || self.sp_counts.is_empty() {
            return Err(ExperimentError::Invalid("sweep lists must be nonempty".into()));
        }
        match self.pairing {
            Pairing::Zip => {
                if self.peer_counts.len() != self.sp_counts.len() {
                    return Err(ExperimentError::Invalid(format!(
                        "zipped sweep needs equal lengths, got {} peer counts and {} Super-Peer counts",
                        self.peer_counts.len(),
                        self.sp_counts.len()
                    )));
                }
                Ok(self.peer_counts.iter().copied().zip(self.sp_counts.iter().copied()).collect())
            }
            Pairing::Cross => Ok(self
                .peer_counts
                .iter()
                .flat_map(|p| self.sp_counts.iter().map(move |s| (*p, *s)))
                .collect()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentRow {
    pub peers: usize,
    pub super_peers: usize,
    pub flood_messages: u64,
    pub flood_mean_completion: f64,
    pub bk_messages: u64,
    pub bk_mean_completion: f64,
    pub bk_mean_precision_pct: Option<f64>,
    pub tree_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentTable {
    pub id: u8,
    pub seed: u64,
    pub rows: Vec<ExperimentRow>,
}

impl ExperimentTable {
    pub fn to_csv(&self) -> String {
        let mut out = format!("{CSV_HEADER}\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                r.peers,
                r.super_peers,
                r.flood_messages,
                format_float(r.flood_mean_completion),
                r.bk_messages,
                format_float(r.bk_mean_completion),
                format_optional(r.bk_mean_precision_pct),
                format_float(r.tree_accuracy)
            );
        }
        out
    }

    /// `(file stem, x column, y columns)` for the charts of this experiment.
    pub fn charts(&self) -> Vec<(String, &'static str, Vec<&'static str>)> {
        let x = if self.id == 2 { "super_peers" } else { "peers" };
        let stem = |s: &str| format!("experiment{}_{s}", self.id);
        if self.id == 4 {
            return vec![(stem("precision"), x, vec!["bk_mean_precision_pct"])];
        }
        vec![
            (stem("time"), x, vec!["flood_mean_completion", "bk_mean_completion"]),
            (stem("messages"), x, vec!["flood_messages", "bk_messages"]),
        ]
    }
}

/// Run one sweep point: `peers` peers spread over `super_peers` themes.
pub fn run_point(base: &RunConfig, peers: usize, super_peers: usize, seed: u64) -> Result<ExperimentRow, ExperimentError> {
    let cfg = RunConfig { num_peers: peers, num_themes: super_peers, seed, ..base.clone() };
    cfg.validate()?;
    let topology = generate_topology(&cfg.topology())?;
    let train = generate_queries(&topology, &cfg.training_workload())?;
    let eval = if cfg.eval_on_training { train.clone() } else { generate_queries(&topology, &cfg.eval_workload(peers))? };
    let theta = cfg.theta().map_err(ConfigError::from)?;
    let result = bootstrap_and_run(&topology, &train, &eval, theta, &cfg.tree_params(), cfg.tau, &cfg.latency())?;
    Ok(ExperimentRow {
        peers,
        super_peers,
        flood_messages: result.flooding.total_messages,
        flood_mean_completion: result.flooding.mean_completion,
        bk_messages: result.bk.total_messages,
        bk_mean_completion: result.bk.mean_completion,
        bk_mean_precision_pct: result.bk.mean_precision_pct,
        tree_accuracy: result.training_eval.accuracy,
    })
}

pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentTable, ExperimentError> {
    let points = spec.points()?;
    let run = |&(peers, sps): &(usize, usize)| run_point(&spec.base, peers, sps, spec.seed);
    #[cfg(feature = "parallel")]
    let rows: Result<Vec<_>, _> = {
        use rayon::prelude::*;
        points.par_iter().map(run).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let rows: Result<Vec<_>, _> = points.iter().map(run).collect();
    Ok(ExperimentTable { id: spec.id, seed: spec.seed, rows: rows? })
}
