//! Query generation: every peer submits `N` queries whose components are drawn
//! from its own expertise.

use rand::seq::index;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{PeerId, Query, QueryId};
use crate::rng;
use crate::topology::Topology;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum WorkloadError {
    #[error("query arity {arity} exceeds expertise size {expertise} of peer {peer}")]
    ArityExceedsExpertise { peer: PeerId, arity: usize, expertise: usize },
    #[error("invalid workload config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorkloadConfig {
    pub queries_per_peer: usize,
    pub arity: usize,
    /// Index of the first generated query id.
    pub id_base: u32,
    pub seed: u64,
}

impl Default for WorkloadConfig {
    fn default() -> Self {
        Self { queries_per_peer: 10, arity: 4, id_base: 10, seed: 7 }
    }
}

/// A generated query list plus the config that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Workload {
    pub config: WorkloadConfig,
    pub queries: Vec<Query>,
}

pub fn generate_queries(topology: &Topology, cfg: &WorkloadConfig) -> Result<Vec<Query>, WorkloadError> {
    if cfg.queries_per_peer == 0 || cfg.arity == 0 {
        return Err(WorkloadError::InvalidConfig("queries_per_peer and arity must be positive".into()));
    }
    if let Some(p) = topology.peers.values().find(|p| p.expertise.len() < cfg.arity) {
        return Err(WorkloadError::ArityExceedsExpertise { peer: p.id, arity: cfg.arity, expertise: p.expertise.len() });
    }
    let mut rng = rng::stream(cfg.seed, "workload");
    let mut next_id = cfg.id_base;
    let mut queries = Vec::with_capacity(topology.num_peers() * cfg.queries_per_peer);
    // BTreeMap iteration gives ascending peer index.
    for peer in topology.peers.values() {
        let tokens = peer.expertise.tokens();
        for _ in 0..cfg.queries_per_peer {
            let components = index::sample(&mut rng, tokens.len(), cfg.arity).into_iter().map(|i| tokens[i].clone()).collect();
            queries.push(Query { id: QueryId(next_id), components, origin: peer.id });
            next_id += 1;
        }
    }
    Ok(queries)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{is_relevant, RelevanceThreshold};
    use crate::topology::{generate_topology, TopologyConfig};

    #[test]
    fn one_batch_per_peer_from_own_expertise() {
        let topo = generate_topology(&TopologyConfig::default()).unwrap();
        let qs = generate_queries(&topo, &WorkloadConfig::default()).unwrap();
        assert_eq!(qs.len(), 5000);
        assert_eq!(qs[0].id, QueryId(10));
        assert_eq!(qs[4999].id, QueryId(5009));
        let theta = RelevanceThreshold::new(1.0).unwrap();
        for q in &qs {
            assert_eq!(q.arity(), 4);
            for (i, c) in q.components.iter().enumerate() {
                assert!(!q.components[..i].contains(c));
            }
            assert!(is_relevant(&topo.peer(q.origin).unwrap().expertise, q, theta));
        }
        // Peers are visited in ascending id order.
        assert!(qs.windows(2).all(|w| w[0].origin <= w[1].origin));
    }

    #[test]
    fn deterministic_per_seed() {
        let topo = generate_topology(&TopologyConfig { num_peers: 20, ..TopologyConfig::default() }).unwrap();
        let cfg = WorkloadConfig::default();
        assert_eq!(generate_queries(&topo, &cfg).unwrap(), generate_queries(&topo, &cfg).unwrap());
        let other = WorkloadConfig { seed: 99, ..cfg.clone() };
        assert_ne!(generate_queries(&topo, &cfg).unwrap(), generate_queries(&topo, &other).unwrap());
    }

    #[test]
    fn arity_larger_than_expertise_fails() {
        let topo = generate_topology(&TopologyConfig { num_peers: 10, expertise_size: 3, ..TopologyConfig::default() }).unwrap();
        let err = generate_queries(&topo, &WorkloadConfig::default()).unwrap_err();
        assert!(matches!(err, WorkloadError::ArityExceedsExpertise { arity: 4, expertise: 3, .. }));
    }
}
