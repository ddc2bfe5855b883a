//! Simulation of query routing in a three-tier super-peer overlay.
//!
//! Peers are grouped by theme under Super-Peers; a single Super-Super-Peer
//! (SSP) learns from the global query log which Super-Peers answer which
//! queries. Two strategies are compared on the same overlay:
//!
//! * **flooding**: every query is broadcast to every Super-Peer;
//! * **knowledge**: the SSP classifies the query with a decision tree and
//!   forwards it only to the predicted Super-Peers.
//!
//! The modules, bottom-up:
//!
//! * [`domain`]: tokens, identifiers, queries, the relevance predicate
//! * [`topology`]: overlay generation and peer join/leave
//! * [`workload`]: expertise-driven query generation
//! * [`dtree`]: gain-ratio tree induction, pruning, prediction
//! * [`arff`]: the global log file format
//! * [`simkern`]: the discrete-event kernel
//! * [`routing`]: both strategies and the bootstrap pipeline
//! * [`metrics`]: precision, aggregates, experiment sweeps, SVG charts

pub mod arff;
pub mod config;
pub mod domain;
pub mod dtree;
pub mod metrics;
pub mod rng;
pub mod routing;
pub mod simkern;
pub mod topology;
pub mod workload;

pub use config::RunConfig;
pub use domain::{ComponentToken, PeerId, Query, QueryId, RelevanceThreshold, SuperPeerId};
pub use dtree::{DecisionTree, TreeParams};
pub use routing::{RoutingStrategy, QueryOutcome};
pub use topology::{Topology, TopologyConfig};
