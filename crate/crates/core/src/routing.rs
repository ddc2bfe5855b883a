//! Query routing over the event kernel.
//!
//! Flooding: origin → home SP, home SP → every other SP, each SP matches its
//! members, each SP with at least one relevant member sends one aggregate
//! answer back to the origin.
//!
//! Knowledge: origin → home SP → SSP; the SSP predicts a distribution over
//! Super-Peers with the decision tree and forwards the query to every
//! candidate with probability at least `tau` (the most likely one always);
//! candidates match and answer as above.
//!
//! Each hop costs `hop_latency`; matching at an SP costs `match_cost` per
//! member. A query's completion time is the arrival of its last answer, or,
//! when nobody answered, the end of its last local match.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::arff::{records_to_training, LogRecord};
use crate::domain::{meets_threshold, ComponentToken, PeerId, Query, QueryId, RelevanceThreshold, SuperPeerId};
use crate::dtree::{build_tree, evaluate, predict_distribution, DecisionTree, EvalReport, TreeError, TreeParams};
use crate::metrics::MetricsReport;
use crate::simkern::{EventKind, Handler, Kernel, KernelError, LatencyConfig, Scheduler, SimEvent, SimTime, TraceEntry};
use crate::topology::Topology;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RoutingError {
    #[error("knowledge routing requires a Super-Super-Peer")]
    MissingSsp,
    #[error("knowledge routing requires a trained tree")]
    UntrainedTree,
    #[error("query {query} originates at unknown peer {origin}")]
    UnknownOrigin { query: QueryId, origin: PeerId },
    #[error("tree predicts {0}, which is not in the topology")]
    UnknownCandidate(SuperPeerId),
    #[error("tau must lie in [0, 1], got {0}")]
    InvalidTau(f64),
    #[error("training workload is empty")]
    EmptyWorkload,
    #[error(transparent)]
    Tree(#[from] TreeError),
    #[error(transparent)]
    Kernel(#[from] KernelError),
}

#[derive(Debug, Clone, PartialEq)]
pub enum RoutingStrategy {
    Flooding,
    Knowledge { tree: DecisionTree, tau: f64 },
}

impl RoutingStrategy {
    pub fn name(&self) -> &'static str {
        match self {
            RoutingStrategy::Flooding => "flooding",
            RoutingStrategy::Knowledge { .. } => "bk",
        }
    }
}

/// Event destinations.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Node {
    Peer(PeerId),
    SuperPeer(SuperPeerId),
    Ssp,
}

impl fmt::Display for Node {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Node::Peer(p) => write!(f, "{p}"),
            Node::SuperPeer(sp) => write!(f, "{sp}"),
            Node::Ssp => f.write_str("SSP"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Msg {
    Issue(usize),
    Submit(usize),
    ToSsp(usize),
    Forward(usize),
    MatchDone(usize),
    Answer { query: usize, from: SuperPeerId, peers: Vec<PeerId> },
}

impl EventKind for Msg {
    fn kind(&self) -> &'static str {
        match self {
            Msg::Issue(_) => "issue",
            Msg::Submit(_) => "submit",
            Msg::ToSsp(_) => "to_ssp",
            Msg::Forward(_) => "forward",
            Msg::MatchDone(_) => "match_done",
            Msg::Answer { .. } => "answer",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QueryOutcome {
    pub query: QueryId,
    /// Super-Peers that matched the query against their members.
    pub contacted_sps: BTreeSet<SuperPeerId>,
    /// Sorted by Super-Peer, then peer; no duplicates.
    pub answers: Vec<(SuperPeerId, PeerId)>,
    pub messages: u64,
    pub completion: SimTime,
}

impl QueryOutcome {
    pub fn answer_peers(&self) -> BTreeSet<PeerId> {
        self.answers.iter().map(|a| a.1).collect()
    }

    pub fn answering_sps(&self) -> BTreeSet<SuperPeerId> {
        self.answers.iter().map(|a| a.0).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioOutput {
    pub outcomes: Vec<QueryOutcome>,
    /// One row per (query, answering peer), in query order.
    pub log: Vec<LogRecord>,
    pub events: u64,
    pub end_time: SimTime,
    /// Empty unless the run was traced.
    pub trace: Vec<TraceEntry<Node>>,
}

impl ScenarioOutput {
    pub fn total_messages(&self) -> u64 {
        self.outcomes.iter().map(|o| o.messages).sum()
    }
}

/// A Super-Peer's local index over its members' expertise.
struct LocalIndex {
    id: SuperPeerId,
    members: Vec<PeerId>,
    postings: HashMap<ComponentToken, Vec<u32>>,
    hits: Vec<u32>,
    touched: Vec<u32>,
}

impl LocalIndex {
    fn build(topology: &Topology, sp: usize) -> Self {
        let node = &topology.super_peers[sp];
        let mut members = node.members.clone();
        members.sort_unstable();
        let mut postings: HashMap<ComponentToken, Vec<u32>> = HashMap::new();
        for (slot, m) in members.iter().enumerate() {
            if let Some(peer) = topology.peer(*m) {
                for t in peer.expertise.tokens() {
                    postings.entry(t.clone()).or_default().push(slot as u32);
                }
            }
        }
        Self { id: node.id, hits: vec![0; members.len()], members, postings, touched: Vec::new() }
    }

    /// Members whose expertise holds at least `theta` of the components, ascending.
    fn matching(&mut self, components: &[ComponentToken], theta: RelevanceThreshold) -> Vec<PeerId> {
        for c in components {
            if let Some(slots) = self.postings.get(c) {
                for &s in slots {
                    let h = &mut self.hits[s as usize];
                    if *h == 0 {
                        self.touched.push(s);
                    }
                    *h = h.saturating_add(1);
                }
            }
        }
        self.touched.sort_unstable();
        let mut out = Vec::new();
        for &s in &self.touched {
            if meets_threshold(self.hits[s as usize] as usize, components.len(), theta) {
                out.push(self.members[s as usize]);
            }
            self.hits[s as usize] = 0;
        }
        self.touched.clear();
        out
    }
}

#[derive(Default)]
struct QueryState {
    messages: u64,
    contacted: BTreeSet<SuperPeerId>,
    answers: Vec<(SuperPeerId, PeerId)>,
    last_answer: Option<SimTime>,
    last_match: SimTime,
}

struct Overlay<'a> {
    queries: &'a [Query],
    homes: Vec<usize>,
    theta: RelevanceThreshold,
    lat: LatencyConfig,
    indexes: Vec<LocalIndex>,
    /// Per query, the Super-Peers the SSP forwards to; `None` under flooding.
    candidates: Option<Vec<Vec<usize>>>,
    state: Vec<QueryState>,
}

impl Overlay<'_> {
    fn send(&mut self, sched: &mut Scheduler<Node, Msg>, query: usize, dst: Node, msg: Msg) {
        self.state[query].messages += 1;
        sched.schedule_after(self.lat.hop_latency, dst, msg).expect("latency validated");
    }

    fn start_match(&mut self, sched: &mut Scheduler<Node, Msg>, query: usize, sp: usize) {
        let index = &self.indexes[sp];
        self.state[query].contacted.insert(index.id);
        let cost = self.lat.match_cost * index.members.len() as f64;
        sched.schedule_after(cost, Node::SuperPeer(index.id), Msg::MatchDone(query)).expect("latency validated");
    }
}

impl Handler<Node, Msg> for Overlay<'_> {
    fn handle(&mut self, event: SimEvent<Node, Msg>, sched: &mut Scheduler<Node, Msg>) {
        match (event.dst, event.payload) {
            (Node::Peer(_), Msg::Issue(q)) => {
                let home = self.indexes[self.homes[q]].id;
                self.send(sched, q, Node::SuperPeer(home), Msg::Submit(q));
            }
            (Node::SuperPeer(sp), Msg::Submit(q)) => {
                let here = sp.index() as usize;
                if self.candidates.is_some() {
                    self.send(sched, q, Node::Ssp, Msg::ToSsp(q));
                } else {
                    for other in 0..self.indexes.len() {
                        if other != here {
                            let id = self.indexes[other].id;
                            self.send(sched, q, Node::SuperPeer(id), Msg::Forward(q));
                        }
                    }
                    self.start_match(sched, q, here);
                }
            }
            (Node::Ssp, Msg::ToSsp(q)) => {
                let targets = self.candidates.as_ref().map(|c| c[q].clone()).unwrap_or_default();
                for sp in targets {
                    let id = self.indexes[sp].id;
                    self.send(sched, q, Node::SuperPeer(id), Msg::Forward(q));
                }
            }
            (Node::SuperPeer(sp), Msg::Forward(q)) => self.start_match(sched, q, sp.index() as usize),
            (Node::SuperPeer(sp), Msg::MatchDone(q)) => {
                let now = sched.now();
                let state = &mut self.state[q];
                state.last_match = state.last_match.max(now);
                let peers = self.indexes[sp.index() as usize].matching(&self.queries[q].components, self.theta);
                if !peers.is_empty() {
                    let origin = self.queries[q].origin;
                    self.send(sched, q, Node::Peer(origin), Msg::Answer { query: q, from: sp, peers });
                }
            }
            (Node::Peer(_), Msg::Answer { query, from, peers }) => {
                let state = &mut self.state[query];
                state.answers.extend(peers.into_iter().map(|p| (from, p)));
                state.last_answer = Some(sched.now());
            }
            (dst, msg) => unreachable!("{} delivered to {dst}", msg.kind()),
        }
    }
}

pub fn run_scenario(
    topology: &Topology,
    queries: &[Query],
    strategy: &RoutingStrategy,
    theta: RelevanceThreshold,
    lat: &LatencyConfig,
) -> Result<ScenarioOutput, RoutingError> {
    run(topology, queries, strategy, theta, lat, false)
}

/// As [`run_scenario`], recording one trace entry per delivered event.
pub fn run_scenario_traced(
    topology: &Topology,
    queries: &[Query],
    strategy: &RoutingStrategy,
    theta: RelevanceThreshold,
    lat: &LatencyConfig,
) -> Result<ScenarioOutput, RoutingError> {
    run(topology, queries, strategy, theta, lat, true)
}

fn knowledge_candidates(
    topology: &Topology,
    queries: &[Query],
    tree: &DecisionTree,
    tau: f64,
) -> Result<Vec<Vec<usize>>, RoutingError> {
    if !topology.ssp_present {
        return Err(RoutingError::MissingSsp);
    }
    if !(0.0..=1.0).contains(&tau) {
        return Err(RoutingError::InvalidTau(tau));
    }
    if tree.total_weight() <= 0.0 {
        return Err(RoutingError::UntrainedTree);
    }
    let mut memo: HashMap<&[ComponentToken], Vec<usize>> = HashMap::new();
    let mut out = Vec::with_capacity(queries.len());
    for q in queries {
        if let Some(hit) = memo.get(q.components.as_slice()) {
            out.push(hit.clone());
            continue;
        }
        let prediction = predict_distribution(tree, &q.components)?;
        let mut targets = Vec::new();
        for sp in prediction.above(tau) {
            topology.super_peer(sp).ok_or(RoutingError::UnknownCandidate(sp))?;
            targets.push(sp.index() as usize);
        }
        memo.insert(&q.components, targets.clone());
        out.push(targets);
    }
    Ok(out)
}

fn run(
    topology: &Topology,
    queries: &[Query],
    strategy: &RoutingStrategy,
    theta: RelevanceThreshold,
    lat: &LatencyConfig,
    traced: bool,
) -> Result<ScenarioOutput, RoutingError> {
    lat.validate()?;
    let mut homes = Vec::with_capacity(queries.len());
    for q in queries {
        let peer = topology.peer(q.origin).ok_or(RoutingError::UnknownOrigin { query: q.id, origin: q.origin })?;
        homes.push(peer.home.index() as usize);
    }
    let candidates = match strategy {
        RoutingStrategy::Flooding => None,
        RoutingStrategy::Knowledge { tree, tau } => Some(knowledge_candidates(topology, queries, tree, *tau)?),
    };

    let mut overlay = Overlay {
        queries,
        homes,
        theta,
        lat: *lat,
        indexes: (0..topology.num_super_peers()).map(|sp| LocalIndex::build(topology, sp)).collect(),
        candidates,
        state: (0..queries.len()).map(|_| QueryState::default()).collect(),
    };

    let mut kernel: Kernel<Node, Msg> = if traced { Kernel::with_trace() } else { Kernel::new() };
    for (i, q) in queries.iter().enumerate() {
        kernel.schedule(SimTime::ZERO, Node::Peer(q.origin), Msg::Issue(i))?;
    }
    let end_time = kernel.run_until_idle(&mut overlay);
    debug_assert_eq!(kernel.processed(), kernel.scheduled());

    let mut outcomes = Vec::with_capacity(queries.len());
    let mut log = Vec::new();
    for (q, mut state) in queries.iter().zip(overlay.state) {
        state.answers.sort_unstable();
        state.answers.dedup();
        if !state.answers.is_empty() {
            let components: Arc<[ComponentToken]> = q.components.clone().into();
            log.extend(state.answers.iter().map(|(sp, peer)| LogRecord {
                answering_sp: *sp,
                query: q.id,
                components: components.clone(),
                answering_peer: *peer,
            }));
        }
        outcomes.push(QueryOutcome {
            query: q.id,
            contacted_sps: state.contacted,
            completion: state.last_answer.unwrap_or(state.last_match),
            answers: state.answers,
            messages: state.messages,
        });
    }
    Ok(ScenarioOutput { outcomes, log, events: kernel.processed(), end_time, trace: kernel.take_trace() })
}

#[derive(Debug, Clone, PartialEq)]
pub struct BootstrapResult {
    pub flooding: MetricsReport,
    pub bk: MetricsReport,
    pub tree: DecisionTree,
    /// The trained tree evaluated on its own training log.
    pub training_eval: EvalReport,
    pub train_log: Vec<LogRecord>,
    pub flooding_outcomes: Vec<QueryOutcome>,
    pub bk_outcomes: Vec<QueryOutcome>,
}

/// Flood the training workload to build the global log, train the tree on
/// it, then run the evaluation workload under both strategies.
#[allow(clippy::too_many_arguments)]
pub fn bootstrap_and_run(
    topology: &Topology,
    queries_train: &[Query],
    queries_eval: &[Query],
    theta: RelevanceThreshold,
    params: &TreeParams,
    tau: f64,
    lat: &LatencyConfig,
) -> Result<BootstrapResult, RoutingError> {
    if queries_train.is_empty() {
        return Err(RoutingError::EmptyWorkload);
    }
    let phase1 = run_scenario(topology, queries_train, &RoutingStrategy::Flooding, theta, lat)?;
    let training = records_to_training(&phase1.log);
    let tree = build_tree(&training, params)?;
    let training_eval = evaluate(&tree, &training)?;
    drop(training);

    let flood = run_scenario(topology, queries_eval, &RoutingStrategy::Flooding, theta, lat)?;
    let strategy = RoutingStrategy::Knowledge { tree, tau };
    let bk = run_scenario(topology, queries_eval, &strategy, theta, lat)?;
    let RoutingStrategy::Knowledge { tree, .. } = strategy else { unreachable!() };

    Ok(BootstrapResult {
        flooding: MetricsReport::from_outcomes(&flood.outcomes, &flood.outcomes),
        bk: MetricsReport::from_outcomes(&bk.outcomes, &flood.outcomes),
        tree,
        training_eval,
        train_log: phase1.log,
        flooding_outcomes: flood.outcomes,
        bk_outcomes: bk.outcomes,
    })
}
