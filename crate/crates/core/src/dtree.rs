//! Decision-tree induction over nominal attributes.
//!
//! Features are the query components `componentW1..componentW_A`; the class is
//! the Super-Peer that answered. Induction is greedy and top-down with gain
//! ratio as the split criterion, multiway splits (one branch per value seen at
//! the node) and C4.5 pessimistic subtree-replacement pruning.
//!
//! Leaves keep full per-class weights rather than a single label, so the tree
//! predicts a distribution over Super-Peers. Internal nodes keep the summed
//! weights of their subtree (`fallback`), which is used when a query carries a
//! value the node has no branch for.
//!
//! The builder collapses identical `(features, class)` rows into weighted
//! instances before induction. Counts, and therefore every score, are the same
//! as on the expanded rows.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{ComponentToken, SuperPeerId};

/// Class label → instance weight. Only positive weights are stored.
pub type ClassCounts = BTreeMap<SuperPeerId, f64>;

const GAIN_EPSILON: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TreeError {
    #[error("class counts are empty")]
    EmptyCounts,
    #[error("training set is empty")]
    EmptyDataset,
    #[error("record {index} has {found} features, expected {expected}")]
    InconsistentArity { index: usize, expected: usize, found: usize },
    #[error("expected {expected} features, got {found}")]
    ArityMismatch { expected: usize, found: usize },
    #[error("invalid tree parameters: {0}")]
    InvalidParams(String),
    #[error("invalid tree: {0}")]
    InvalidTree(String),
}

/// One training row. Rows produced from the same query share `features`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingRecord {
    pub features: Arc<[ComponentToken]>,
    pub class_label: SuperPeerId,
}

impl TrainingRecord {
    pub fn new(features: Vec<ComponentToken>, class_label: SuperPeerId) -> Self {
        Self { features: features.into(), class_label }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum TreeNode {
    Internal {
        attr: usize,
        fallback: ClassCounts,
        branches: BTreeMap<ComponentToken, TreeNode>,
    },
    Leaf {
        counts: ClassCounts,
    },
}

impl TreeNode {
    /// Weights covered by this node.
    pub fn counts(&self) -> &ClassCounts {
        match self {
            TreeNode::Internal { fallback, .. } => fallback,
            TreeNode::Leaf { counts } => counts,
        }
    }

    pub fn node_count(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 1,
            TreeNode::Internal { branches, .. } => 1 + branches.values().map(TreeNode::node_count).sum::<usize>(),
        }
    }

    pub fn leaf_count(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 1,
            TreeNode::Internal { branches, .. } => branches.values().map(TreeNode::leaf_count).sum(),
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 0,
            TreeNode::Internal { branches, .. } => 1 + branches.values().map(TreeNode::depth).max().unwrap_or(0),
        }
    }

    /// Every internal node's `fallback` equals the sum of its descendant
    /// leaves' counts, and every internal node has at least two branches.
    pub fn check_structure(&self) -> bool {
        self.structure_sum().is_some()
    }

    fn structure_sum(&self) -> Option<ClassCounts> {
        match self {
            TreeNode::Leaf { counts } => Some(counts.clone()),
            TreeNode::Internal { fallback, branches, .. } => {
                if branches.len() < 2 {
                    return None;
                }
                let mut sum = ClassCounts::new();
                for child in branches.values() {
                    for (label, w) in child.structure_sum()? {
                        *sum.entry(label).or_insert(0.0) += w;
                    }
                }
                let same = sum.len() == fallback.len()
                    && sum.iter().all(|(k, v)| fallback.get(k).is_some_and(|f| (f - v).abs() <= 1e-9 * v.max(1.0)));
                same.then_some(sum)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TreeParams {
    pub min_instances: usize,
    pub prune: bool,
    pub confidence: f64,
}

impl Default for TreeParams {
    fn default() -> Self {
        Self { min_instances: 2, prune: true, confidence: 0.25 }
    }
}

impl TreeParams {
    pub fn validate(&self) -> Result<(), TreeError> {
        if self.min_instances == 0 {
            return Err(TreeError::InvalidParams("min_instances must be positive".into()));
        }
        if !(self.confidence > 0.0 && self.confidence < 1.0) {
            return Err(TreeError::InvalidParams(format!("confidence must lie in (0, 1), got {}", self.confidence)));
        }
        Ok(())
    }
}

/// A trained tree plus the names of the attributes it splits on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    pub attributes: Vec<String>,
    pub root: TreeNode,
}

impl DecisionTree {
    pub fn arity(&self) -> usize {
        self.attributes.len()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("tree serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, TreeError> {
        let tree: Self = serde_json::from_str(text).map_err(|e| TreeError::InvalidTree(e.to_string()))?;
        tree.validate()?;
        Ok(tree)
    }

    pub fn validate(&self) -> Result<(), TreeError> {
        fn walk(node: &TreeNode, arity: usize) -> Result<(), TreeError> {
            match node {
                TreeNode::Leaf { counts } => check_counts(counts),
                TreeNode::Internal { attr, fallback, branches } => {
                    if *attr >= arity {
                        return Err(TreeError::InvalidTree(format!("attribute index {attr} out of range")));
                    }
                    check_counts(fallback)?;
                    branches.values().try_for_each(|b| walk(b, arity))
                }
            }
        }
        fn check_counts(counts: &ClassCounts) -> Result<(), TreeError> {
            if counts.values().any(|w| !w.is_finite() || *w < 0.0) {
                return Err(TreeError::InvalidTree("negative or non-finite class weight".into()));
            }
            Ok(())
        }
        walk(&self.root, self.arity())?;
        if !self.root.check_structure() {
            return Err(TreeError::InvalidTree("fallback counts disagree with leaves".into()));
        }
        Ok(())
    }

    /// Total training weight at the root.
    pub fn total_weight(&self) -> f64 {
        self.root.counts().values().sum()
    }
}

pub fn component_attribute_names(arity: usize) -> Vec<String> {
    (1..=arity).map(|i| format!("componentW{i}")).collect()
}

/// Shannon entropy in bits of a weight vector; zero weights are skipped.
pub(crate) fn entropy_of(weights: impl IntoIterator<Item = f64> + Clone) -> f64 {
    let total: f64 = weights.clone().into_iter().filter(|w| *w > 0.0).sum();
    if total <= 0.0 {
        return 0.0;
    }
    weights
        .into_iter()
        .filter(|w| *w > 0.0)
        .map(|w| {
            let p = w / total;
            -p * p.log2()
        })
        .sum()
}

pub fn entropy(class_counts: &ClassCounts) -> Result<f64, TreeError> {
    if !class_counts.values().any(|w| *w > 0.0) {
        return Err(TreeError::EmptyCounts);
    }
    Ok(entropy_of(class_counts.values().copied()))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GainRatio {
    pub gain: f64,
    pub ratio: f64,
}

/// Information gain and gain ratio of splitting `parent` into `children`.
fn split_score(parent: &[f64], children: &[Vec<f64>]) -> GainRatio {
    let total: f64 = parent.iter().sum();
    let weighted_child: f64 = children
        .iter()
        .map(|c| {
            let size: f64 = c.iter().sum();
            size / total * entropy_of(c.iter().copied())
        })
        .sum();
    let gain = (entropy_of(parent.iter().copied()) - weighted_child).max(0.0);
    let split_info = entropy_of(children.iter().map(|c| c.iter().sum::<f64>()));
    let ratio = if split_info > 0.0 { gain / split_info } else { 0.0 };
    GainRatio { gain, ratio }
}

pub fn gain_ratio(records: &[TrainingRecord], attr_index: usize) -> GainRatio {
    let classes: Vec<SuperPeerId> = {
        let mut c: Vec<_> = records.iter().map(|r| r.class_label).collect();
        c.sort_unstable();
        c.dedup();
        c
    };
    let slot = |label: SuperPeerId| classes.binary_search(&label).expect("label collected above");
    let mut parent = vec![0.0; classes.len()];
    let mut by_value: BTreeMap<&ComponentToken, Vec<f64>> = BTreeMap::new();
    for r in records {
        let k = slot(r.class_label);
        parent[k] += 1.0;
        if let Some(v) = r.features.get(attr_index) {
            by_value.entry(v).or_insert_with(|| vec![0.0; classes.len()])[k] += 1.0;
        }
    }
    if records.is_empty() {
        return GainRatio { gain: 0.0, ratio: 0.0 };
    }
    let children: Vec<Vec<f64>> = by_value.into_values().collect();
    split_score(&parent, &children)
}

struct Instance {
    values: Vec<u32>,
    class: usize,
    weight: f64,
}

struct Induction<'a> {
    instances: Vec<Instance>,
    tokens: Vec<ComponentToken>,
    classes: Vec<SuperPeerId>,
    arity: usize,
    params: &'a TreeParams,
}

impl Induction<'_> {
    fn class_weights(&self, members: &[usize]) -> Vec<f64> {
        let mut w = vec![0.0; self.classes.len()];
        for &i in members {
            let inst = &self.instances[i];
            w[inst.class] += inst.weight;
        }
        w
    }

    fn to_counts(&self, weights: &[f64]) -> ClassCounts {
        weights.iter().enumerate().filter(|(_, w)| **w > 0.0).map(|(k, w)| (self.classes[k], *w)).collect()
    }

    /// Members grouped by their value of `attr`, ascending by token id.
    fn partition(&self, members: &[usize], attr: usize) -> BTreeMap<u32, Vec<usize>> {
        let mut parts: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
        for &i in members {
            parts.entry(self.instances[i].values[attr]).or_default().push(i);
        }
        parts
    }

    fn choose_attribute(&self, members: &[usize], parent: &[f64]) -> Option<(usize, BTreeMap<u32, Vec<usize>>)> {
        let mut best: Option<(usize, f64, BTreeMap<u32, Vec<usize>>)> = None;
        let mut first_splittable: Option<(usize, BTreeMap<u32, Vec<usize>>)> = None;
        for attr in 0..self.arity {
            let parts = self.partition(members, attr);
            if parts.len() < 2 {
                continue;
            }
            let children: Vec<Vec<f64>> = parts.values().map(|m| self.class_weights(m)).collect();
            let score = split_score(parent, &children);
            if score.gain > GAIN_EPSILON {
                if best.as_ref().is_none_or(|(_, r, _)| score.ratio > r + GAIN_EPSILON) {
                    best = Some((attr, score.ratio, parts));
                }
            } else if first_splittable.is_none() {
                first_splittable = Some((attr, parts));
            }
        }
        // With no informative attribute left, an impure node is still split on
        // the first attribute that varies, so consistent data is fit exactly.
        best.map(|(a, _, p)| (a, p)).or(first_splittable)
    }

    fn grow(&self, members: &[usize]) -> TreeNode {
        let weights = self.class_weights(members);
        let total: f64 = weights.iter().sum();
        let classes_present = weights.iter().filter(|w| **w > 0.0).count();
        if classes_present <= 1 || total < self.params.min_instances as f64 {
            return TreeNode::Leaf { counts: self.to_counts(&weights) };
        }
        match self.choose_attribute(members, &weights) {
            None => TreeNode::Leaf { counts: self.to_counts(&weights) },
            Some((attr, parts)) => {
                let branches = parts
                    .into_iter()
                    .map(|(value, sub)| (self.tokens[value as usize].clone(), self.grow(&sub)))
                    .collect();
                TreeNode::Internal { attr, fallback: self.to_counts(&weights), branches }
            }
        }
    }
}

pub fn build_tree(records: &[TrainingRecord], params: &TreeParams) -> Result<DecisionTree, TreeError> {
    params.validate()?;
    let first = records.first().ok_or(TreeError::EmptyDataset)?;
    let arity = first.features.len();
    if let Some((index, r)) = records.iter().enumerate().find(|(_, r)| r.features.len() != arity) {
        return Err(TreeError::InconsistentArity { index, expected: arity, found: r.features.len() });
    }

    let mut classes: Vec<SuperPeerId> = records.iter().map(|r| r.class_label).collect();
    classes.sort_unstable();
    classes.dedup();

    let mut token_ids: HashMap<ComponentToken, u32> = HashMap::new();
    let mut tokens: Vec<ComponentToken> = Vec::new();
    let mut aggregated: HashMap<(Vec<u32>, usize), f64> = HashMap::new();
    let mut last: Option<(&Arc<[ComponentToken]>, Vec<u32>)> = None;
    for r in records {
        let values = match &last {
            Some((feats, vals)) if Arc::ptr_eq(feats, &r.features) => vals.clone(),
            _ => r
                .features
                .iter()
                .map(|t| {
                    *token_ids.entry(t.clone()).or_insert_with(|| {
                        tokens.push(t.clone());
                        (tokens.len() - 1) as u32
                    })
                })
                .collect(),
        };
        let class = classes.binary_search(&r.class_label).expect("label collected above");
        *aggregated.entry((values.clone(), class)).or_insert(0.0) += 1.0;
        last = Some((&r.features, values));
    }

    let mut instances: Vec<Instance> =
        aggregated.into_iter().map(|((values, class), weight)| Instance { values, class, weight }).collect();
    // Fixed order keeps floating-point sums reproducible.
    instances.sort_by(|a, b| (&a.values, a.class).cmp(&(&b.values, b.class)));

    let induction = Induction { instances, tokens, classes, arity, params };
    let all: Vec<usize> = (0..induction.instances.len()).collect();
    let mut root = induction.grow(&all);
    if params.prune {
        root = prune_tree(&root, params.confidence);
    }
    Ok(DecisionTree { attributes: component_attribute_names(arity), root })
}

/// Normal deviate for confidence `cf`, interpolated from the C4.5 table.
fn confidence_deviate(cf: f64) -> f64 {
    const VAL: [f64; 9] = [0.0, 0.001, 0.005, 0.01, 0.05, 0.10, 0.20, 0.40, 1.00];
    const DEV: [f64; 9] = [4.0, 3.09, 2.58, 2.33, 1.65, 1.28, 0.84, 0.25, 0.00];
    let mut i = 0;
    while cf > VAL[i] {
        i += 1;
    }
    if i == 0 {
        return DEV[0];
    }
    DEV[i - 1] + (DEV[i] - DEV[i - 1]) * (cf - VAL[i - 1]) / (VAL[i] - VAL[i - 1])
}

/// Extra errors on top of `errors` observed among `n` instances, such that
/// `errors + added_errors` equals `n` times the upper confidence bound of the
/// binomial error rate at confidence `cf`.
pub fn added_errors(n: f64, errors: f64, cf: f64) -> f64 {
    if errors < 1e-6 {
        return n * (1.0 - (cf.ln() / n).exp());
    }
    if errors < 0.9999 {
        let at_zero = n * (1.0 - (cf.ln() / n).exp());
        return at_zero + errors * (added_errors(n, 1.0, cf) - at_zero);
    }
    if errors + 0.5 >= n {
        return 0.67 * (n - errors);
    }
    let z = confidence_deviate(cf);
    let coeff = z * z;
    let e = errors + 0.5;
    let upper = (e + coeff / 2.0 + (coeff * (e * (1.0 - e / n) + coeff / 4.0)).sqrt()) / (n + coeff);
    n * upper - errors
}

fn leaf_estimate(counts: &ClassCounts, cf: f64) -> f64 {
    let n: f64 = counts.values().sum();
    if n <= 0.0 {
        return 0.0;
    }
    let majority = counts.values().copied().fold(0.0, f64::max);
    let errors = n - majority;
    errors + added_errors(n, errors, cf)
}

fn prune_node(node: &TreeNode, cf: f64) -> (TreeNode, f64) {
    match node {
        TreeNode::Leaf { counts } => (node.clone(), leaf_estimate(counts, cf)),
        TreeNode::Internal { attr, fallback, branches } => {
            let mut subtree_estimate = 0.0;
            let mut pruned = BTreeMap::new();
            for (value, child) in branches {
                let (c, est) = prune_node(child, cf);
                subtree_estimate += est;
                pruned.insert(value.clone(), c);
            }
            let as_leaf = leaf_estimate(fallback, cf);
            if as_leaf <= subtree_estimate + 1e-9 {
                (TreeNode::Leaf { counts: fallback.clone() }, as_leaf)
            } else {
                (TreeNode::Internal { attr: *attr, fallback: fallback.clone(), branches: pruned }, subtree_estimate)
            }
        }
    }
}

/// Bottom-up subtree replacement with pessimistic error estimates.
pub fn prune_tree(node: &TreeNode, confidence: f64) -> TreeNode {
    prune_node(node, confidence).0
}

/// Candidate Super-Peers with probabilities, most likely first (ties by id).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PredictionResult {
    pub candidates: Vec<(SuperPeerId, f64)>,
}

impl PredictionResult {
    pub fn from_counts(counts: &ClassCounts) -> Self {
        let total: f64 = counts.values().filter(|w| **w > 0.0).sum();
        let mut candidates: Vec<(SuperPeerId, f64)> =
            counts.iter().filter(|(_, w)| **w > 0.0).map(|(sp, w)| (*sp, w / total)).collect();
        candidates.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        Self { candidates }
    }

    pub fn top(&self) -> Option<SuperPeerId> {
        self.candidates.first().map(|c| c.0)
    }

    /// Candidates with probability at least `tau`; the most likely one is
    /// always included.
    pub fn above(&self, tau: f64) -> Vec<SuperPeerId> {
        let mut out: Vec<SuperPeerId> = self.candidates.iter().filter(|c| c.1 >= tau).map(|c| c.0).collect();
        if out.is_empty() {
            out.extend(self.top());
        }
        out
    }
}

fn reach<'t>(tree: &'t DecisionTree, features: &[ComponentToken]) -> Result<&'t ClassCounts, TreeError> {
    if features.len() != tree.arity() {
        return Err(TreeError::ArityMismatch { expected: tree.arity(), found: features.len() });
    }
    let mut node = &tree.root;
    loop {
        match node {
            TreeNode::Leaf { counts } => return Ok(counts),
            TreeNode::Internal { attr, fallback, branches } => match branches.get(&features[*attr]) {
                Some(child) => node = child,
                None => return Ok(fallback),
            },
        }
    }
}

pub fn predict_distribution(tree: &DecisionTree, features: &[ComponentToken]) -> Result<PredictionResult, TreeError> {
    let counts = reach(tree, features)?;
    if !counts.values().any(|w| *w > 0.0) {
        return Err(TreeError::EmptyCounts);
    }
    Ok(PredictionResult::from_counts(counts))
}

fn majority(counts: &ClassCounts) -> Option<SuperPeerId> {
    // BTreeMap iterates ascending, so `>` keeps the lowest id on ties.
    let mut best: Option<(SuperPeerId, f64)> = None;
    for (sp, w) in counts {
        if *w > 0.0 && best.is_none_or(|(_, bw)| *w > bw) {
            best = Some((*sp, *w));
        }
    }
    best.map(|b| b.0)
}

pub fn classify(tree: &DecisionTree, features: &[ComponentToken]) -> Result<SuperPeerId, TreeError> {
    majority(reach(tree, features)?).ok_or(TreeError::EmptyCounts)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub total: usize,
    pub correct: usize,
    pub accuracy: f64,
    /// `(actual, predicted)` → count.
    pub confusion: BTreeMap<(SuperPeerId, SuperPeerId), usize>,
}

pub fn evaluate(tree: &DecisionTree, records: &[TrainingRecord]) -> Result<EvalReport, TreeError> {
    if records.is_empty() {
        return Err(TreeError::EmptyDataset);
    }
    let mut confusion = BTreeMap::new();
    let mut correct = 0;
    let mut cached: Option<(&Arc<[ComponentToken]>, SuperPeerId)> = None;
    for r in records {
        let predicted = match cached {
            Some((feats, p)) if Arc::ptr_eq(feats, &r.features) => p,
            _ => classify(tree, &r.features)?,
        };
        cached = Some((&r.features, predicted));
        if predicted == r.class_label {
            correct += 1;
        }
        *confusion.entry((r.class_label, predicted)).or_insert(0) += 1;
    }
    Ok(EvalReport { total: records.len(), correct, accuracy: correct as f64 / records.len() as f64, confusion })
}

fn fmt_weight(w: f64) -> String {
    format!("{w:.1}")
}

fn leaf_label(counts: &ClassCounts) -> String {
    let n: f64 = counts.values().sum();
    let label = majority(counts).map_or_else(|| "?".to_string(), |sp| sp.to_string());
    let errors = n - counts.values().copied().fold(0.0, f64::max);
    if errors > 1e-9 {
        format!("{label} ({}/{})", fmt_weight(n), fmt_weight(errors))
    } else {
        format!("{label} ({})", fmt_weight(n))
    }
}

/// Indented text rendering: one line per branch, `| ` per depth level,
/// leaves as `attr = value: SPk (n[/errors])`.
pub fn format_tree(tree: &DecisionTree) -> String {
    fn walk(out: &mut String, tree: &DecisionTree, node: &TreeNode, depth: usize) {
        if let TreeNode::Internal { attr, branches, .. } = node {
            for (value, child) in branches {
                out.push_str(&"| ".repeat(depth));
                let _ = write!(out, "{} = {}", tree.attributes[*attr], value);
                match child {
                    TreeNode::Leaf { counts } => {
                        let _ = writeln!(out, ": {}", leaf_label(counts));
                    }
                    TreeNode::Internal { .. } => {
                        out.push('\n');
                        walk(out, tree, child, depth + 1);
                    }
                }
            }
        }
    }
    let mut out = String::new();
    match &tree.root {
        TreeNode::Leaf { counts } => {
            let _ = writeln!(out, ": {}", leaf_label(counts));
        }
        root => walk(&mut out, tree, root, 0),
    }
    out
}
