//! The global LogFile in ARFF.
//!
//! Layout: `SuperPeer, Query, componentW1..componentW_A, Peer`, all nominal.
//! One data row per (query, answering peer). The writer uses `, ` between
//! values; the reader accepts any whitespace around commas, blank lines and
//! `%` comments.

use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;
use std::sync::Arc;

use thiserror::Error;

use crate::domain::{ComponentToken, PeerId, Query, QueryId, SuperPeerId};
use crate::dtree::TrainingRecord;
use crate::topology::Topology;

pub const DEFAULT_RELATION: &str = "P2P-BD";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ArffError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("row {row}: expected {expected} values, found {found}")]
    ArityMismatch { row: usize, expected: usize, found: usize },
    #[error("value {value:?} is not in the domain of attribute {attribute}")]
    ValueNotInDomain { attribute: String, value: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArffAttribute {
    pub name: String,
    pub domain: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArffSchema {
    pub relation: String,
    pub attributes: Vec<ArffAttribute>,
}

/// One row of the global log: the answering Super-Peer and peer for a query.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LogRecord {
    pub answering_sp: SuperPeerId,
    pub query: QueryId,
    /// Shared by every row of the same query.
    pub components: Arc<[ComponentToken]>,
    pub answering_peer: PeerId,
}

impl ArffSchema {
    /// Schema with the fixed attribute layout over the given domains.
    pub fn new<S, Q, T, P>(relation: &str, arity: usize, super_peers: S, queries: Q, tokens: T, peers: P) -> Self
    where
        S: IntoIterator<Item = SuperPeerId>,
        Q: IntoIterator<Item = QueryId>,
        T: IntoIterator<Item = ComponentToken>,
        P: IntoIterator<Item = PeerId>,
    {
        let token_domain: Vec<String> = tokens.into_iter().map(|t| t.to_string()).collect();
        let mut attributes = vec![
            ArffAttribute { name: "SuperPeer".into(), domain: super_peers.into_iter().map(|s| s.to_string()).collect() },
            ArffAttribute { name: "Query".into(), domain: queries.into_iter().map(|q| q.to_string()).collect() },
        ];
        for i in 1..=arity {
            attributes.push(ArffAttribute { name: format!("componentW{i}"), domain: token_domain.clone() });
        }
        attributes.push(ArffAttribute { name: "Peer".into(), domain: peers.into_iter().map(|p| p.to_string()).collect() });
        Self { relation: relation.to_string(), attributes }
    }

    /// Domains covering a whole run: every Super-Peer, query, vocabulary
    /// token and peer of the topology.
    pub fn for_run(topology: &Topology, queries: &[Query]) -> Self {
        let arity = queries.first().map_or(0, Query::arity);
        let mut tokens: Vec<ComponentToken> =
            topology.super_peers.iter().flat_map(|sp| sp.theme.vocabulary.iter().cloned()).collect();
        for q in queries {
            tokens.extend(q.components.iter().cloned());
        }
        tokens.sort();
        tokens.dedup();
        let mut peers: Vec<PeerId> = topology.peers.keys().copied().collect();
        peers.extend(queries.iter().map(|q| q.origin));
        peers.sort_unstable();
        peers.dedup();
        let mut query_ids: Vec<QueryId> = queries.iter().map(|q| q.id).collect();
        query_ids.sort_unstable();
        query_ids.dedup();
        Self::new(
            DEFAULT_RELATION,
            arity,
            topology.super_peers.iter().map(|sp| sp.id),
            query_ids,
            tokens,
            peers,
        )
    }

    /// Number of `componentW*` attributes.
    pub fn arity(&self) -> usize {
        self.attributes.len().saturating_sub(3)
    }

    fn check_layout(&self) -> Result<(), String> {
        let n = self.attributes.len();
        if n < 4 {
            return Err(format!("expected at least 4 attributes, found {n}"));
        }
        let mut expected = vec!["SuperPeer".to_string(), "Query".to_string()];
        expected.extend((1..=n - 3).map(|i| format!("componentW{i}")));
        expected.push("Peer".into());
        for (attr, want) in self.attributes.iter().zip(&expected) {
            if &attr.name != want {
                return Err(format!("attribute {:?} where {want:?} was expected", attr.name));
            }
        }
        Ok(())
    }
}

fn record_values(r: &LogRecord) -> impl Iterator<Item = String> + '_ {
    [r.answering_sp.to_string(), r.query.to_string()]
        .into_iter()
        .chain(r.components.iter().map(|c| c.to_string()))
        .chain(std::iter::once(r.answering_peer.to_string()))
}

pub fn write_arff(schema: &ArffSchema, records: &[LogRecord]) -> Result<String, ArffError> {
    let domains: Vec<HashSet<&str>> =
        schema.attributes.iter().map(|a| a.domain.iter().map(String::as_str).collect()).collect();
    let mut out = String::new();
    let _ = writeln!(out, "@relation {}", schema.relation);
    for attr in &schema.attributes {
        let _ = writeln!(out, "@attribute {} {{{}}}", attr.name, attr.domain.join(", "));
    }
    out.push_str("@data\n");
    for (row, r) in records.iter().enumerate() {
        let found = r.components.len() + 3;
        if found != schema.attributes.len() {
            return Err(ArffError::ArityMismatch { row, expected: schema.attributes.len(), found });
        }
        for (i, value) in record_values(r).enumerate() {
            if !domains[i].contains(value.as_str()) {
                return Err(ArffError::ValueNotInDomain { attribute: schema.attributes[i].name.clone(), value });
            }
            if i > 0 {
                out.push_str(", ");
            }
            out.push_str(&value);
        }
        out.push('\n');
    }
    Ok(out)
}

fn parse_attribute(rest: &str, line: usize) -> Result<ArffAttribute, ArffError> {
    let err = |message: String| ArffError::Parse { line, message };
    let rest = rest.trim();
    let (name, spec) = rest.split_once(|c: char| c.is_whitespace()).ok_or_else(|| err("attribute without a type".into()))?;
    let spec = spec.trim();
    let inner = spec
        .strip_prefix('{')
        .and_then(|s| s.strip_suffix('}'))
        .ok_or_else(|| err(format!("attribute {name} is not nominal: {spec}")))?;
    let domain: Vec<String> = inner.split(',').map(|v| v.trim().to_string()).collect();
    if domain.iter().any(String::is_empty) {
        return Err(err(format!("empty value in the domain of {name}")));
    }
    Ok(ArffAttribute { name: name.to_string(), domain })
}

fn directive<'a>(line: &'a str, keyword: &str) -> Option<&'a str> {
    let head = line.get(..keyword.len())?;
    if !head.eq_ignore_ascii_case(keyword) {
        return None;
    }
    let rest = &line[keyword.len()..];
    (rest.is_empty() || rest.starts_with(char::is_whitespace)).then_some(rest)
}

pub fn read_arff(text: &str) -> Result<(ArffSchema, Vec<LogRecord>), ArffError> {
    let mut relation: Option<String> = None;
    let mut attributes: Vec<ArffAttribute> = Vec::new();
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));

    let mut saw_data = false;
    for (line, content) in lines.by_ref() {
        if content.is_empty() || content.starts_with('%') {
            continue;
        }
        if let Some(rest) = directive(content, "@relation") {
            let name = rest.trim();
            if name.is_empty() {
                return Err(ArffError::Parse { line, message: "@relation without a name".into() });
            }
            relation = Some(name.to_string());
        } else if let Some(rest) = directive(content, "@attribute") {
            let attr = parse_attribute(rest, line)?;
            if attributes.iter().any(|a| a.name == attr.name) {
                return Err(ArffError::Parse { line, message: format!("duplicate attribute {}", attr.name) });
            }
            attributes.push(attr);
        } else if directive(content, "@data").is_some() {
            saw_data = true;
            break;
        } else {
            return Err(ArffError::Parse { line, message: format!("unexpected line before @data: {content}") });
        }
    }
    let relation = relation.ok_or(ArffError::Parse { line: 0, message: "missing @relation".into() })?;
    if !saw_data {
        return Err(ArffError::Parse { line: 0, message: "missing @data".into() });
    }
    let schema = ArffSchema { relation, attributes };
    schema.check_layout().map_err(|message| ArffError::Parse { line: 0, message })?;

    let n = schema.attributes.len();
    let arity = schema.arity();
    let parse_err = |line: usize, v: &str| ArffError::Parse { line, message: format!("malformed value {v:?}") };
    let domain_sets: Vec<HashSet<&str>> =
        schema.attributes.iter().map(|a| a.domain.iter().map(String::as_str).collect()).collect();
    let mut token_cache: HashMap<&str, ComponentToken> = HashMap::new();

    let mut records = Vec::new();
    let mut previous: Option<(Vec<String>, Arc<[ComponentToken]>)> = None;
    for (line, content) in lines {
        if content.is_empty() || content.starts_with('%') {
            continue;
        }
        let fields: Vec<&str> = content.split(',').map(str::trim).collect();
        if fields.len() != n {
            return Err(ArffError::ArityMismatch { row: records.len(), expected: n, found: fields.len() });
        }
        for (i, v) in fields.iter().enumerate() {
            if !domain_sets[i].contains(v) {
                return Err(ArffError::ValueNotInDomain {
                    attribute: schema.attributes[i].name.clone(),
                    value: v.to_string(),
                });
            }
        }
        let answering_sp: SuperPeerId = fields[0].parse().map_err(|_| parse_err(line, fields[0]))?;
        let query: QueryId = fields[1].parse().map_err(|_| parse_err(line, fields[1]))?;
        let answering_peer: PeerId = fields[n - 1].parse().map_err(|_| parse_err(line, fields[n - 1]))?;
        let raw = &fields[2..2 + arity];
        let components = match &previous {
            Some((prev_raw, shared)) if prev_raw.iter().zip(raw).all(|(a, b)| a == b) => shared.clone(),
            _ => {
                let mut toks = Vec::with_capacity(arity);
                for v in raw {
                    let tok = match token_cache.get(v) {
                        Some(t) => t.clone(),
                        None => {
                            let t = ComponentToken::parse(v).map_err(|_| parse_err(line, v))?;
                            token_cache.insert(v, t.clone());
                            t
                        }
                    };
                    toks.push(tok);
                }
                let shared: Arc<[ComponentToken]> = toks.into();
                previous = Some((raw.iter().map(|s| s.to_string()).collect(), shared.clone()));
                shared
            }
        };
        records.push(LogRecord { answering_sp, query, components, answering_peer });
    }
    Ok((schema, records))
}

/// Drop the query and peer columns; features are the components, the class
/// is the answering Super-Peer. Order and duplicates are preserved.
pub fn records_to_training(records: &[LogRecord]) -> Vec<TrainingRecord> {
    records
        .iter()
        .map(|r| TrainingRecord { features: r.components.clone(), class_label: r.answering_sp })
        .collect()
}
