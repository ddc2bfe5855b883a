//! Per-query and aggregate measurements, the experiment sweeps, and charts.
//!
//! Precision here is the share of the flooding baseline's answering peers
//! that knowledge routing also reached. Against the baseline it behaves like
//! recall.

mod chart;
mod experiment;

use std::collections::{BTreeSet, HashMap};
use std::fmt::Write as _;

use serde::Serialize;

use crate::domain::{PeerId, QueryId};
use crate::routing::QueryOutcome;
use crate::simkern::SimTime;

pub use chart::{emit_chart, render_chart, ChartError};
pub use experiment::{
    run_experiment, run_point, ExperimentError, ExperimentRow, ExperimentSpec, ExperimentTable, Pairing, CSV_HEADER,
};

/// `|bk| / |baseline| * 100`, undefined when the baseline is empty.
pub fn precision(bk_answers: &BTreeSet<PeerId>, baseline_answers: &BTreeSet<PeerId>) -> Option<f64> {
    precision_from_counts(bk_answers.len(), baseline_answers.len())
}

fn precision_from_counts(bk: usize, baseline: usize) -> Option<f64> {
    (baseline > 0).then(|| bk as f64 / baseline as f64 * 100.0)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QueryMetrics {
    pub query: QueryId,
    pub messages: u64,
    pub completion: SimTime,
    pub answer_count: usize,
    pub precision_pct: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsReport {
    pub per_query: Vec<QueryMetrics>,
    pub total_messages: u64,
    pub mean_completion: f64,
    pub mean_precision_pct: Option<f64>,
    pub queries_excluded_from_precision: usize,
}

impl MetricsReport {
    /// Rows for `outcomes`, with precision measured against the baseline
    /// outcome of the same query id. Queries missing from the baseline or
    /// with an empty baseline answer set have no precision.
    pub fn from_outcomes(outcomes: &[QueryOutcome], baseline: &[QueryOutcome]) -> Self {
        let by_id: HashMap<QueryId, &QueryOutcome> = baseline.iter().map(|o| (o.query, o)).collect();
        let rows = outcomes
            .iter()
            .map(|o| QueryMetrics {
                query: o.query,
                messages: o.messages,
                completion: o.completion,
                answer_count: o.answers.len(),
                precision_pct: by_id.get(&o.query).and_then(|b| precision(&o.answer_peers(), &b.answer_peers())),
            })
            .collect();
        Self::from_rows(rows)
    }

    pub fn from_rows(per_query: Vec<QueryMetrics>) -> Self {
        let total_messages = per_query.iter().map(|r| r.messages).sum();
        let mean_completion = if per_query.is_empty() {
            0.0
        } else {
            per_query.iter().map(|r| r.completion.value()).sum::<f64>() / per_query.len() as f64
        };
        let defined: Vec<f64> = per_query.iter().filter_map(|r| r.precision_pct).collect();
        let mean_precision_pct = (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64);
        let queries_excluded_from_precision = per_query.len() - defined.len();
        Self { per_query, total_messages, mean_completion, mean_precision_pct, queries_excluded_from_precision }
    }

    /// One row per query: `query,messages,completion,answers,precision_pct`,
    /// with `NA` for undefined precision.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("query,messages,completion,answers,precision_pct\n");
        for r in &self.per_query {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                r.query,
                r.messages,
                format_float(r.completion.value()),
                r.answer_count,
                format_optional(r.precision_pct)
            );
        }
        out
    }
}

pub(crate) fn format_float(v: f64) -> String {
    format!("{v:.6}")
}

pub(crate) fn format_optional(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), format_float)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::SuperPeerId;

    fn set(ids: &[u32]) -> BTreeSet<PeerId> {
        ids.iter().map(|i| PeerId(*i)).collect()
    }

    fn outcome(q: u32, peers: &[u32], messages: u64, completion: f64) -> QueryOutcome {
        QueryOutcome {
            query: QueryId(q),
            contacted_sps: BTreeSet::new(),
            answers: peers.iter().map(|p| (SuperPeerId(0), PeerId(*p))).collect(),
            messages,
            completion: SimTime::new(completion).unwrap(),
        }
    }

    #[test]
    fn precision_examples() {
        assert_eq!(precision(&set(&[1, 2, 3]), &set(&[1, 2, 3, 4])), Some(75.0));
        assert_eq!(precision(&set(&[1, 2]), &set(&[1, 2])), Some(100.0));
        assert_eq!(precision(&set(&[]), &set(&[])), None);
    }

    #[test]
    fn aggregates_skip_undefined_precision() {
        let baseline = [outcome(1, &[1, 2, 3, 4], 12, 3.0), outcome(2, &[], 10, 2.0), outcome(3, &[5], 11, 3.0)];
        let bk = [outcome(1, &[1, 2, 3], 4, 4.0), outcome(2, &[], 3, 3.0), outcome(3, &[5], 4, 5.0)];
        let report = MetricsReport::from_outcomes(&bk, &baseline);
        assert_eq!(report.total_messages, 11);
        assert_eq!(report.mean_completion, 4.0);
        assert_eq!(report.mean_precision_pct, Some(87.5));
        assert_eq!(report.queries_excluded_from_precision, 1);
        assert_eq!(MetricsReport::from_rows(report.per_query.clone()), report);
        let csv = report.to_csv();
        assert_eq!(csv.lines().nth(2).unwrap(), "Q2,3,3.000000,0,NA");
        assert_eq!(csv.lines().nth(1).unwrap(), "Q1,4,4.000000,3,75.000000");
    }
}
