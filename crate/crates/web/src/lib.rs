//! WebAssembly bindings for the static demo page in `www/`.
//!
//! Every export takes and returns plain strings so the page needs no glue
//! beyond the generated module. Errors surface as rejected calls.

use serde_json::json;
use wasm_bindgen::prelude::wasm_bindgen;

use sspsim::dtree::{format_tree, predict_distribution, DecisionTree};
use sspsim::routing::bootstrap_and_run;
use sspsim::topology::generate_topology;
use sspsim::workload::generate_queries;
use sspsim::{ComponentToken, RunConfig};

fn config(text: &str) -> Result<RunConfig, String> {
    let cfg = if text.trim().is_empty() { RunConfig::default() } else { RunConfig::from_json(text).map_err(|e| e.to_string())? };
    cfg.validate().map_err(|e| e.to_string())?;
    Ok(cfg)
}

/// Bootstrap and run both strategies. Returns a JSON summary that includes
/// the trained tree (as JSON and as indented text).
#[wasm_bindgen]
pub fn compare(config_json: &str) -> Result<String, String> {
    let cfg = config(config_json)?;
    let topology = generate_topology(&cfg.topology()).map_err(|e| e.to_string())?;
    let train = generate_queries(&topology, &cfg.training_workload()).map_err(|e| e.to_string())?;
    let eval = if cfg.eval_on_training {
        train.clone()
    } else {
        generate_queries(&topology, &cfg.eval_workload(cfg.num_peers)).map_err(|e| e.to_string())?
    };
    let theta = cfg.theta().map_err(|e| e.to_string())?;
    let r = bootstrap_and_run(&topology, &train, &eval, theta, &cfg.tree_params(), cfg.tau, &cfg.latency())
        .map_err(|e| e.to_string())?;
    let summary = json!({
        "seed": cfg.seed,
        "peers": topology.num_peers(),
        "super_peers": topology.num_super_peers(),
        "log_rows": r.train_log.len(),
        "tree_accuracy": r.training_eval.accuracy,
        "tree_nodes": r.tree.root.node_count(),
        "flooding": {"messages": r.flooding.total_messages, "mean_completion": r.flooding.mean_completion},
        "bk": {
            "messages": r.bk.total_messages,
            "mean_completion": r.bk.mean_completion,
            "mean_precision_pct": r.bk.mean_precision_pct,
        },
        "tree_text": format_tree(&r.tree),
        "tree": serde_json::to_value(&r.tree).map_err(|e| e.to_string())?,
    });
    Ok(summary.to_string())
}

/// Indented text rendering of a tree document.
#[wasm_bindgen]
pub fn print_tree(tree_json: &str) -> Result<String, String> {
    let tree = DecisionTree::from_json(tree_json).map_err(|e| e.to_string())?;
    Ok(format_tree(&tree))
}

/// Candidate distribution for comma-separated components, one
/// `SPk probability` line per candidate.
#[wasm_bindgen]
pub fn predict(tree_json: &str, components: &str) -> Result<String, String> {
    let tree = DecisionTree::from_json(tree_json).map_err(|e| e.to_string())?;
    let features: Vec<ComponentToken> = components
        .split(',')
        .map(|c| ComponentToken::parse(c.trim()))
        .collect::<Result<_, _>>()
        .map_err(|e| e.to_string())?;
    let result = predict_distribution(&tree, &features).map_err(|e| e.to_string())?;
    Ok(result.candidates.iter().map(|(sp, p)| format!("{sp} {p:.3}\n")).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    const SMALL: &str = r#"{"num_peers": 50, "num_themes": 5, "queries_per_peer": 2, "eval_queries_per_peer": 2}"#;

    #[test]
    fn compare_then_predict() {
        let summary: serde_json::Value = serde_json::from_str(&compare(SMALL).unwrap()).unwrap();
        assert_eq!(summary["super_peers"], 5);
        assert!(summary["bk"]["messages"].as_u64() < summary["flooding"]["messages"].as_u64());
        let tree = summary["tree"].to_string();
        assert_eq!(print_tree(&tree).unwrap(), summary["tree_text"].as_str().unwrap());

        let out = predict(&tree, "a.a,b.b,c.c,d.d").unwrap();
        let total: f64 = out.lines().map(|l| l.split_once(' ').unwrap().1.parse::<f64>().unwrap()).sum();
        assert!((total - 1.0).abs() < 0.01);
    }

    #[test]
    fn errors_are_messages() {
        assert!(compare(r#"{"bogus": 1}"#).unwrap_err().contains("bogus"));
        assert!(predict("{}", "a.a").is_err());
        let tree = serde_json::from_str::<serde_json::Value>(&compare(SMALL).unwrap()).unwrap()["tree"].to_string();
        assert!(predict(&tree, "a.a").unwrap_err().contains("expected 4"));
        assert!(predict(&tree, "A,b.b,c.c,d.d").is_err());
    }
}
