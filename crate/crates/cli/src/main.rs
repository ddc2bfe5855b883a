use std::fmt::Display;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use sspsim::arff::{read_arff, records_to_training, write_arff, ArffSchema};
use sspsim::dtree::{build_tree, format_tree, predict_distribution, DecisionTree};
use sspsim::metrics::{emit_chart, run_experiment, ExperimentSpec, MetricsReport, Pairing};
use sspsim::routing::{run_scenario, run_scenario_traced, RoutingStrategy};
use sspsim::topology::{generate_topology, Topology};
use sspsim::workload::{generate_queries, Workload};
use sspsim::{ComponentToken, RunConfig};

/// Super-peer overlay simulator: flooding vs knowledge-based routing.
#[derive(Debug, Parser)]
#[command(name = "sspsim", version)]
struct Cli {
    /// Override the seed from the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a topology.
    Gen {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a query workload for a topology.
    Workload {
        #[arg(long)]
        topology: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Route a workload and write the global log and per-query metrics.
    Simulate {
        #[arg(long, value_enum)]
        strategy: Strategy,
        #[arg(long)]
        topology: PathBuf,
        #[arg(long)]
        queries: PathBuf,
        /// Tree used by the bk strategy.
        #[arg(long, required_if_eq("strategy", "bk"))]
        tree: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        log: PathBuf,
        #[arg(long)]
        metrics: PathBuf,
        /// Write one line per delivered event.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Induce a decision tree from an ARFF log.
    Train {
        #[arg(long)]
        log: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        print_tree: bool,
    },
    /// Print the candidate distribution for one query.
    Predict {
        #[arg(long)]
        tree: PathBuf,
        /// Comma-separated component tokens, e.g. p.r,r.m,m.i,h.i
        #[arg(long)]
        components: String,
    },
    /// Run one of the four sweeps; writes CSV, SVG charts and metadata.
    Experiment {
        #[arg(long, value_parser = clap::value_parser!(u8).range(1..=4))]
        id: u8,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Cross every peer count with every Super-Peer count.
        #[arg(long)]
        cross: bool,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Strategy {
    Flooding,
    Bk,
}

/// A failure carrying its exit code.
struct Failure {
    code: u8,
    message: String,
}

fn usage(message: impl Display) -> Failure {
    Failure { code: 1, message: message.to_string() }
}

fn data(message: impl Display) -> Failure {
    Failure { code: 2, message: message.to_string() }
}

fn with_path<E: Display>(path: &Path) -> impl FnOnce(E) -> Failure + '_ {
    move |e| data(format!("{}: {e}", path.display()))
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(with_path(path))
}

fn write(path: &Path, contents: &str) -> Result<(), Failure> {
    fs::write(path, contents).map_err(with_path(path))
}

fn meta_path(out: &Path) -> PathBuf {
    let mut name = out.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".meta.json");
    out.with_file_name(name)
}

fn write_meta(out: &Path, meta: serde_json::Value) -> Result<(), Failure> {
    write(&meta_path(out), &(serde_json::to_string_pretty(&meta).expect("json") + "\n"))
}

fn load_config(path: Option<&Path>, seed: Option<u64>) -> Result<RunConfig, Failure> {
    let mut cfg = match path {
        Some(p) => RunConfig::from_json(&read(p)?).map_err(with_path(p))?,
        None => RunConfig::default(),
    };
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    cfg.validate().map_err(data)?;
    Ok(cfg)
}

fn load_topology(path: &Path) -> Result<Topology, Failure> {
    let topology = Topology::from_json(&read(path)?).map_err(with_path(path))?;
    if !topology.check_partition() {
        return Err(data(format!("{}: member lists do not partition the peers", path.display())));
    }
    Ok(topology)
}

fn load_tree(path: &Path) -> Result<DecisionTree, Failure> {
    DecisionTree::from_json(&read(path)?).map_err(with_path(path))
}

fn run(cli: Cli) -> Result<(), Failure> {
    let seed = cli.seed;
    match cli.command {
        Command::Gen { config, out } => {
            let cfg = load_config(config.as_deref(), seed)?;
            let topology = generate_topology(&cfg.topology()).map_err(data)?;
            write(&out, &topology.to_json())?;
            write_meta(
                &out,
                json!({"command": "gen", "seed": cfg.seed, "super_peers": topology.num_super_peers(), "peers": topology.num_peers()}),
            )
        }
        Command::Workload { topology, config, out } => {
            let topo = load_topology(&topology)?;
            let mut cfg = load_config(config.as_deref(), None)?;
            cfg.seed = seed.unwrap_or(if config.is_some() { cfg.seed } else { topo.config.seed });
            let wcfg = cfg.training_workload();
            let queries = generate_queries(&topo, &wcfg).map_err(data)?;
            let count = queries.len();
            let workload = Workload { config: wcfg, queries };
            write(&out, &(serde_json::to_string_pretty(&workload).expect("json") + "\n"))?;
            write_meta(&out, json!({"command": "workload", "seed": cfg.seed, "queries": count}))
        }
        Command::Simulate { strategy, topology, queries, tree, config, log, metrics, trace } => {
            let cfg = load_config(config.as_deref(), seed)?;
            let topo = load_topology(&topology)?;
            let workload: Workload = serde_json::from_str(&read(&queries)?).map_err(with_path(&queries))?;
            let strategy = match strategy {
                Strategy::Flooding => RoutingStrategy::Flooding,
                Strategy::Bk => {
                    let path = tree.ok_or_else(|| usage("--tree is required with --strategy bk"))?;
                    RoutingStrategy::Knowledge { tree: load_tree(&path)?, tau: cfg.tau }
                }
            };
            let theta = cfg.theta().map_err(data)?;
            let lat = cfg.latency();
            let output = if trace.is_some() {
                run_scenario_traced(&topo, &workload.queries, &strategy, theta, &lat)
            } else {
                run_scenario(&topo, &workload.queries, &strategy, theta, &lat)
            }
            .map_err(data)?;
            let schema = ArffSchema::for_run(&topo, &workload.queries);
            write(&log, &write_arff(&schema, &output.log).map_err(data)?)?;
            // Precision is measured against flooding the same queries.
            let report = match strategy {
                RoutingStrategy::Flooding => MetricsReport::from_outcomes(&output.outcomes, &output.outcomes),
                RoutingStrategy::Knowledge { .. } => {
                    let baseline = run_scenario(&topo, &workload.queries, &RoutingStrategy::Flooding, theta, &lat).map_err(data)?;
                    MetricsReport::from_outcomes(&output.outcomes, &baseline.outcomes)
                }
            };
            write(&metrics, &report.to_csv())?;
            if let Some(path) = trace {
                let text: String = output.trace.iter().map(|e| format!("{e}\n")).collect();
                write(&path, &text)?;
            }
            write_meta(
                &metrics,
                json!({
                    "command": "simulate",
                    "strategy": strategy.name(),
                    "seed": cfg.seed,
                    "queries": output.outcomes.len(),
                    "log_rows": output.log.len(),
                    "total_messages": report.total_messages,
                    "mean_completion": report.mean_completion,
                    "mean_precision_pct": report.mean_precision_pct,
                }),
            )
        }
        Command::Train { log, config, out, print_tree } => {
            let cfg = load_config(config.as_deref(), seed)?;
            let (_, records) = read_arff(&read(&log)?).map_err(with_path(&log))?;
            let training = records_to_training(&records);
            let tree = build_tree(&training, &cfg.tree_params()).map_err(data)?;
            let accuracy = sspsim::dtree::evaluate(&tree, &training).map_err(data)?.accuracy;
            write(&out, &tree.to_json())?;
            if print_tree {
                print!("{}", format_tree(&tree));
            }
            write_meta(
                &out,
                json!({
                    "command": "train",
                    "seed": cfg.seed,
                    "records": training.len(),
                    "nodes": tree.root.node_count(),
                    "leaves": tree.root.leaf_count(),
                    "training_accuracy": accuracy,
                }),
            )
        }
        Command::Predict { tree, components } => {
            let features: Vec<ComponentToken> = components
                .split(',')
                .map(|c| ComponentToken::parse(c.trim()))
                .collect::<Result<_, _>>()
                .map_err(usage)?;
            let tree = load_tree(&tree)?;
            let result = predict_distribution(&tree, &features).map_err(data)?;
            for (sp, p) in &result.candidates {
                println!("{sp} {p:.3}");
            }
            Ok(())
        }
        Command::Experiment { id, config, out, cross } => {
            let cfg = load_config(config.as_deref(), seed)?;
            let mut spec = ExperimentSpec::standard(id, &cfg).map_err(usage)?;
            if cross {
                spec.pairing = Pairing::Cross;
            }
            let table = run_experiment(&spec).map_err(data)?;
            fs::create_dir_all(&out).map_err(with_path(&out))?;
            let csv = table.to_csv();
            let csv_path = out.join(format!("experiment{id}.csv"));
            write(&csv_path, &csv)?;
            let mut charts = Vec::new();
            for (stem, x, ys) in table.charts() {
                let path = out.join(format!("{stem}.svg"));
                emit_chart(&csv, x, &ys, &path).map_err(with_path(&path))?;
                charts.push(path.file_name().unwrap().to_string_lossy().into_owned());
            }
            write_meta(
                &csv_path,
                json!({"command": "experiment", "id": id, "seed": cfg.seed, "rows": table.rows.len(), "charts": charts, "config": cfg}),
            )
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("sspsim: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
