use sspsim::arff::{read_arff, records_to_training, write_arff, ArffSchema};
use sspsim::config::RunConfig;
use sspsim::dtree::{build_tree, evaluate};
use sspsim::metrics::{run_point, MetricsReport};
use sspsim::routing::{bootstrap_and_run, run_scenario, RoutingStrategy};
use sspsim::topology::{generate_topology, peer_join, peer_leave};
use sspsim::workload::generate_queries;

fn small(overlap: f64) -> RunConfig {
    RunConfig { num_peers: 120, num_themes: 6, vocab_overlap: overlap, queries_per_peer: 4, eval_queries_per_peer: 4, ..RunConfig::default() }
}

#[test]
fn log_written_to_arff_trains_the_same_tree() {
    let cfg = small(0.3);
    let topology = generate_topology(&cfg.topology()).unwrap();
    let queries = generate_queries(&topology, &cfg.training_workload()).unwrap();
    let out = run_scenario(&topology, &queries, &RoutingStrategy::Flooding, cfg.theta().unwrap(), &cfg.latency()).unwrap();

    let direct = build_tree(&records_to_training(&out.log), &cfg.tree_params()).unwrap();
    let text = write_arff(&ArffSchema::for_run(&topology, &queries), &out.log).unwrap();
    let (_, reread) = read_arff(&text).unwrap();
    let via_file = build_tree(&records_to_training(&reread), &cfg.tree_params()).unwrap();
    assert_eq!(direct, via_file);
    assert_eq!(direct.to_json(), via_file.to_json());
}

#[test]
fn overlapping_vocabularies_lower_precision_but_keep_the_subset_property() {
    let cfg = small(0.5);
    let topology = generate_topology(&cfg.topology()).unwrap();
    let train = generate_queries(&topology, &cfg.training_workload()).unwrap();
    let eval = generate_queries(&topology, &cfg.eval_workload(cfg.num_peers)).unwrap();
    let r = bootstrap_and_run(&topology, &train, &eval, cfg.theta().unwrap(), &cfg.tree_params(), cfg.tau, &cfg.latency()).unwrap();

    for (bk, flood) in r.bk_outcomes.iter().zip(&r.flooding_outcomes) {
        assert_eq!(bk.query, flood.query);
        assert!(bk.answer_peers().is_subset(&flood.answer_peers()));
    }
    let precision = r.bk.mean_precision_pct.unwrap();
    assert!(precision > 0.0 && precision < 100.0, "{precision}");
    assert_eq!(MetricsReport::from_outcomes(&r.bk_outcomes, &r.flooding_outcomes), r.bk);
}

#[test]
fn lowering_tau_never_loses_answers() {
    let cfg = small(0.5);
    let topology = generate_topology(&cfg.topology()).unwrap();
    let train = generate_queries(&topology, &cfg.training_workload()).unwrap();
    let theta = cfg.theta().unwrap();
    let log = run_scenario(&topology, &train, &RoutingStrategy::Flooding, theta, &cfg.latency()).unwrap().log;
    let tree = build_tree(&records_to_training(&log), &cfg.tree_params()).unwrap();
    let eval = generate_queries(&topology, &cfg.eval_workload(cfg.num_peers)).unwrap();

    let run = |tau| {
        let s = RoutingStrategy::Knowledge { tree: tree.clone(), tau };
        run_scenario(&topology, &eval, &s, theta, &cfg.latency()).unwrap()
    };
    let (narrow, wide) = (run(0.9), run(0.0));
    for (n, w) in narrow.outcomes.iter().zip(&wide.outcomes) {
        assert!(n.answer_peers().is_subset(&w.answer_peers()));
        assert!(n.contacted_sps.is_subset(&w.contacted_sps));
    }
    assert!(narrow.total_messages() <= wide.total_messages());
}

#[test]
fn churn_keeps_the_pipeline_running() {
    let cfg = small(0.0);
    let topology = generate_topology(&cfg.topology()).unwrap();
    let (joined, newcomer) = peer_join(&topology, 2, 99).unwrap();
    let shrunk = peer_leave(&joined, sspsim::PeerId(0)).unwrap();
    assert!(shrunk.check_partition());
    assert!(shrunk.peer(newcomer).is_some());

    let train = generate_queries(&shrunk, &cfg.training_workload()).unwrap();
    let out = run_scenario(&shrunk, &train, &RoutingStrategy::Flooding, cfg.theta().unwrap(), &cfg.latency()).unwrap();
    let training = records_to_training(&out.log);
    let tree = build_tree(&training, &cfg.tree_params()).unwrap();
    assert!(evaluate(&tree, &training).unwrap().accuracy > 0.9);
}

#[test]
fn sweep_point_is_reproducible() {
    let cfg = small(0.2);
    let a = run_point(&cfg, 120, 6, 11).unwrap();
    assert_eq!(a, run_point(&cfg, 120, 6, 11).unwrap());
    assert_ne!(a, run_point(&cfg, 120, 6, 12).unwrap());
    assert!(a.bk_messages < a.flood_messages);
}
