//! End-to-end behavior on synthetic datasets with known structure.

use std::collections::BTreeMap;

use cascade_core::cascade::{build_cascades, cascade_summary};
use cascade_core::census::{bucket_purity, census};
use cascade_core::graph::build_graph;
use cascade_core::pipeline::{run_subcommand, RunConfig};
use cascade_core::synthetic::{generate_synthetic, FriendTopology, SyntheticConfig};

#[test]
fn zero_influence_leaves_no_ground_truth() {
    let cfg = SyntheticConfig {
        influence_probability: 0.0,
        ..SyntheticConfig::default()
    };
    let data = generate_synthetic(&cfg);
    assert!(data.truth_edges.is_empty());
    // friends can still act on the same business by coincidence
    let ingested = data.ingest().unwrap();
    let graph = build_graph(ingested.n_users(), &ingested.users);
    let cascades = build_cascades(&ingested.events, &graph, None);
    assert!(cascades.values().flatten().all(|c| c.size() >= 2));
}

#[test]
fn chain_friendships_give_path_cascades() {
    let cfg = SyntheticConfig {
        users: 200,
        businesses: 20,
        events: 400,
        influence_probability: 0.9,
        topology: FriendTopology::Chains { length: 5 },
        ..SyntheticConfig::default()
    };
    let data = generate_synthetic(&cfg);
    assert!(!data.truth_edges.is_empty());
    let ingested = data.ingest().unwrap();
    let graph = build_graph(ingested.n_users(), &ingested.users);
    let cascades = build_cascades(&ingested.events, &graph, None);
    let all: Vec<_> = cascades.values().flatten().collect();
    assert!(all.iter().any(|c| c.size() > 2));
    for c in all {
        assert!(c.size() <= 5, "{} has {} nodes", c.id, c.size());
        // a path of friends: every arc joins neighbors on the chain
        let mut pairs: Vec<(u32, u32)> = c.edges.iter().map(|&(a, b)| (a.min(b), a.max(b))).collect();
        pairs.sort_unstable();
        pairs.dedup();
        assert_eq!(pairs.len(), c.size() - 1, "{}", c.id);
    }
}

#[test]
fn census_shares_sum_to_one_and_small_buckets_are_pure() {
    let cfg = SyntheticConfig {
        users: 400,
        businesses: 100,
        events: 3000,
        friendship_density: 0.01,
        influence_probability: 0.2,
        ..SyntheticConfig::default()
    };
    let data = generate_synthetic(&cfg).ingest().unwrap();
    let graph = build_graph(data.n_users(), &data.users);
    let cascades = build_cascades(&data.events, &graph, None);
    let table = census(&cascades, usize::MAX);
    for (city, c) in &table {
        let total: f64 = c.rows.iter().map(|r| r.share).sum();
        assert!((total - 1.0).abs() < 1e-12, "{city}: {total}");
        assert_eq!(c.rows.iter().map(|r| r.count).sum::<usize>(), cascades[city].len());
    }
    let small: BTreeMap<String, Vec<_>> = cascades
        .iter()
        .map(|(city, list)| (city.clone(), list.iter().filter(|c| c.size() <= 3).cloned().collect()))
        .collect();
    assert!(bucket_purity(&small, 12, 50).iter().all(|r| r.purity == Some(1.0)));
}

#[test]
fn summary_counts_every_cascade() {
    let data = generate_synthetic(&SyntheticConfig::default()).ingest().unwrap();
    let graph = build_graph(data.n_users(), &data.users);
    let cascades = build_cascades(&data.events, &graph, None);
    let rows = cascade_summary(&cascades);
    assert_eq!(rows.len(), cascades.len());
}

#[test]
fn stages_rerun_in_isolation() {
    let dir = tempfile::tempdir().unwrap();
    let synth = SyntheticConfig {
        users: 600,
        businesses: 300,
        events: 5000,
        friendship_density: 0.015,
        influence_probability: 0.1,
        ..SyntheticConfig::default()
    };
    generate_synthetic(&synth).write_to(&dir.path().join("data")).unwrap();
    let mut cfg = RunConfig {
        data_dir: Some(dir.path().join("data")),
        cache_dir: dir.path().join("cache"),
        ..RunConfig::default()
    };
    cfg.apply_text("k = 3\nmin_big_cascades = 5\n").unwrap();

    let err = run_subcommand("fit", &cfg).unwrap_err();
    assert_eq!(err.exit_code(), 2);
    run_subcommand("ingest", &cfg).unwrap();
    run_subcommand("build-cascades", &cfg).unwrap();
    for stage in ["summary", "census", "purity", "fit", "longest", "export-dot"] {
        run_subcommand(stage, &cfg).unwrap();
    }
    let err = run_subcommand("train", &cfg).unwrap_err();
    assert_eq!(err.exit_code(), 2);
    run_subcommand("features", &cfg).unwrap();
    run_subcommand("evaluate", &cfg).unwrap();
    for file in ["census.csv", "fit.csv", "features.csv", "eval.json", "roc.csv"] {
        assert!(cfg.cache_dir.join(file).exists(), "{file}");
    }
}
