use std::path::Path;
use std::process::{Command, Output};

fn cascades(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cascades"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn generate_then_all() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let cache = dir.path().join("cache");
    let out = cascades(&["generate", "--out", path(&data), "--users", "300", "--businesses", "40", "--events", "1500"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["business.json", "user.json", "review.json", "tip.json", "ground_truth_edges.csv"] {
        assert!(data.join(f).exists(), "{f}");
    }
    let out = cascades(&[
        "all",
        "--data-dir",
        path(&data),
        "--cache-dir",
        path(&cache),
        "--set",
        "k=3",
        "--set",
        "min_big_cascades=3",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(cache.join("census.csv").exists());
    assert!(cache.join("eval.json").exists());
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let cache = dir.path().join("cache");
    let out = cascades(&["census", "--cache-dir", path(&cache)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("build-cascades"));

    let out = cascades(&["census", "--cache-dir", path(&cache), "--set", "no_such_key=1"]);
    assert_eq!(out.status.code(), Some(1));
    let out = cascades(&["census", "--cache-dir", path(&cache), "--set", "k=zero"]);
    assert_eq!(out.status.code(), Some(1));
    let out = cascades(&["ingest", "--cache-dir", path(&cache), "--data-dir", path(&dir.path().join("absent"))]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn config_file_and_help() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.conf");
    std::fs::write(&cfg, "# comment\nk = 0\n").unwrap();
    let out = cascades(&["features", "--config", path(&cfg), "--cache-dir", path(dir.path())]);
    assert_eq!(out.status.code(), Some(1));

    let out = cascades(&["--help"]);
    let help = String::from_utf8_lossy(&out.stdout);
    for key in ["window_days", "node_cap", "gbdt_trees", "seed"] {
        assert!(help.contains(key), "{key}");
    }
}
