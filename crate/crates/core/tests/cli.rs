use std::path::Path;
use std::process::{Command, Output};

fn efflab(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_efflab")).current_dir(dir).args(args).output().expect("binary runs")
}

const GRID: &str = r#"{"ups":[1.5,2.0],"downs":[0.5,1.0],"n_random":5,"max_depth":2,"seed":3}"#;

#[test]
fn list_names_every_experiment() {
    let dir = tempfile::tempdir().unwrap();
    let out = efflab(dir.path(), &["list"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let names: Vec<&str> = text.lines().filter_map(|l| l.split_whitespace().next()).collect();
    assert_eq!(names, ["prop51", "example1", "example2", "lattice-duality", "negishi", "patching", "repr-agent"]);
}

#[test]
fn lattice_duality_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("grid.json"), GRID).unwrap();
    let run = || {
        let out = efflab(dir.path(), &["lattice-duality", "--grid", "grid.json", "--out", "res"]);
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
        std::fs::read(dir.path().join("res/lattice_duality.csv")).unwrap()
    };
    let first = run();
    let text = String::from_utf8(first.clone()).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap();
    let json = header.strip_prefix("# config: ").expect("config header");
    let cfg: serde_json::Value = serde_json::from_str(json).unwrap();
    assert_eq!(cfg["experiment"], "lattice-duality");
    assert_eq!(cfg["grid"]["n_random"], 5);
    assert!(lines.next().unwrap().starts_with("instance_id,"));
    // 2 x 2 grid pairs with d < u plus 5 random trees.
    assert_eq!(lines.count(), 9);
    assert_eq!(first, run());
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = format!(r#"{{"experiment":"lattice-duality","seed":7,"grid":{GRID}}}"#);
    std::fs::write(dir.path().join("c.json"), cfg).unwrap();
    let out = efflab(dir.path(), &["run", "--config", "c.json", "--seed", "11", "--out", "o"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(dir.path().join("o/lattice_duality.csv")).unwrap();
    assert!(text.lines().next().unwrap().contains(r#""seed":11"#));
}

#[test]
fn small_monte_carlo_runs_are_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["patching", "--paths", "2000", "--steps", "128", "--bins", "8", "--seed", "5", "--out", "p"];
    let a = efflab(dir.path(), &args);
    assert_eq!(a.status.code(), Some(0), "{}", String::from_utf8_lossy(&a.stdout));
    let first = std::fs::read(dir.path().join("p/patching.csv")).unwrap();
    let b = efflab(dir.path(), &args);
    assert_eq!(a.stdout, b.stdout);
    assert_eq!(first, std::fs::read(dir.path().join("p/patching.csv")).unwrap());
}

#[test]
fn usage_and_config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("typo.json"), r#"{"paths":5000,"typo":1}"#).unwrap();
    std::fs::write(dir.path().join("unknown.json"), r#"{"experiment":"nope"}"#).unwrap();
    for args in [
        &["lattice-duality", "--bogus"][..],
        &["negishi", "--paths", "0"],
        &["prop51", "--config", "typo.json"],
        &["run", "--config", "unknown.json"],
        &["run"],
        &["lattice-duality", "--grid", "missing.json"],
    ] {
        let out = efflab(dir.path(), args);
        assert_eq!(out.status.code(), Some(2), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
        assert!(!out.stderr.is_empty());
    }
}
