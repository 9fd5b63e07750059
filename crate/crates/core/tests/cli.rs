use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_nelson-ibc"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_owned()
}

fn strip_timestamp(report: &str) -> String {
    report.lines().filter(|l| !l.contains("\"timestamp\"")).collect::<Vec<_>>().join("\n")
}

#[test]
fn build_check_on_three_nodes_passes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "three.toml",
        "campaign = \"build-check\"\n[grid]\nn_radial = 1\nn_angular = 3\n",
    );
    let out = dir.path().join("out");
    let o = run(&["--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["resolved"]["dimension"], 10);
    let checks = report["checks"].as_array().unwrap();
    let agreement = checks.iter().find(|c| c["name"] == "representation_agreement").unwrap();
    assert!(agreement["measured"].as_f64().unwrap() <= 1e-9);
    assert_eq!(agreement["passed"], true);
    for c in checks {
        assert!(c.get("tolerance").is_some() && c.get("measured").is_some());
    }
}

#[test]
fn malformed_config_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "bad.toml", "[grid\nn_radial = ");
    assert_eq!(run(&["--config", &cfg]).status.code(), Some(2));
    let cfg = write(dir.path(), "unknown.toml", "[model]\nspin = 1\n");
    assert_eq!(run(&["--config", &cfg]).status.code(), Some(2));
    assert_eq!(run(&["--campaign", "everything"]).status.code(), Some(2));
    assert_eq!(run(&["describe", "--config", "/nonexistent/config.toml"]).status.code(), Some(2));
}

#[test]
fn dimension_cap_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["--max-dim", "100", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("190"));
}

#[test]
fn describe_counts_sectors() {
    let o = run(&["describe"]);
    assert_eq!(o.status.code(), Some(0));
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(text.contains("sector 2: 171") && text.contains("dimension: 190"));

    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "n0.toml", "[fock]\nn_max = 0\n");
    let text = String::from_utf8_lossy(&run(&["describe", "--config", &cfg]).stdout).into_owned();
    assert!(text.contains("sector 0: 1") && !text.contains("sector 1"));

    let cfg = write(dir.path(), "big.toml", "[grid]\nn_radial = 4\nn_angular = 12\n[fock]\nn_max = 3\n");
    let text = String::from_utf8_lossy(&run(&["describe", "--config", &cfg]).stdout).into_owned();
    assert!(text.contains("48 nodes") && text.contains("sector 3: 19600"));
}

#[test]
fn identical_runs_give_identical_reports() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let args = ["--campaign", "positivity", "--seed", "7", "--out", out.to_str().unwrap()];
    assert_eq!(run(&args).status.code(), Some(0));
    let first = std::fs::read_to_string(out.join("report.json")).unwrap();
    assert_eq!(run(&args).status.code(), Some(0));
    let second = std::fs::read_to_string(out.join("report.json")).unwrap();
    assert_eq!(strip_timestamp(&first), strip_timestamp(&second));
}

#[test]
fn bounds_campaign_writes_tables() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["--campaign", "bounds", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stdout));
    let csv = std::fs::read_to_string(dir.path().join("bounds_G_norm.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("lambda,measured_norm,ratio,slope"));
    assert_eq!(csv.lines().count(), 4);
}
