use std::path::Path;
use std::process::{Command, Output};

fn silofed(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_silofed"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

const SMALL: &str = "rounds = 2\nseeds = [4]\n[fleet]\nsilos = 3\n[workload]\napps_per_episode = 4\n";

#[test]
fn run_then_plot() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("small.toml"), SMALL).unwrap();
    let out = silofed(&["run", "--config", "small.toml", "--out", "res", "--variant", "no-gt"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let seed_dir = dir.path().join("res/seed-4");
    for f in ["metrics.csv", "protocol.jsonl", "summary.json"] {
        assert!(seed_dir.join(f).exists(), "missing {f}");
    }
    let csv = std::fs::read_to_string(seed_dir.join("metrics.csv")).unwrap();
    assert!(csv.starts_with("round,silo,cost"));

    let out = silofed(&["plot", "res/seed-4/metrics.csv", "--out", "plots"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let svgs = std::fs::read_dir(dir.path().join("plots")).unwrap().count();
    assert!(svgs > 0);
}

#[test]
fn seed_and_rounds_flags_override_the_config() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("small.toml"), SMALL).unwrap();
    let out = silofed(
        &["run", "--config", "small.toml", "--seed", "8", "--rounds", "0", "--out", "res"],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("res/seed-8/metrics.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1, "zero rounds leaves only the header");
}

#[test]
fn errors_are_categorized() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.toml"), "rounds = 2\n[fleet]\nsilos = 1\n").unwrap();
    let out = silofed(&["run", "--config", "bad.toml"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("[config]"));

    let out = silofed(&["run", "--config", "missing.toml"], dir.path());
    assert_eq!(out.status.code(), Some(4));

    std::fs::write(dir.path().join("junk.csv"), "not,a,metrics\nfile\n").unwrap();
    let out = silofed(&["plot", "junk.csv"], dir.path());
    assert!(!out.status.success());
}
