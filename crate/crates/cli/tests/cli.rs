use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const CHAIN: &str = include_str!("../../../scenarios/four_robot_chain.toml");

fn ddf(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ddf"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("ddf-cli-{}-{name}", std::process::id()));
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn write_config(dir: &Path, body: &str) -> String {
    let path = dir.join("scenario.toml");
    fs::write(&path, body).unwrap();
    path.to_str().unwrap().to_owned()
}

fn data_rows(csv: &str) -> Vec<Vec<String>> {
    csv.lines()
        .skip(2)
        .map(|l| l.split(',').map(str::to_owned).collect())
        .collect()
}

#[test]
fn run_writes_hashed_csvs() {
    let dir = scratch("run");
    let config = write_config(&dir, CHAIN);
    let out = dir.join("out");
    let result = ddf(&["run", &config, "--mc", "2", "--out", out.to_str().unwrap()]);
    assert!(result.status.success(), "{}", String::from_utf8_lossy(&result.stderr));

    let manifest: toml::Table = fs::read_to_string(out.join("manifest.toml")).unwrap().parse().unwrap();
    let hash = manifest["config_sha256"].as_str().unwrap().to_owned();
    assert_eq!(hash.len(), 64);
    assert_eq!(manifest["mc_runs"].as_integer(), Some(2));

    for (file, column) in [("nees.csv", "nees"), ("mineig.csv", "mineig"), ("lambda.csv", "lambda_min")] {
        let body = fs::read_to_string(out.join(file)).unwrap();
        let mut lines = body.lines();
        assert_eq!(lines.next().unwrap(), format!("# config_sha256={hash}"));
        assert_eq!(lines.next().unwrap(), format!("run,step,robot,{column}"));
        let rows = data_rows(&body);
        assert_eq!(rows.len(), 2 * 100 * 4, "{file}");
        assert!(rows.iter().all(|r| r.len() == 4 && r[3].parse::<f64>().unwrap().is_finite()));
    }

    // The stored effective config hashes to the recorded value and reloads.
    let effective = fs::read_to_string(out.join("config.toml")).unwrap();
    let rerun = ddf(&["run", out.join("config.toml").to_str().unwrap(), "--mc", "2", "--out", dir.join("again").to_str().unwrap()]);
    assert!(rerun.status.success());
    let again: toml::Table = fs::read_to_string(dir.join("again/manifest.toml")).unwrap().parse().unwrap();
    assert_eq!(again["config_sha256"].as_str().unwrap(), hash);
    assert_eq!(fs::read_to_string(dir.join("again/config.toml")).unwrap(), effective);
    assert_eq!(
        fs::read_to_string(dir.join("again/nees.csv")).unwrap(),
        fs::read_to_string(out.join("nees.csv")).unwrap()
    );
    fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn disabling_conservative_filtering_shows_overconfidence() {
    let dir = scratch("off");
    let config = write_config(&dir, CHAIN);
    let out = dir.join("out");
    let result = ddf(&["run", &config, "--mc", "1", "--no-conservative", "--out", out.to_str().unwrap()]);
    assert!(result.status.success(), "{}", String::from_utf8_lossy(&result.stderr));
    let body = fs::read_to_string(out.join("mineig.csv")).unwrap();
    let negative = data_rows(&body)
        .iter()
        .filter(|r| r[3].parse::<f64>().unwrap() < -1e-6)
        .count();
    assert!(negative > 0);
    fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn cyclic_topology_is_rejected() {
    let dir = scratch("cyclic");
    let body = CHAIN
        .replace("topology = [[1, 2], [2, 3], [3, 4]]", "topology = [[1, 2], [2, 3], [3, 4], [1, 3]]")
        .replacen("targets = [1, 2]", "targets = [1, 2, 3]", 1);
    let config = write_config(&dir, &body);
    let result = ddf(&["run", &config, "--out", dir.join("out").to_str().unwrap()]);
    assert_eq!(result.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&result.stderr);
    assert!(stderr.contains("undirected and a-cyclic"), "{stderr}");
    assert!(!dir.join("out").exists());
    fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn unknown_field_is_named() {
    let dir = scratch("unknown");
    let config = write_config(&dir, &CHAIN.replace("seed = ", "sead = 1\nseed = "));
    let result = ddf(&["run", &config]);
    assert_eq!(result.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&result.stderr).contains("sead"));
    fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn verify_single_suite() {
    let result = ddf(&["verify", "--suite", "dimensions"]);
    assert!(result.status.success());
    let stdout = String::from_utf8_lossy(&result.stdout);
    assert_eq!(stdout.lines().count(), 1);
    assert!(stdout.starts_with("[PASS] 8."), "{stdout}");

    let unknown = ddf(&["verify", "--suite", "nope"]);
    assert_eq!(unknown.status.code(), Some(2));
}
