//! Binary-level tests: exit codes, golden outputs and CSV headers.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn golden(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name)
}

fn sqvac(args: &[&str], config: &Path, out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sqvac"))
        .args(args)
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .output()
        .unwrap()
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let p = dir.join("cfg.toml");
    std::fs::write(&p, text).unwrap();
    p
}

fn first_line(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap().lines().next().unwrap().to_string()
}

fn documented_header(file: &str) -> String {
    let text = std::fs::read_to_string(golden("headers.txt")).unwrap();
    text.lines()
        .find_map(|l| l.strip_prefix(&format!("{file}: ")).map(str::to_string))
        .unwrap_or_else(|| panic!("{file} not listed in headers.txt"))
}

#[test]
fn sweep_matches_golden() {
    let dir = tempfile::tempdir().unwrap();
    let out = sqvac(&["opo-sweep"], &golden("sweep_small.toml"), dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let got = std::fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    assert_eq!(got, std::fs::read_to_string(golden("sweep_small.csv")).unwrap());
}

#[test]
fn budget_matches_golden() {
    let dir = tempfile::tempdir().unwrap();
    let out = sqvac(&["budget"], &golden("budget_small.toml"), dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let got = std::fs::read_to_string(dir.path().join("budget_half.csv")).unwrap();
    assert_eq!(got, std::fs::read_to_string(golden("budget_small.csv")).unwrap());
    assert_eq!(first_line(&dir.path().join("budget_half.csv")), documented_header("budget_<label>.csv"));
}

#[test]
fn experiment_headers_are_documented() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "schema_version = 1\nseed = 8\n[source]\nn_th = 0.55\nn_sq = 0.11\n\
         [detection]\neta = 0.88\nn_samples = 5000\n\
         [experiment]\nt_values = [0.5, 1.0]\nrepetitions = 2\n",
    );
    let out_dir = dir.path().join("run");
    let out = Command::new(env!("CARGO_BIN_EXE_sqvac"))
        .args(["experiment", "--keep-samples", "--seed", "11", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out_dir)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["estimates.csv", "points.csv", "summary.csv"] {
        assert_eq!(first_line(&out_dir.join(f)), documented_header(f), "{f}");
    }
    assert_eq!(
        first_line(&out_dir.join("samples/ref_r0.csv")),
        documented_header("samples/*.csv")
    );
    let echo = std::fs::read_to_string(out_dir.join("config_echo.toml")).unwrap();
    assert!(echo.contains("seed = 11"), "{echo}");
    assert!(out_dir.join("log.txt").exists());
}

#[test]
fn kurtosis_check_generated_and_from_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "schema_version = 1\nseed = 2\n[source]\nn_th = 0.55\nn_sq = 0.11\n\
         [detection]\neta = 0.88\nn_samples = 200000\n\
         [experiment]\nt_values = [1.0]\nrepetitions = 1\nkeep_samples = true\n\
         [kurtosis]\nn_samples = 100000\nphases = [0.0, 1.5707963267948966]\nwindow_half_width = 0.1\n",
    );
    let out = sqvac(&["kurtosis-check"], &cfg, &dir.path().join("k1"));
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let k1 = dir.path().join("k1/kurtosis.csv");
    assert_eq!(first_line(&k1), documented_header("kurtosis.csv"));
    let text = std::fs::read_to_string(&k1).unwrap();
    for row in text.lines().skip(1) {
        let f: Vec<f64> = row.split(',').map(|v| v.parse().unwrap()).collect();
        assert!(f[1].abs() < f[3], "Gaussian data outside bound: {row}");
    }

    let run = sqvac(&["experiment"], &cfg, &dir.path().join("exp"));
    assert!(run.status.success());
    let samples = dir.path().join("exp/samples/ref_r0.csv");
    let out = Command::new(env!("CARGO_BIN_EXE_sqvac"))
        .args(["kurtosis-check", "--input"])
        .arg(&samples)
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(dir.path().join("k2"))
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(dir.path().join("k2/kurtosis.csv")).unwrap();
    assert_eq!(text.lines().count(), 3);
}

#[test]
fn malformed_config_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    for text in [
        "schema_version = 1\n[sweep\ncoupling = [1.0]\n",
        "schema_version = 1\n[sweep]\ncoupling = [1.0]\nthreshold = [0.0]\nbogus = 3\n",
        "schema_version = 7\n[sweep]\ncoupling = [1.0]\nthreshold = [0.0]\n",
        "schema_version = 1\n[sweep]\ncoupling = [1.0]\nthreshold = [1.5]\n",
    ] {
        let cfg = write_config(dir.path(), text);
        let out = sqvac(&["opo-sweep"], &cfg, &dir.path().join("o"));
        assert_eq!(out.status.code(), Some(2), "{text}");
        assert!(!out.stderr.is_empty());
    }
    let cfg = write_config(dir.path(), "schema_version = 1\n[source]\nn_th = 0.1\nn_sq = 0.1\n[budget]\nt_values = []\n");
    assert_eq!(sqvac(&["budget"], &cfg, dir.path()).status.code(), Some(2));
    let missing = dir.path().join("nope.toml");
    assert_eq!(sqvac(&["experiment"], &missing, dir.path()).status.code(), Some(2));
    let out = Command::new(env!("CARGO_BIN_EXE_sqvac")).arg("experiment").output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn runtime_error_exits_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "schema_version = 1\n[source]\nn_th = 0.1\nn_sq = 0.1\n");
    let out = Command::new(env!("CARGO_BIN_EXE_sqvac"))
        .args(["kurtosis-check", "--input"])
        .arg(dir.path().join("absent.csv"))
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(dir.path().join("k"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn shipped_configs_parse() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs");
    let mut n = 0;
    for entry in std::fs::read_dir(dir).unwrap() {
        let p = entry.unwrap().path();
        sqvac::runner::Config::load(&p).unwrap_or_else(|e| panic!("{}: {e}", p.display()));
        n += 1;
    }
    assert!(n >= 4);
}
