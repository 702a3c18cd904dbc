use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use sha2::{Digest, Sha256};

fn run(args: &[&str], out: &Path, config: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_sparsemag"));
    cmd.args(args).arg("--out").arg(out);
    if let Some(text) = config {
        let path = out.with_extension("toml");
        fs::write(&path, text).unwrap();
        cmd.arg("--config").arg(path);
    }
    cmd.output().unwrap()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

const SMALL: &str = "[sequence]\nrepetitions = 2\n[noise]\ndetunings = 3\ntrajectories = 2\n\
                     [reconstruction]\nstarts = 2\nevaluations_per_start = 60\n";

#[test]
fn missing_seed_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["sense"], &dir.path().join("a"), None);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("seed"));
}

#[test]
fn unknown_names_are_config_errors() {
    let dir = tempfile::tempdir().unwrap();
    for flags in [["--strategy", "zigzag"], ["--calibration", "scale"], ["--field-preset", "quad"], ["--pulse", "gauss"]] {
        let mut args = vec!["sense", "--seed", "1"];
        args.extend(flags);
        assert_eq!(run(&args, &dir.path().join("a"), None).status.code(), Some(2), "{flags:?}");
    }
    let o = run(&["sense", "--seed", "1"], &dir.path().join("b"), Some("[sampling]\nstrategi = \"grid\"\n"));
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn reconstruct_without_samples_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["reconstruct", "--seed", "1"], &dir.path().join("empty"), None);
    assert_eq!(o.status.code(), Some(4));
}

#[test]
fn zero_budget_returns_initial_parameters_with_warning() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("opt");
    let o = run(&["optimize-pulse", "--seed", "3", "--budget", "0"], &out, None);
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("warning"));
    let obj = json(&out.join("objective.json"));
    assert_eq!(obj["no_improvement"], Value::Bool(true));
    assert_eq!(obj["pm_objective"], obj["pm_initial_objective"]);
    let params = json(&out.join("pm_params.json"));
    assert_eq!(params["a"].as_f64(), Some(0.0628));
}

#[test]
fn sense_then_reconstruct_writes_consistent_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    assert!(run(&["sense", "--seed", "7", "--n", "16"], &out, Some(SMALL)).status.success());
    let samples = fs::read_to_string(out.join("samples.csv")).unwrap();
    assert_eq!(samples.lines().count(), 17);
    assert_eq!(fs::read_to_string(out.join("references.csv")).unwrap().lines().count(), 11);

    let o = run(&["reconstruct", "--seed", "7", "--n", "16", "--calibration", "bias"], &out, Some(SMALL));
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let metrics = json(&out.join("metrics.json"));
    assert_eq!(metrics["calibration"], "bias");
    assert_eq!(metrics["mabe"]["pixels"], 10_000);
    for key in ["mae", "rmse", "psnr_db", "r2", "ssim"] {
        assert!(metrics["mabe"].get(key).is_some() && metrics["baseline"].get(key).is_some(), "{key}");
    }
    let pgm = fs::read(out.join("reconstruction.pgm")).unwrap();
    assert!(pgm.starts_with(b"P5\n100 100\n65535\n"));
    assert_eq!(pgm.len(), b"P5\n100 100\n65535\n".len() + 2 * 10_000);
    assert_eq!(fs::read_to_string(out.join("reconstruction.csv")).unwrap().lines().count(), 10_001);
}

#[test]
fn manifest_hashes_match_files() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    assert!(run(&["sense", "--seed", "2", "--n", "9"], &out, Some(SMALL)).status.success());
    let manifest = json(&out.join("manifest.json"));
    assert_eq!(manifest["command"], "sense");
    assert_eq!(manifest["seed"], 2);
    let files = manifest["files"].as_array().unwrap();
    assert!(files.len() >= 6);
    for f in files {
        let bytes = fs::read(out.join(f["name"].as_str().unwrap())).unwrap();
        assert_eq!(f["sha256"].as_str().unwrap(), hex::encode(Sha256::digest(&bytes)));
    }
    let config = fs::read_to_string(out.join("config.toml")).unwrap();
    assert!(config.contains("n = 9"));
    assert_eq!(manifest["config_sha256"].as_str().unwrap(), hex::encode(Sha256::digest(config.as_bytes())));
}

#[test]
fn sweep_has_one_row_per_repetition_plus_aggregates() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sweep");
    let cfg = format!("{SMALL}[sweep]\nrepetitions = 3\nn_values = [9, 16]\n");
    let o = run(&["sweep", "--seed", "4", "--variable", "n"], &out, Some(&cfg));
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let mut r = csv::Reader::from_path(out.join("sweep.csv")).unwrap();
    let rows: Vec<csv::StringRecord> = r.records().map(|x| x.unwrap()).collect();
    assert_eq!(rows.len(), 2 * (3 + 1));
    assert_eq!(rows.iter().filter(|x| &x[1] == "mean").count(), 2);
    // repetition seeds are shared across settings
    assert_eq!(rows[0][2], rows[4][2]);
    let summary = json(&out.join("sweep_summary.json"));
    assert_eq!(summary["settings"].as_array().unwrap().len(), 2);
}

#[test]
fn strategy_sweep_covers_all_strategies() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sweep");
    let cfg = format!("{SMALL}[sweep]\nrepetitions = 1\n");
    assert!(run(&["sweep", "--seed", "4", "--variable", "strategy", "--n", "9"], &out, Some(&cfg)).status.success());
    let text = fs::read_to_string(out.join("sweep.csv")).unwrap();
    for s in ["random", "spiral", "square-loop", "serpentine", "grid"] {
        assert!(text.lines().any(|l| l.starts_with(&format!("{s},mean"))), "{s}");
    }
}
