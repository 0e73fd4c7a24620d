use std::path::Path;
use std::process::Command;

use hwlab_cli::config::ExperimentConfig;
use hwlab_cli::record;
use hwlab_cli::sandwich::{self, SandwichRow};

const BIN: &str = env!("CARGO_BIN_EXE_hwlab");

fn upper_config(reps: u64) -> String {
    format!(
        r#"{{
  "schema": "hwlab/1",
  "experiment": "bound-upper",
  "arrival": {{ "family": "exponential", "params": {{ "rate": 1.0 }} }},
  "service": {{ "family": "exponential", "params": {{ "rate": 1.0 }} }},
  "scaling": {{ "n": 100, "B": 1.0 }},
  "thresholds": [0.5, 0.95, 1.0],
  "reps": {reps},
  "seed": 11
}}"#
    )
}

fn write(dir: &Path, name: &str, text: &str) -> std::path::PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn hwlab(args: &[&str]) -> std::process::Output {
    Command::new(BIN).args(args).output().unwrap()
}

#[test]
fn config_round_trip() {
    let cfg = ExperimentConfig::from_json(&upper_config(10)).unwrap();
    let again = ExperimentConfig::from_json(&cfg.to_json()).unwrap();
    assert_eq!(cfg, again);
}

#[test]
fn non_positive_b_names_the_field() {
    let tmp = tempfile::tempdir().unwrap();
    let text = upper_config(10).replace("\"B\": 1.0", "\"B\": -0.5");
    let path = write(tmp.path(), "bad.json", &text);
    let out = tmp.path().join("out");
    let res = hwlab(&["bound-upper", "--config", path.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(2));
    let err = String::from_utf8_lossy(&res.stderr);
    assert!(err.contains("scaling.B"), "{err}");
    assert!(!out.exists(), "no outputs on validation failure");
}

#[test]
fn unequal_means_are_rejected() {
    let text = upper_config(10).replace(
        r#""arrival": { "family": "exponential", "params": { "rate": 1.0 } }"#,
        r#""arrival": { "family": "exponential", "params": { "rate": 2.0 } }"#,
    );
    let cfg = ExperimentConfig::from_json(&text).unwrap();
    match cfg.validate() {
        Err(hwlab_cli::CliError::Validation { field, .. }) => assert_eq!(field, "arrival"),
        other => panic!("{other:?}"),
    }
}

#[test]
fn same_seed_gives_identical_digests_across_workers() {
    let tmp = tempfile::tempdir().unwrap();
    let path = write(tmp.path(), "up.json", &upper_config(2000));
    let mut digests = Vec::new();
    for (i, workers) in ["1", "2"].iter().enumerate() {
        let out = tmp.path().join(format!("run{i}"));
        let res = hwlab(&[
            "bound-upper",
            "--config",
            path.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
            "--workers",
            workers,
        ]);
        assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
        let rec: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("run.json")).unwrap()).unwrap();
        digests.push(rec["outputs"].clone());
    }
    assert_eq!(digests[0], digests[1]);
    // A different seed changes the output.
    let out = tmp.path().join("other");
    let res = hwlab(&["bound-upper", "--config", path.to_str().unwrap(), "--out", out.to_str().unwrap(), "--seed", "12"]);
    assert!(res.status.success());
    let rec: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("run.json")).unwrap()).unwrap();
    assert_ne!(rec["outputs"], digests[0]);
}

#[test]
fn upper_bound_row_matches_geometric_oracle() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig::from_json(&upper_config(20_000)).unwrap();
    let rec = record::run(&cfg, tmp.path()).unwrap();
    assert!(rec.outputs.contains_key("upper_tail.csv"));
    let mut rdr = csv::Reader::from_path(tmp.path().join("upper_tail.csv")).unwrap();
    let headers = rdr.headers().unwrap().clone();
    assert_eq!(headers.iter().collect::<Vec<_>>(), ["x", "p_hat", "ci_low", "ci_high", "reps", "T", "seed"]);
    let rows: Vec<csv::StringRecord> = rdr.records().map(|r| r.unwrap()).collect();
    // Strict exceedance of 0.95 is the event {sup >= 10}: 0.9^10.
    let row = rows.iter().find(|r| &r[0] == "0.95").unwrap();
    let (lo, hi): (f64, f64) = (row[2].parse().unwrap(), row[3].parse().unwrap());
    let want = 0.9f64.powi(10);
    assert!(lo <= want && want <= hi, "[{lo}, {hi}] vs {want}");
    // x = 1 is the event {sup >= 11}.
    let row = rows.iter().find(|r| &r[0] == "1.0").unwrap();
    let (lo, hi): (f64, f64) = (row[2].parse().unwrap(), row[3].parse().unwrap());
    let want = 0.9f64.powi(11);
    assert!(lo <= want && want <= hi, "[{lo}, {hi}] vs {want}");
    assert!(rows.iter().all(|r| &r[6] == "11"));
}

#[test]
fn subcommand_must_match_config() {
    let tmp = tempfile::tempdir().unwrap();
    let path = write(tmp.path(), "up.json", &upper_config(10));
    let res = hwlab(&["lindley", "--config", path.to_str().unwrap(), "--out", tmp.path().join("o").to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(2));
}

#[test]
fn numeric_failure_removes_partial_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    // Noisy variance function with very few replications fails the repair limit
    // after nothing has been written; also exercises the exit code.
    let text = r#"{
  "schema": "hwlab/1",
  "experiment": "gaussian",
  "arrival": { "family": "exponential", "params": { "rate": 1.0 } },
  "service": { "family": "erlang", "params": { "k": 2, "rate": 2.0 } },
  "scaling": { "n": 100, "B": 1.0 },
  "thresholds": [1.0],
  "reps": 100,
  "seed": 3,
  "horizon": 10.0,
  "spacing": 0.05,
  "variance_reps": 10000
}"#;
    let path = write(tmp.path(), "g.json", text);
    let out = tmp.path().join("g");
    let res = hwlab(&["gaussian", "--config", path.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(3), "{}", String::from_utf8_lossy(&res.stderr));
    assert!(!out.exists());
}

#[test]
fn dominance_self_check_passes() {
    let tmp = tempfile::tempdir().unwrap();
    let text = r#"{
  "schema": "hwlab/1",
  "experiment": "dominance",
  "arrival": { "family": "erlang", "params": { "k": 2, "rate": 2.0 } },
  "service": { "family": "erlang", "params": { "k": 2, "rate": 2.0 } },
  "scaling": { "n": 10, "B": 1.0 },
  "reps": 5,
  "seed": 3
}"#;
    let cfg = ExperimentConfig::from_json(text).unwrap();
    let rec = record::run(&cfg, tmp.path()).unwrap();
    assert_eq!(rec.check_passed, Some(true));
    let csv = std::fs::read_to_string(tmp.path().join("dominance.csv")).unwrap();
    assert!(csv.starts_with("replication,epochs,"));
    assert_eq!(csv.lines().count(), 6);
}

#[test]
fn every_csv_has_header_and_seed_column() {
    let tmp = tempfile::tempdir().unwrap();
    let text = r#"{
  "schema": "hwlab/1",
  "experiment": "sandwich",
  "arrival": { "family": "exponential", "params": { "rate": 1.0 } },
  "service": { "family": "exponential", "params": { "rate": 1.0 } },
  "scaling": { "n": 100, "B": 1.0 },
  "thresholds": [0.5, 1.0],
  "reps": 5000,
  "seed": 5,
  "kappa": 10.0,
  "sim": { "t0": 500.0, "stride": 1.0, "batches": 50 }
}"#;
    let cfg = ExperimentConfig::from_json(text).unwrap();
    let rec = record::run(&cfg, tmp.path()).unwrap();
    assert_eq!(rec.summary["flagged"], 0, "{}", rec.summary);
    assert_eq!(rec.summary["negative_control_flagged"], 2);
    assert_eq!(rec.check_passed, Some(true));
    for name in rec.outputs.keys() {
        let text = std::fs::read_to_string(tmp.path().join(name)).unwrap();
        let header = text.lines().next().unwrap();
        assert!(header.split(',').any(|h| h == "seed"), "{name}: {header}");
    }
    let entries: Vec<_> = std::fs::read_dir(tmp.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
    assert_eq!(entries.len(), rec.outputs.len() + 1);
}

#[test]
fn sandwich_rejects_mismatched_stages() {
    let text = upper_config(10).replace("bound-upper", "sandwich");
    let v = ExperimentConfig::from_json(&text).unwrap().validate().unwrap();
    let (lower, sim, mut upper) = sandwich::stages(&v);
    assert!(sandwich::check_stages(&lower, &sim, &upper).is_ok());
    upper.scaling = hwlab::HWScaling::new(400, 1.0).unwrap();
    match sandwich::check_stages(&lower, &sim, &upper) {
        Err(hwlab_cli::CliError::Validation { field, .. }) => assert_eq!(field, "upper.scaling"),
        other => panic!("{other:?}"),
    }
}

#[test]
fn swapped_bounds_are_flagged() {
    let row = SandwichRow {
        x: 1.0,
        lower: 0.05,
        lower_hw: 0.002,
        empirical: 0.12,
        empirical_hw: 0.004,
        upper: 0.35,
        upper_hw: 0.004,
        flagged: false,
        seed: 1,
    };
    assert!(!row.violates());
    assert!(row.swapped().flagged);
}

#[test]
fn shipped_configs_validate() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut seen = 0;
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        let cfg = ExperimentConfig::load(&path).unwrap();
        cfg.validate().unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        seen += 1;
    }
    assert!(seen >= 5);
}
