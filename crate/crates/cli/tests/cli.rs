use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn run(dir: &Path, config: &str, args: &[&str]) -> Output {
    let path = dir.join("experiment.toml");
    std::fs::write(&path, config).unwrap();
    Command::new(env!("CARGO_BIN_EXE_tempering"))
        .args(args)
        .arg("--config")
        .arg(&path)
        .current_dir(dir)
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

/// Data rows of a CSV report as maps from column to cell.
fn rows(csv: &str) -> Vec<std::collections::BTreeMap<String, String>> {
    let body: String = csv.lines().filter(|l| !l.starts_with('#')).map(|l| format!("{l}\n")).collect();
    let mut rdr = csv::Reader::from_reader(body.as_bytes());
    let header = rdr.headers().unwrap().clone();
    rdr.records().map(|r| header.iter().zip(r.unwrap().iter()).map(|(h, v)| (h.into(), v.into())).collect()).collect()
}

const ISING_GRID: &str = r#"
seed = 7
[model]
family = "ising"
n = { start = 8, end = 16, step = 4 }
beta_critical_multiple = 2.0
h = 0.2
[ladder]
kinds = ["dampened", "tempered"]
"#;

#[test]
fn verify_at_twelve_passes_the_exact_items() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), "[model]\nn = 12\n", &["verify", "--no-timestamp"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let out = stdout(&o);
    assert!(out.starts_with("# schema: verify v1\n"));
    let rows = rows(&out);
    for code in ["a", "c", "d"] {
        let items: Vec<_> = rows.iter().filter(|r| r["code"] == code).collect();
        assert!(!items.is_empty());
        assert!(items.iter().all(|r| r["status"] == "PASS"), "{items:?}");
    }
    let ratio: f64 = rows.iter().find(|r| r["item"] == "mode_ratio").unwrap()["value"].parse().unwrap();
    assert!((ratio - 16.0 / 15.0).abs() < 1e-12);
}

#[test]
fn failing_items_only_change_the_exit_code_under_strict() {
    // Close to the upper end of the window the small-n bottleneck sits on
    // the disordered class and some shape items fail.
    let cfg = "[model]\nn = 12\nmu = 2.99\n[ladder]\nm = 4\n";
    let dir = tempfile::tempdir().unwrap();
    let lax = run(dir.path(), cfg, &["verify", "--no-timestamp"]);
    assert_eq!(lax.status.code(), Some(0));
    assert!(stdout(&lax).contains(",FAIL,"));
    let strict = run(dir.path(), cfg, &["verify", "--no-timestamp", "--strict"]);
    assert_eq!(strict.status.code(), Some(1));
    assert_eq!(stdout(&lax), stdout(&strict));
}

#[test]
fn scans_are_byte_identical_without_timestamps() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for (p, threads) in [(&a, "1"), (&b, "3")] {
        let o = run(
            dir.path(),
            ISING_GRID,
            &["scan-gap", "--no-timestamp", "--threads", threads, "--out", p.to_str().unwrap()],
        );
        assert_eq!(o.status.code(), Some(0));
    }
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());

    // With timestamps on, only the header line and the wall-clock column move.
    let o = run(dir.path(), ISING_GRID, &["scan-gap"]);
    let stamped = stdout(&o);
    assert!(stamped.lines().nth(1).unwrap().starts_with("# generated: "));
    let strip = |s: &str| -> Vec<_> {
        rows(s)
            .into_iter()
            .map(|mut r| {
                r.remove("seconds");
                r
            })
            .collect()
    };
    assert_eq!(strip(&stamped), strip(&std::fs::read_to_string(&a).unwrap()));
}

#[test]
fn scan_gap_reports_points_then_fits() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), ISING_GRID, &["scan-gap", "--no-timestamp"]);
    let rows = rows(&stdout(&o));
    let points: Vec<_> = rows.iter().filter(|r| r["row_type"] == "point").collect();
    assert_eq!(points.len(), 6);
    // Sizes outer, ladder kinds inner, whatever the completion order.
    let order: Vec<(String, String)> = points.iter().map(|r| (r["n"].clone(), r["ladder_kind"].clone())).collect();
    assert_eq!(order[0], ("8".into(), "dampened".into()));
    assert_eq!(order[5], ("16".into(), "tempered".into()));
    for r in &points {
        let gap: f64 = r["gap"].parse().unwrap();
        assert!(gap > 0.0 && gap < 1.0);
        assert_eq!(r["error"], "");
        assert_eq!(r["seconds"], "");
    }
    let fits: Vec<_> = rows.iter().filter(|r| r["row_type"] == "fit").collect();
    assert_eq!(fits.len(), 4);
    assert!(fits.iter().all(|r| r["slope"].parse::<f64>().unwrap() < 0.0));
}

#[test]
fn floats_carry_seventeen_significant_digits() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), ISING_GRID, &["scan-gap", "--no-timestamp"]);
    let rows = rows(&stdout(&o));
    let gap = &rows[0]["gap"];
    let mantissa = gap.split('e').next().unwrap().trim_start_matches('-').replace('.', "");
    assert_eq!(mantissa.len(), 17, "{gap}");
}

#[test]
fn json_reports_are_schema_versioned() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), ISING_GRID, &["scan-gap", "--no-timestamp", "--format", "json", "--seed", "99"]);
    assert_eq!(o.status.code(), Some(0));
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["schema"], "scan-gap");
    assert_eq!(v["schema_version"], 1);
    assert!(v.get("generated").is_none());
    // The flag wins over the file.
    assert_eq!(v["config"]["seed"], 99);
    let cols = v["columns"].as_array().unwrap();
    let rows = v["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 10);
    assert_eq!(rows[0].as_object().unwrap().len(), cols.len());
    assert!(rows[0]["gap"].is_f64());
}

#[test]
fn invalid_configs_are_rejected_with_every_problem_listed() {
    let cfg = "[model]\nq = 3\nn = [12, 30]\nmu = 2.5\n[chain]\nrestriction = \"rgb\"\n[analysis]\nepsilon = 0.7\n";
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), cfg, &["compare-rgb", "--out", "never.csv"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(o.stdout.is_empty());
    assert!(!dir.path().join("never.csv").exists());
    let v: Value = serde_json::from_slice(&o.stderr).unwrap();
    assert_eq!(v["schema"], "tempering.error");
    assert_eq!(v["schema_version"], 1);
    let fields: Vec<&str> = v["errors"].as_array().unwrap().iter().map(|e| e["field"].as_str().unwrap()).collect();
    assert!(fields.contains(&"model.mu"), "{fields:?}");
    assert!(fields.contains(&"model.n"));
    assert!(fields.contains(&"analysis.epsilon"));
}

#[test]
fn unknown_keys_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), "[model]\nn = 12\nsize = 3\n", &["verify"]);
    assert_eq!(o.status.code(), Some(2));
    let v: Value = serde_json::from_slice(&o.stderr).unwrap();
    assert!(v["errors"][0]["message"].as_str().unwrap().contains("size"));
}

#[test]
fn failed_points_become_rows_and_a_nonzero_exit() {
    // Trace projections need Ising ladders; Potts points fail but the
    // scan still completes and writes every row.
    let cfg = "[model]\nn = [6, 9]\nbeta = 0.3\n[ladder]\nm = 2\n[chain]\nkind = \"trace\"\n";
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), cfg, &["scan-gap", "--no-timestamp"]);
    assert_eq!(o.status.code(), Some(1));
    let rows = rows(&stdout(&o));
    assert_eq!(rows.len(), 2);
    assert!(rows.iter().all(|r| r["error"].starts_with("unsupported: ")));
}

#[test]
fn conductance_scan_finds_the_bottleneck_cut() {
    let cfg = "[model]\nn = [12, 24]\n[chain]\nrestriction = \"rgb\"\n[analysis]\ncut = \"lambda_min\"\n";
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), cfg, &["scan-conductance", "--no-timestamp"]);
    assert_eq!(o.status.code(), Some(0));
    let rows = rows(&stdout(&o));
    let t: Vec<&str> = rows.iter().map(|r| r["threshold"].as_str()).collect();
    assert_eq!(t, ["5", "9"]);
    for r in &rows {
        let phi: f64 = r["phi"].parse().unwrap();
        let lower: f64 = r["tau_lower_bound"].parse().unwrap();
        assert!(phi > 0.0 && phi < 0.5);
        assert!(lower > 1.0);
    }
}

#[test]
fn streaming_no_majority_cut_needs_no_chain() {
    let cfg =
        "[model]\nn = [24, 48]\nbeta_critical_multiple = 1.0\n[ladder]\nm = 8\n[analysis]\ncut = \"no_majority\"\n";
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), cfg, &["scan-conductance", "--no-timestamp"]);
    let rows = rows(&stdout(&o));
    assert_eq!(rows[0]["states"], "");
    let phi: Vec<f64> = rows.iter().map(|r| r["phi"].parse().unwrap()).collect();
    assert!(phi[1] < phi[0]);
}

#[test]
fn compare_rgb_emits_points_and_a_trend() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), "[model]\nn = [12, 24, 36]\n", &["compare-rgb", "--no-timestamp"]);
    assert_eq!(o.status.code(), Some(0));
    let rows = rows(&stdout(&o));
    let points: Vec<_> = rows.iter().filter(|r| r["row_type"] == "point").collect();
    assert_eq!(points.len(), 3);
    for r in &points {
        let ratio: f64 = r["ratio"].parse().unwrap();
        let (gm, gt): (f64, f64) = (r["metropolis_gap"].parse().unwrap(), r["tempering_gap"].parse().unwrap());
        assert!((ratio - gt / gm).abs() < 1e-12);
    }
    assert_eq!(rows.iter().filter(|r| r["row_type"] == "trend").count(), 2);
}

#[test]
fn simulate_is_reproducible_and_writes_a_histogram() {
    let cfg = r#"
seed = 3
[model]
family = "ising"
n = 8
beta_critical_multiple = 2.0
h = 0.3
[ladder]
m = 3
[simulate]
kind = "swap"
steps = 20000
"#;
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), cfg, &["simulate", "--no-timestamp", "--out", "a.json"]);
    assert_eq!(o.status.code(), Some(0));
    run(dir.path(), cfg, &["simulate", "--no-timestamp", "--out", "b.json"]);
    let a: Value = serde_json::from_slice(&std::fs::read(dir.path().join("a.json")).unwrap()).unwrap();
    let b: Value = serde_json::from_slice(&std::fs::read(dir.path().join("b.json")).unwrap()).unwrap();
    assert_eq!(a["stats"], b["stats"]);
    assert_eq!(a["schema"], "simulate");
    assert_eq!(a["stats"]["samples"], 18000);
    let hist = std::fs::read_to_string(dir.path().join("a.histogram.csv")).unwrap();
    assert!(hist.starts_with("# schema: simulate-histogram v1\n"));
    let total: u64 = rows(&hist).iter().filter(|r| r["level"] == "0").map(|r| r["count"].parse::<u64>().unwrap()).sum();
    assert_eq!(total, 18000);

    let c = run(dir.path(), cfg, &["simulate", "--no-timestamp", "--seed", "4"]);
    let c: Value = serde_json::from_slice(&c.stdout).unwrap();
    assert_ne!(a["stats"], c["stats"]);
}

#[test]
fn ladder_info_reports_partitions_and_thresholds() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = "[model]\nfamily = \"ising\"\nn = 9\nbeta_critical_multiple = 4.0\n[ladder]\nm = 3\n[analysis]\ndistributions = true\n";
    let o = run(dir.path(), cfg, &["ladder-info", "--no-timestamp"]);
    assert_eq!(o.status.code(), Some(0));
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["schema"], "ladder-info");
    let e = &v["entries"][0];
    assert_eq!(e["levels"].as_array().unwrap().len(), 4);
    // Level 0 of a field-free ladder is uniform over 2^9 configurations.
    let lz0 = e["levels"][0]["log_partition"].as_f64().unwrap();
    assert!((lz0 - 9.0 * 2f64.ln()).abs() < 1e-12);
    assert_eq!(e["trace"]["thresholds"][3], 5);
    let total: f64 =
        e["levels"][2]["distribution"].as_array().unwrap().iter().map(|c| c["probability"].as_f64().unwrap()).sum();
    assert!((total - 1.0).abs() < 1e-12);
}

#[test]
fn chains_can_be_dumped_as_triplets() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = "[model]\nfamily = \"ising\"\nn = 4\nbeta = 0.5\n[ladder]\nm = 1\n[output]\ndump_dir = \"dumps\"\n";
    let o = run(dir.path(), cfg, &["scan-gap", "--no-timestamp"]);
    assert_eq!(o.status.code(), Some(0));
    let text = std::fs::read_to_string(dir.path().join("dumps/scan-gap_n4_tempered_tempering.tsv")).unwrap();
    assert!(text.starts_with("# lumped-chain v1\n"));
    let states = text.lines().filter(|l| l.starts_with("state\t")).count();
    assert_eq!(states, 10);
}
