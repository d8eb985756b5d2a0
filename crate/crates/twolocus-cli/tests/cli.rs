//! End-to-end tests of the `twolocus` binary: argument handling, exit
//! codes, file formats, and reproducibility.

use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_twolocus"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).expect("utf8 output")
}

#[test]
fn coeffs_single_sample_csv() {
    let out = run(&[
        "coeffs",
        "--sample",
        "c=[[1,0],[0,1]]",
        "--M",
        "1",
        "--approx-g0",
        "off",
    ]);
    assert!(out.status.success(), "{out:?}");
    let text = stdout(&out);
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "sample,key,order,coeff,value");
    // Two data rows, each carrying an exact rational coefficient.
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 2);
    assert!(rows[0].contains("/"), "expected exact rational: {}", rows[0]);
}

#[test]
fn reruns_are_byte_identical() {
    let args = [
        "coeffs",
        "--all",
        "--n",
        "3",
        "--M",
        "1",
        "--format",
        "json",
    ];
    let first = run(&args);
    let second = run(&args);
    assert!(first.status.success());
    assert_eq!(first.stdout, second.stdout);
    assert!(!first.stdout.is_empty());
}

#[test]
fn csv_and_json_agree() {
    let mut csv_args = vec!["exact", "--sample", "c=[[1,1],[0,0]]", "--rho", "1"];
    let json_out = run(&[&csv_args[..], &["--format", "json"]].concat());
    csv_args.extend(["--format", "csv"]);
    let csv_out = run(&csv_args);
    assert!(csv_out.status.success() && json_out.status.success());
    let v: serde_json::Value = serde_json::from_str(&stdout(&json_out)).unwrap();
    let value = v[0]["value"].as_f64().unwrap();
    let csv_text = stdout(&csv_out);
    let data = csv_text.lines().nth(1).unwrap();
    assert!(
        data.contains(&format!("{value}")),
        "csv `{data}` should carry {value}"
    );
}

#[test]
fn usage_errors_exit_2() {
    // Unparsable sample.
    let out = run(&["coeffs", "--sample", "c=[[1,0],[0,1]", "--M", "0"]);
    assert_eq!(out.status.code(), Some(2));
    // Unknown flag (handled by the argument parser).
    let out = run(&["coeffs", "--nope"]);
    assert_eq!(out.status.code(), Some(2));
    // Empty methods list.
    let out = run(&[
        "curve",
        "--sample",
        "c=[[1,0],[0,1]]",
        "--rho",
        "50",
        "--methods",
        "",
    ]);
    assert_eq!(out.status.code(), Some(2));
    // Unknown model preset.
    let out = run(&[
        "coeffs",
        "--model",
        "bogus",
        "--sample",
        "c=[[1,0],[0,1]]",
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn capacity_errors_exit_3() {
    // The exact rational solver refuses a state space beyond its budget.
    let out = run(&[
        "exact",
        "--sample",
        "c=[[40,40],[40,40]]",
        "--rho",
        "1",
    ]);
    assert_eq!(out.status.code(), Some(3), "{out:?}");
}

#[test]
fn table_lookup_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let store = dir.path().join("store.ndjson");
    let path = store.to_str().unwrap();
    let out = run(&["table", "--n-max", "3", "--M", "2", "--out", path]);
    assert!(out.status.success(), "{out:?}");

    // Store is line-delimited JSON with a header first.
    let content = std::fs::read_to_string(path).unwrap();
    let header: serde_json::Value =
        serde_json::from_str(content.lines().next().unwrap()).unwrap();
    assert_eq!(header["record"], "header");
    assert_eq!(header["format_version"], 1);

    // Records are sorted by canonical key.
    let keys: Vec<String> = content
        .lines()
        .skip(1)
        .map(|l| {
            let v: serde_json::Value = serde_json::from_str(l).unwrap();
            v["key"].as_str().unwrap().to_string()
        })
        .collect();
    let mut sorted = keys.clone();
    sorted.sort();
    assert_eq!(keys, sorted);

    // Writing again is byte-identical.
    let store2 = dir.path().join("store2.ndjson");
    run(&["table", "--n-max", "3", "--M", "2", "--out", store2.to_str().unwrap()]);
    assert_eq!(content, std::fs::read_to_string(&store2).unwrap());

    // Lookup at an unlinked rate returns the leading coefficient, matching a
    // fresh coeffs run.
    let lookup = run(&[
        "lookup",
        "--table",
        path,
        "--sample",
        "c=[[1,0],[0,1]]",
        "--rho",
        "inf",
        "--format",
        "json",
    ]);
    assert!(lookup.status.success(), "{lookup:?}");
    let v: serde_json::Value = serde_json::from_str(&stdout(&lookup)).unwrap();
    let fresh = run(&[
        "coeffs",
        "--sample",
        "c=[[1,0],[0,1]]",
        "--M",
        "0",
        "--format",
        "json",
    ]);
    let f: serde_json::Value = serde_json::from_str(&stdout(&fresh)).unwrap();
    assert_eq!(v[0]["exact"], f[0]["coeff"]);

    // Lookup agrees with fresh evaluation at a finite rate too.
    let lookup = run(&[
        "lookup",
        "--table",
        path,
        "--sample",
        "c=[[1,0],[0,1]]",
        "--rho",
        "50",
        "--method",
        "ps:2",
        "--format",
        "json",
    ]);
    let v: serde_json::Value = serde_json::from_str(&stdout(&lookup)).unwrap();
    let curve = run(&[
        "curve",
        "--sample",
        "c=[[1,0],[0,1]]",
        "--rho",
        "50",
        "--methods",
        "ps:2",
        "--approx-g0",
        "auto",
        "--format",
        "json",
    ]);
    let c: serde_json::Value = serde_json::from_str(&stdout(&curve)).unwrap();
    let a = v[0]["value"].as_f64().unwrap();
    let b = c[0]["value"].as_f64().unwrap();
    assert!((a - b).abs() <= 1e-15 * a.abs());

    // Missing sample key.
    let missing = run(&[
        "lookup",
        "--table",
        path,
        "--sample",
        "c=[[4,0],[0,0]]",
        "--rho",
        "50",
    ]);
    assert_eq!(missing.status.code(), Some(2));

    // Corrupted header: no value served.
    let tampered = content.replacen("\"format_version\":1", "\"format_version\":9", 1);
    std::fs::write(path, tampered).unwrap();
    let bad = run(&[
        "lookup",
        "--table",
        path,
        "--sample",
        "c=[[1,0],[0,1]]",
        "--rho",
        "50",
    ]);
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn curve_emits_row_per_rate_and_method() {
    let out = run(&[
        "curve",
        "--sample",
        "c=[[2,0],[0,1]]",
        "--rho",
        "25,50,inf",
        "--methods",
        "ps:2,pade:2",
        "--approx-g0",
        "off",
    ]);
    assert!(out.status.success(), "{out:?}");
    let text = stdout(&out);
    assert_eq!(text.lines().count(), 1 + 3 * 2);
    assert!(text.lines().any(|l| l.starts_with("inf,pade:2,")));
}

#[test]
fn exact_matches_series_at_large_rate() {
    // At rho = 10^6 the exact value is close to the order-1 partial sum.
    let exact = run(&[
        "exact",
        "--sample",
        "c=[[1,0],[0,1]]",
        "--rho",
        "1000000",
        "--format",
        "json",
    ]);
    let e: serde_json::Value = serde_json::from_str(&stdout(&exact)).unwrap();
    let curve = run(&[
        "curve",
        "--sample",
        "c=[[1,0],[0,1]]",
        "--rho",
        "1000000",
        "--methods",
        "ps:1",
        "--format",
        "json",
    ]);
    let c: serde_json::Value = serde_json::from_str(&stdout(&curve)).unwrap();
    let ev = e[0]["value"].as_f64().unwrap();
    let cv = c[0]["value"].as_f64().unwrap();
    assert!(((ev - cv) / ev).abs() < 1e-9, "{ev} vs {cv}");
}

#[test]
fn out_file_is_written_atomically() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("nested.csv");
    let out = run(&[
        "coeffs",
        "--sample",
        "c=[[1,0],[0,1]]",
        "--M",
        "0",
        "--out",
        path.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    assert!(Path::new(&path).exists());
    // No leftover temporaries in the directory.
    let extras: Vec<_> = std::fs::read_dir(dir.path())
        .unwrap()
        .filter(|e| e.as_ref().unwrap().path() != path)
        .collect();
    assert!(extras.is_empty());
}

#[test]
fn selection_flag_produces_float_coefficients() {
    let out = run(&[
        "coeffs",
        "--sample",
        "c=[[1,0],[0,1]]",
        "--M",
        "1",
        "--selection",
        "sigma=[[0.1,0],[0,-0.1]]",
        "--format",
        "json",
    ]);
    assert!(out.status.success(), "{out:?}");
    let v: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert!(v[0]["coeff"].is_null());
    assert!(v[0]["value"].as_f64().unwrap() > 0.0);
}
