use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_gausspid"));
    // Keep the host environment from leaking flag values into the tests.
    for (k, _) in std::env::vars() {
        if k.starts_with("GAUSSPID_") {
            c.env_remove(k);
        }
    }
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn ok_json(o: &Output) -> Value {
    assert_eq!(code(o), 0, "stderr: {}", stderr(o));
    serde_json::from_slice(&o.stdout).expect("stdout is JSON")
}

fn schema_check(schema_file: &str, doc: &Value) {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("schema").join(schema_file);
    let schema: Value = serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
    let validator = jsonschema::validator_for(&schema).expect("schema compiles");
    let errors: Vec<String> = validator.iter_errors(doc).map(|e| format!("{} at {}", e, e.instance_path())).collect();
    assert!(errors.is_empty(), "{schema_file}: {errors:#?}");
}

/// Writes samples and the layout sidecar for `system`; returns (csv, layout).
fn sample(dir: &TempDir, system: &str, m: usize, seed: u64) -> (PathBuf, PathBuf) {
    let csv = dir.path().join(format!("{}_{m}_{seed}.csv", system.replace(':', "_")));
    let layout = csv.with_extension("layout.json");
    let o = run(&[
        "sample",
        "--system",
        system,
        "--samples",
        &m.to_string(),
        "--seed",
        &seed.to_string(),
        "--out",
        csv.to_str().unwrap(),
        "--layout",
        layout.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "stderr: {}", stderr(&o));
    (csv, layout)
}

fn values(doc: &Value) -> Vec<(String, f64)> {
    doc["reports"]
        .as_array()
        .unwrap()
        .iter()
        .flat_map(|r| r["values"].as_array().unwrap().iter())
        .map(|v| (v["name"].as_str().unwrap().to_string(), v["value"].as_f64().unwrap()))
        .collect()
}

fn value(doc: &Value, name: &str) -> f64 {
    values(doc).into_iter().find(|(n, _)| n == name).unwrap_or_else(|| panic!("{name} missing")).1
}

#[test]
fn estimate_recovers_pure_unique_configuration() {
    let dir = TempDir::new().unwrap();
    let (csv, layout) = sample(&dir, "pure-unique", 20_000, 3);
    let o = run(&["estimate", "--input", csv.to_str().unwrap(), "--layout", layout.to_str().unwrap(), "--measures", "red,un,syn"]);
    let doc = ok_json(&o);
    schema_check("estimate-report.schema.json", &doc);
    assert_eq!(doc["samples"], 20_000);
    let un1 = value(&doc, "Un_1");
    let un2 = value(&doc, "Un_2");
    assert!((un1 - 0.35).abs() <= 0.03, "Un_1 = {un1}");
    assert!(un2.abs() <= 0.03, "Un_2 = {un2}");
    assert!(value(&doc, "Red").abs() <= 0.03);
}

#[test]
fn estimate_csv_output_lists_every_value() {
    let dir = TempDir::new().unwrap();
    let (csv, layout) = sample(&dir, "five-source", 500, 0);
    let o = run(&[
        "estimate",
        "--input",
        csv.to_str().unwrap(),
        "--layout",
        layout.to_str().unwrap(),
        "--measures",
        "spectrum,tse",
        "--format",
        "csv",
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = String::from_utf8(o.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "measure,name,value,unit,lambda,samples");
    assert_eq!(lines.len(), 1 + 4 + 1);
    assert!(lines[1].starts_with("spectrum,SE_2,"));
    assert!(lines[5].starts_with("tse,TSE,"));
}

#[test]
fn redundancy_needs_two_sources() {
    let dir = TempDir::new().unwrap();
    let (csv, layout) = sample(&dir, "scaling:3", 200, 0);
    let o = run(&["estimate", "--input", csv.to_str().unwrap(), "--layout", layout.to_str().unwrap(), "--measures", "red"]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
}

#[test]
fn rank_deficient_sample_fails_without_ridge_and_succeeds_with_it() {
    let dir = TempDir::new().unwrap();
    let (csv, layout) = sample(&dir, "five-source", 5, 1);
    let out = dir.path().join("report.json");
    let base = ["estimate", "--input", csv.to_str().unwrap(), "--layout", layout.to_str().unwrap(), "--out", out.to_str().unwrap()];

    let o = run(&base);
    assert_eq!(code(&o), 3, "{}", stderr(&o));
    assert!(stderr(&o).contains("--ridge"), "no ridge hint: {}", stderr(&o));
    assert!(!out.exists(), "failed run left a report behind");
    let leftovers: Vec<_> = std::fs::read_dir(dir.path())
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .filter(|n| !n.ends_with(".csv") && !n.ends_with(".layout.json"))
        .collect();
    assert!(leftovers.is_empty(), "partial files: {leftovers:?}");

    let o = bin().args(base).args(["--ridge", "1e-4"]).output().unwrap();
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let doc: Value = serde_json::from_slice(&std::fs::read(&out).unwrap()).unwrap();
    schema_check("estimate-report.schema.json", &doc);
    assert!(value(&doc, "TSE").is_finite());
    assert_eq!(doc["reports"][0]["lambda"].as_f64(), Some(1e-4));
}

#[test]
fn malformed_inputs_exit_with_input_error() {
    let dir = TempDir::new().unwrap();
    let (csv, layout) = sample(&dir, "five-source", 50, 0);
    let (csv, layout) = (csv.to_str().unwrap(), layout.to_str().unwrap());

    let short = dir.path().join("short.csv");
    std::fs::write(&short, "1,2,3,4,5,6,7\n1,2,3\n").unwrap();
    let o = run(&["estimate", "--input", short.to_str().unwrap(), "--layout", layout]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("row 2"), "{}", stderr(&o));

    let o = run(&["estimate", "--input", csv, "--layout", r#"{"target_dim": 2, "source_dims": [1,1,1,1,1], "extra": 1}"#]);
    assert_eq!(code(&o), 2, "unknown layout key accepted: {}", stderr(&o));

    let o = run(&["estimate", "--input", csv, "--layout", r#"{"target_dim": 2, "source_dims": [1,1,1,1]}"#]);
    assert_eq!(code(&o), 2, "column mismatch accepted");

    let o = run(&["estimate", "--input", csv, "--layout", layout, "--measures", "se"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("--order"));

    let o = run(&["estimate", "--input", csv, "--layout", layout, "--measures", "syn", "--subset", "0,1"]);
    assert_eq!(code(&o), 2);

    let o = run(&["estimate", "--input", csv, "--layout", layout, "--ridge", "-1"]);
    assert_eq!(code(&o), 2);
}

fn read_dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().into_string().unwrap(), std::fs::read(e.path()).unwrap())
        })
        .collect();
    files.sort();
    files
}

#[test]
fn benchmark_outputs_are_byte_identical_across_runs() {
    let dir = TempDir::new().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for (out, threads) in [(&a, "1"), (&b, "3")] {
        let o = run(&["--threads", threads, "benchmark", "recovery", "--seed", "7", "--trials", "8", "--out", out.to_str().unwrap()]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
    }
    let (fa, fb) = (read_dir_bytes(&a), read_dir_bytes(&b));
    let names: Vec<&str> = fa.iter().map(|(n, _)| n.as_str()).collect();
    assert_eq!(names, ["recovery_summary.csv", "recovery_summary.json", "recovery_trials.csv"]);
    for ((name, x), (_, y)) in fa.iter().zip(&fb) {
        if name.ends_with(".json") {
            // The echoed run configuration records the thread count and output path; nothing else may differ.
            let mut x: Value = serde_json::from_slice(x).unwrap();
            let mut y: Value = serde_json::from_slice(y).unwrap();
            for v in [&mut x, &mut y] {
                v["metadata"]["run"]["threads"] = Value::Null;
                v["metadata"]["run"]["command"]["benchmark"]["out"] = Value::Null;
            }
            assert_eq!(x, y);
        } else {
            assert!(x == y, "{name} differs between runs");
        }
    }
    let doc: Value = serde_json::from_slice(&fa[1].1).unwrap();
    schema_check("benchmark-summary.schema.json", &doc);
    let trials = String::from_utf8(fa[2].1.clone()).unwrap();
    assert_eq!(trials.lines().next().unwrap(), "group,trial,seed,samples,lambda,n_sources,quantity,value,success");
}

#[test]
fn recovery_summary_reports_population_and_bias() {
    let o = run(&["benchmark", "recovery"]);
    let doc = ok_json(&o);
    schema_check("benchmark-summary.schema.json", &doc);
    let aggs = doc["aggregates"].as_array().unwrap();
    let se2 = aggs.iter().find(|a| a["quantity"] == "SE_2").expect("SE_2 aggregate");
    assert_eq!(se2["count"], 50);
    assert_eq!(se2["samples"], 1000);
    let population = se2["population"].as_f64().unwrap();
    assert!((population - 3.727).abs() < 1e-3, "population SE_2 = {population}");
    let mean = se2["mean"].as_f64().unwrap();
    let sd = se2["sd"].as_f64().unwrap();
    // The mean of 50 trials sits within a few standard errors of the population value.
    assert!((mean - population).abs() < 4.0 * sd / 50f64.sqrt(), "mean {mean}, sd {sd}");
}

#[test]
fn two_source_benchmark_matches_table() {
    let table = [
        ("pure-redundancy", [0.14, 0.20, 0.21, 0.00]),
        ("pure-unique", [0.00, 0.35, 0.00, 0.00]),
        ("pure-synergy", [0.06, 0.15, 0.14, 0.20]),
        ("mixed-correlated", [0.13, 0.19, 0.19, 0.13]),
        ("mixed-asymmetric", [0.06, 0.50, 0.03, 0.32]),
    ];
    let doc = ok_json(&run(&["benchmark", "two-source"]));
    schema_check("benchmark-summary.schema.json", &doc);
    let aggs = doc["aggregates"].as_array().unwrap();
    for (group, row) in table {
        for (q, want) in ["Red", "Un_1", "Un_2", "Syn"].iter().zip(row) {
            let a = aggs.iter().find(|a| a["group"] == group && a["quantity"] == *q).unwrap();
            let got = a["mean"].as_f64().unwrap();
            assert!((got - want).abs() <= 0.03, "{group} {q}: {got} vs {want}");
        }
    }
}

#[test]
fn scaling_benchmark_writes_medians() {
    let dir = TempDir::new().unwrap();
    let o = run(&[
        "benchmark",
        "scaling",
        "--methods",
        "tse,spectrum",
        "--n-grid",
        "3,4,5",
        "--trials",
        "2",
        "--samples",
        "200",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let medians = std::fs::read_to_string(dir.path().join("scaling_medians.csv")).unwrap();
    let lines: Vec<&str> = medians.lines().collect();
    assert_eq!(lines[0], "method,n_sources,median_seconds,status");
    assert_eq!(lines.len(), 1 + 6);
    let doc: Value = serde_json::from_slice(&std::fs::read(dir.path().join("scaling_summary.json")).unwrap()).unwrap();
    schema_check("benchmark-summary.schema.json", &doc);
    assert_eq!(doc["metadata"]["unit"], "seconds");

    let o = run(&["benchmark", "scaling", "--methods", "bogus"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn ridge_and_convergence_benchmarks_run_on_small_grids() {
    let doc = ok_json(&run(&["benchmark", "ridge", "--sample-grid", "5,50", "--lambda-grid", "0,1e-4", "--trials", "4"]));
    schema_check("benchmark-summary.schema.json", &doc);
    let aggs = doc["aggregates"].as_array().unwrap();
    assert_eq!(aggs.len(), 4);
    let singular = aggs.iter().find(|a| a["samples"] == 5 && a["lambda"] == 0.0).unwrap();
    assert_eq!(singular["successes"], 0);
    assert!(singular["mean"].is_null());

    let doc = ok_json(&run(&["benchmark", "convergence", "--sample-grid", "100,400", "--trials", "6"]));
    schema_check("benchmark-summary.schema.json", &doc);
    let slopes = doc["metadata"]["sd_slope"].as_object().unwrap();
    assert_eq!(slopes.len(), 5);
    assert!(slopes.values().all(|v| v.as_f64().unwrap() < 0.0));
}

#[test]
fn validate_passes_by_default_and_fails_on_injected_fault() {
    let o = run(&["validate"]);
    let doc = ok_json(&o);
    schema_check("validation-report.schema.json", &doc);
    assert_eq!(doc["passed"], true);
    assert!(stderr(&o).lines().all(|l| l.starts_with("PASS")));

    let o = run(&["validate", "--inject-fault", "--systems", "3", "--samples", "20000"]);
    assert_eq!(code(&o), 1);
    let doc: Value = serde_json::from_slice(&o.stdout).unwrap();
    schema_check("validation-report.schema.json", &doc);
    assert_eq!(doc["passed"], false);
    assert!(stderr(&o).contains("FAIL"));

    let doc = ok_json(&run(&["validate", "--system", "five-source", "--families", "C2"]));
    assert_eq!(doc["passed"], true);
    let families: Vec<&str> = doc["checks"]
        .as_array()
        .unwrap()
        .iter()
        .filter_map(|c| c["system"].as_str().unwrap().split_once(", family ").map(|(_, f)| f))
        .collect();
    assert!(!families.is_empty());
    for f in families {
        let members: Vec<&str> = f.split(';').collect();
        assert_eq!(members.len(), 10, "{f}");
        assert!(members.iter().all(|m| m.matches(',').count() == 1), "{f}");
    }
}

#[test]
fn environment_variables_set_flags_and_flags_win() {
    let args = ["benchmark", "recovery", "--trials", "3", "--format", "csv"];
    let seeded = |seed: &str| run(&[&args[..], &["--seed", seed]].concat()).stdout;
    let from_env = bin().args(args).env("GAUSSPID_SEED", "11").output().unwrap();
    assert_eq!(code(&from_env), 0);
    assert_eq!(from_env.stdout, seeded("11"));
    assert_ne!(from_env.stdout, seeded("12"));

    let both = bin().args(args).args(["--seed", "12"]).env("GAUSSPID_SEED", "11").output().unwrap();
    assert_eq!(both.stdout, seeded("12"));
}

#[test]
fn sample_writes_header_and_layout() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("x.csv");
    let layout = dir.path().join("x.json");
    let o = run(&[
        "sample",
        "--system",
        "five-source-generative",
        "--samples",
        "10",
        "--header",
        "--out",
        out.to_str().unwrap(),
        "--layout",
        layout.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = std::fs::read_to_string(&out).unwrap();
    assert_eq!(text.lines().next().unwrap(), "T_1,T_2,S1,S2,S3,S4,S5");
    assert_eq!(text.lines().count(), 11);
    let spec: Value = serde_json::from_str(&std::fs::read_to_string(&layout).unwrap()).unwrap();
    assert_eq!(spec["target_dim"], 2);

    let o = run(&["estimate", "--input", out.to_str().unwrap(), "--layout", layout.to_str().unwrap(), "--header"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));

    assert_eq!(code(&run(&["sample", "--system", "nope"])), 2);
}
