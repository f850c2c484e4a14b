//! End-to-end checks of the command-line surface: the documented
//! example invocations, output formats, determinism, and exit codes.

use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_sphere-gns"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout_str(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).expect("utf8 output")
}

/// Parses CSV body rows (skipping the # metadata line and the header).
fn csv_rows(text: &str) -> Vec<Vec<String>> {
    text.lines()
        .filter(|l| !l.starts_with('#') && !l.is_empty())
        .skip(1)
        .map(|l| l.split(',').map(|c| c.to_string()).collect())
        .collect()
}

#[test]
fn branch_symmetric_rows_pin_lambda() {
    let out = run(&[
        "branch", "--family", "gns0", "--d", "3", "--p", "3", "--lambda", "1:10:50",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = stdout_str(&out);
    assert!(text.starts_with("# {"), "metadata header line missing");
    let rows = csv_rows(&text);
    assert_eq!(rows.len(), 50);
    let mut symmetric_seen = 0;
    for row in &rows {
        let lambda: f64 = row[0].parse().unwrap();
        let mu: f64 = row[1].parse().unwrap();
        if lambda <= 3.0 {
            assert!((mu - lambda).abs() <= 1e-8, "lambda {lambda}: mu {mu}");
            assert_eq!(row[2], "true");
            symmetric_seen += 1;
        } else {
            assert!(mu < lambda, "lambda {lambda}: mu {mu}");
        }
    }
    assert!(symmetric_seen >= 10);
}

#[test]
fn threshold_example_hits_six() {
    let out = run(&[
        "threshold", "--family", "gns1", "--d", "3", "--p", "3", "--theta", "0.5", "--tol",
        "1e-3",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rows = csv_rows(&stdout_str(&out));
    assert_eq!(rows.len(), 1);
    let estimate: f64 = rows[0][6].parse().unwrap();
    assert!((estimate - 6.0).abs() <= 1e-3, "estimate {estimate}");
}

#[test]
fn verify_carre_du_champ_passes() {
    let out = run(&["verify", "--suite", "carre-du-champ", "--d", "3", "--p", "4"]);
    assert!(out.status.success());
    let text = stdout_str(&out);
    assert!(text.contains("m-interval,PASS"));
    assert!(text.contains("discriminant-roots,PASS"));
    assert!(text.contains("k-inequality-m0,PASS"));
    assert!(!text.contains(",FAIL,"));
}

#[test]
fn reruns_are_bit_identical() {
    let args = [
        "branch", "--family", "gns0", "--d", "3", "--p", "3.5", "--lambda", "1:4:6",
        "--grid-n", "48", "--no-grid-check",
    ];
    let a = run(&args);
    let b = run(&args);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn json_format_and_config_round_trip() {
    let dir = std::env::temp_dir().join("sphere-gns-cli-test");
    std::fs::create_dir_all(&dir).unwrap();
    let out_path = dir.join("euclidean.json");
    let out = run(&[
        "euclidean", "--d", "3", "--p", "3", "--theta", "1", "--format", "json", "--out",
        out_path.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let doc: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&out_path).unwrap()).unwrap();
    assert_eq!(doc["metadata"]["config"]["command"], "euclidean");
    assert_eq!(doc["metadata"]["version"], env!("CARGO_PKG_VERSION"));
    let cols: Vec<String> = doc["columns"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_str().unwrap().to_string())
        .collect();
    assert!(cols.contains(&"mu_infinity".to_string()));

    // the embedded config re-runs and reproduces the artifact
    let cfg_path = dir.join("cfg.json");
    std::fs::write(&cfg_path, doc["metadata"]["config"].to_string()).unwrap();
    let first = std::fs::read(&out_path).unwrap();
    std::fs::remove_file(&out_path).unwrap();
    let rerun = run(&["run", "--config", cfg_path.to_str().unwrap()]);
    assert!(rerun.status.success());
    assert_eq!(std::fs::read(&out_path).unwrap(), first);
}

#[test]
fn flow_writes_trace_with_identities() {
    let out = run(&[
        "flow", "--d", "3", "--p", "4", "--m", "0.7", "--t-end", "0.05", "--grid-n", "48",
    ]);
    assert!(out.status.success());
    let text = stdout_str(&out);
    let meta: serde_json::Value = serde_json::from_str(&text.lines().next().unwrap()[2..]).unwrap();
    assert!(meta["mass_drift_per_unit_time"].as_f64().unwrap() < 1e-8);
    let rows = csv_rows(&text);
    assert!(rows.len() > 100);
    // dirichlet decreases along the trace
    let d0: f64 = rows[0][2].parse().unwrap();
    let dl: f64 = rows.last().unwrap()[2].parse().unwrap();
    assert!(dl < d0);
}

#[test]
fn exit_codes_follow_error_class() {
    // malformed grid: validation
    let out = run(&["branch", "--family", "gns0", "--lambda", "1:10"]);
    assert_eq!(out.status.code(), Some(1));
    // supercritical exponent: validation
    let out = run(&[
        "branch", "--family", "gns0", "--d", "3", "--p", "7", "--lambda", "1:2:3",
    ]);
    assert_eq!(out.status.code(), Some(1));
    // gns1 without theta: validation
    let out = run(&["threshold", "--family", "gns1", "--d", "3", "--p", "3"]);
    assert_eq!(out.status.code(), Some(1));
    // sweep with no symmetry-broken point: numerical
    let out = run(&[
        "threshold", "--family", "gns0", "--d", "3", "--p", "3", "--lambda", "1:2:3",
        "--grid-n", "48", "--no-grid-check",
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn thread_cap_is_respected() {
    let out = bin()
        .args(["verify", "--suite", "carre-du-champ", "--d", "2", "--p", "4"])
        .env("SPHERE_GNS_THREADS", "1")
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(!stdout_str(&out).contains(",FAIL,"));
}
