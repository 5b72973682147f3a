use std::fs;
use std::path::Path;
use std::process::Command;

use serde_json::Value;
use tempfile::TempDir;
use witten_cli::config::parse;
use witten_cli::{execute, prepare, sweep_report, CliError, ExperimentConfig, Overrides, Subcommand};

fn wl(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_wl")).args(args).output().unwrap()
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap()
}

fn csv_rows(p: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::Reader::from_path(p).unwrap();
    let head = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r.records().map(|x| x.unwrap().iter().map(String::from).collect()).collect();
    (head, rows)
}

fn col(head: &[String], name: &str) -> usize {
    head.iter().position(|h| h == name).unwrap()
}

fn in_dir(dir: &TempDir) -> Overrides {
    Overrides { out: Some(dir.path().to_path_buf()), ..Overrides::default() }
}

#[test]
fn default_sweep_tracks_the_prediction() {
    let dir = TempDir::new().unwrap();
    let r = prepare(Subcommand::Sweep, None, &in_dir(&dir)).unwrap();
    let rep = sweep_report(&r).unwrap();
    assert_eq!(rep.rows.len(), 5);
    for row in &rep.rows {
        assert_eq!(row.n_small, 2, "eps {}", row.eps);
        assert!((row.ratio - 1.0).abs() < 0.02, "eps {}: {}", row.eps, row.ratio);
        assert!(row.lower_bound <= row.lambda2 && row.lambda2 <= row.quasimode_rayleigh * (1.0 + 1e-12));
    }
    let fit = rep.fit.unwrap();
    assert!((fit.e_fit - 1.0).abs() < 0.02, "{}", fit.e_fit);
}

#[test]
fn landscape_report() {
    let dir = TempDir::new().unwrap();
    let out = wl(&["landscape", "--out", dir.path().to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let j = read_json(&dir.path().join("landscape.json"));
    assert_eq!(j["schema_version"], 1);
    assert_eq!(j["critical_points"].as_array().unwrap().len(), 3);
    assert!((j["E"].as_f64().unwrap() - 1.0).abs() < 1e-10);
    assert!((j["A"].as_f64().unwrap() - 1.800632).abs() < 1e-5);
    assert_eq!(j["box_validation"]["ok"], true);
    assert_eq!(j["config"]["potential"], "double_well_1d");
    let (head, rows) = csv_rows(&dir.path().join("landscape.csv"));
    assert_eq!(rows.len(), 3);
    assert_eq!(rows.iter().filter(|r| r[col(&head, "kind")] == "saddle").count(), 1);
}

#[test]
fn empty_eps_list_is_a_config_error() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("c.json");
    fs::write(&cfg, "{\n  \"k\": 4,\n  \"eps_list\": []\n}\n").unwrap();
    let err = prepare(Subcommand::Sweep, Some(&cfg), &in_dir(&dir)).unwrap_err();
    assert_eq!(err.field, "eps_list");
    assert_eq!(err.line, 3);
    assert_eq!(CliError::from(err).exit_code(), 2);

    let out = wl(&["sweep", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 3"));
    assert!(!dir.path().join("sweep.json").exists());
}

#[test]
fn config_errors_name_line_and_field() {
    let e = parse("{\n  \"k\": 4,\n  \"seed\": \"x\"\n}").unwrap_err();
    assert_eq!((e.line, e.field.as_str()), (3, "seed"));
    let e = parse("{\n  \"simulation\": {\n    \"radius\": 1\n  }\n}").unwrap_err();
    assert_eq!(e.line, 3);
    assert!(e.field.starts_with("simulation"), "{}", e.field);

    let bad = |text: &str, field: &str| {
        let dir = TempDir::new().unwrap();
        let mut c = parse(text).unwrap();
        c.apply(&in_dir(&dir));
        let e = c.resolve(text, false).unwrap_err();
        assert_eq!(e.field, field, "{e}");
    };
    bad("{\"eps_list\": [0.1, 0.2]}", "eps_list");
    bad("{\"eps_list\": [0.1, -0.2]}", "eps_list");
    bad("{\"k\": 0}", "k");
    bad("{\"tol\": 0}", "tol");
    bad("{\"threads\": 0}", "threads");
    bad("{\"box\": {\"center\": [0, 0], \"half_widths\": [1, 1]}}", "box");
    bad("{\"potential\": \"no_such_potential\"}", "potential");
}

#[test]
fn flags_override_the_file() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("c.json");
    fs::write(&cfg, r#"{"eps_list": [0.3, 0.2], "seed": 1}"#).unwrap();
    let o = Overrides { eps: Some(vec![0.15]), seed: Some(9), ..in_dir(&dir) };
    let r = prepare(Subcommand::Spectrum, Some(&cfg), &o).unwrap();
    assert_eq!(r.eps_list, vec![0.15]);
    assert_eq!(r.config.seed, 9);
    assert_eq!(r.out, dir.path());
    let d = ExperimentConfig::default();
    assert_eq!((d.k, d.seed), (4, 2024));
}

#[test]
fn sweep_csv_is_self_consistent() {
    let dir = TempDir::new().unwrap();
    let o = Overrides { eps: Some(vec![0.2, 0.1]), ..in_dir(&dir) };
    let r = prepare(Subcommand::Sweep, None, &o).unwrap();
    execute(Subcommand::Sweep, &r).unwrap();
    let (head, rows) = csv_rows(&dir.path().join("sweep.csv"));
    assert_eq!(rows.len(), 2);
    for row in &rows {
        let f = |n: &str| row[col(&head, n)].parse::<f64>().unwrap();
        let eps = f("eps");
        assert!((f("predicted") - eps * f("ek_A") * (-f("ek_E") / eps).exp()).abs() <= 1e-12 * f("predicted"));
        assert!((f("ratio") - f("lambda2") / f("predicted")).abs() <= 1e-14 * f("ratio"));
        assert!(f("lambda1") < f("lambda2") && f("lambda2") < f("lambda3"));
    }
    let (head, conv) = csv_rows(&dir.path().join("convergence.csv"));
    assert_eq!(head[4], "(ratio-1)/sqrt(eps)");
    for (a, b) in conv.iter().zip(&rows) {
        assert_eq!(a[0], b[0]);
        let x: Vec<f64> = a.iter().map(|s| s.parse().unwrap()).collect();
        assert!((x[4] - (x[3] - 1.0) / x[0].sqrt()).abs() < 1e-12);
    }
    let j = read_json(&dir.path().join("sweep.json"));
    assert_eq!(j["rows"].as_array().unwrap().len(), 2);
    assert_eq!(j["config"]["eps_list"], serde_json::json!([0.2, 0.1]));
}

#[test]
fn reruns_are_byte_identical() {
    let (a, b) = (TempDir::new().unwrap(), TempDir::new().unwrap());
    let cfg = a.path().join("c.json");
    fs::write(&cfg, r#"{"simulation": {"n_trajectories": 300}}"#).unwrap();
    let c = cfg.to_str().unwrap();
    for (dir, threads) in [(&a, "1"), (&b, "4")] {
        let d = dir.path().to_str().unwrap();
        for cmd in ["simulate", "spectrum"] {
            let out = wl(&[cmd, "--config", c, "--out", d, "--eps", "0.3", "--threads", threads]);
            assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        }
    }
    let before = fs::read(a.path().join("simulate.json")).unwrap();
    let d = a.path().to_str().unwrap();
    assert!(wl(&["simulate", "--config", c, "--out", d, "--eps", "0.3", "--threads", "1"]).status.success());
    assert_eq!(before, fs::read(a.path().join("simulate.json")).unwrap());
    for f in ["simulate.csv", "simulate.json", "spectrum.csv", "spectrum.json"] {
        let x = fs::read(a.path().join(f)).unwrap();
        let y = fs::read(b.path().join(f)).unwrap();
        // the output directory and thread count are echoed, nothing else may differ
        if f.ends_with(".json") {
            let (mut x, mut y): (Value, Value) = (serde_json::from_slice(&x).unwrap(), serde_json::from_slice(&y).unwrap());
            x["config"]["out"] = Value::Null;
            y["config"]["out"] = Value::Null;
            x["config"]["threads"] = Value::Null;
            y["config"]["threads"] = Value::Null;
            assert_eq!(x, y, "{f}");
        } else {
            assert_eq!(x, y, "{f}");
        }
    }
}

#[test]
fn simulate_writes_one_file_per_eps() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("c.json");
    fs::write(&cfg, r#"{"eps_list": [0.4, 0.35], "simulation": {"n_trajectories": 50}}"#).unwrap();
    let r = prepare(Subcommand::Simulate, Some(&cfg), &in_dir(&dir)).unwrap();
    execute(Subcommand::Simulate, &r).unwrap();
    for eps in ["0.4", "0.35"] {
        let (head, rows) = csv_rows(&dir.path().join(format!("simulate_eps_{eps}.csv")));
        assert_eq!(head, ["seed", "traj_index", "hit", "time", "steps"]);
        assert_eq!(rows.len(), 50);
    }
    let j = read_json(&dir.path().join("simulate.json"));
    for a in j["aggregates"].as_array().unwrap() {
        let p = a["mean"].as_f64().unwrap() * a["lambda2_ref"].as_f64().unwrap();
        assert!((a["product"].as_f64().unwrap() - p).abs() < 1e-12 * p);
    }
    let r = prepare(Subcommand::Simulate, None, &in_dir(&dir)).unwrap();
    assert_eq!(r.eps_list, vec![0.3]);
}

#[test]
fn exit_codes() {
    let dir = TempDir::new().unwrap();
    let d = dir.path().to_str().unwrap();
    assert_eq!(wl(&["landscape", "--out", d, "--potential", "nope"]).status.code(), Some(2));
    assert_eq!(wl(&["spectrum", "--out", d, "--eps", "0.1,0.2"]).status.code(), Some(2));
    assert_eq!(wl(&["spectrum", "--out", d, "--eps", "0.2", "--threads", "0"]).status.code(), Some(2));
    // one minimum: the potential does not describe a two-well experiment
    assert_eq!(wl(&["landscape", "--out", d, "--potential", "single_well_1d"]).status.code(), Some(2));
    // a flat quartic bottom has no separating saddle
    let cfg = dir.path().join("flat.json");
    fs::write(
        &cfg,
        r#"{"potential": {"name": "flat", "dim": 1, "kind": "polynomial", "coeffs": {"4": 1.0}},
            "box": {"center": [0.0], "half_widths": [1.5]}}"#,
    )
    .unwrap();
    let flat = wl(&["landscape", "--config", cfg.to_str().unwrap(), "--out", d]);
    assert_eq!(flat.status.code(), Some(4), "{}", String::from_utf8_lossy(&flat.stderr));
    assert!(wl(&["laplace-check", "--out", d]).status.success());
    assert!(wl(&["quasimode", "--out", d, "--eps", "0.1"]).status.success());
}

#[test]
fn operator_dump_and_spectrum_report() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("c.json");
    fs::write(&cfg, r#"{"potential": "triple_well_1d", "eps_list": [0.1], "dump_operator": true}"#).unwrap();
    let r = prepare(Subcommand::Spectrum, Some(&cfg), &in_dir(&dir)).unwrap();
    execute(Subcommand::Spectrum, &r).unwrap();
    let j = read_json(&dir.path().join("spectrum.json"));
    assert_eq!(j["spectra"][0]["n_small"], 3);
    assert!(fs::read_to_string(dir.path().join("operator_eps_0.1.txt")).unwrap().lines().count() > 10);
}
