use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn recdev(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_recdev"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("spawn recdev")
}

fn read(path: impl AsRef<Path>) -> String {
    std::fs::read_to_string(path.as_ref()).unwrap_or_else(|e| panic!("{}: {e}", path.as_ref().display()))
}

fn rows(csv: &str) -> Vec<Vec<String>> {
    csv.lines().skip(1).map(|l| l.split(',').map(str::to_string).collect()).collect()
}

#[test]
fn rate_table_marks_infinite_rates() {
    let dir = tempfile::tempdir().unwrap();
    let out = recdev(dir.path(), &["rate", "--t-grid", "-1:3:0.1", "--out", "o"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = read(dir.path().join("o/rate.csv"));
    assert!(csv.starts_with("t_or_delta,I,I_x,J,g_U,g_tilde\n"));
    let rows = rows(&csv);
    assert_eq!(rows.len(), 41);
    for r in &rows {
        let t: f64 = r[0].parse().unwrap();
        if t <= 0.0 {
            assert_eq!(r[1], "inf", "Gaussian kernel: I({t}) must be +inf");
        } else {
            assert_ne!(r[1], "inf");
        }
    }
}

#[test]
fn cgf_rows_approach_the_limit() {
    let dir = tempfile::tempdir().unwrap();
    let out = recdev(dir.path(), &["cgf", "--u", "1", "--n", "100,1000,10000"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rows = rows(&read(dir.path().join("cgf.csv")));
    assert_eq!(rows.len(), 3);
    let err: Vec<f64> = rows.iter().map(|r| r[4].parse().unwrap()).collect();
    assert!(err[0] > err[1] && err[1] > err[2], "{err:?}");
}

#[test]
fn simulate_and_chernoff_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("c.json"),
        r#"{"bandwidth": {"c": 0.35, "a": 0.3}, "scaling": {"kind": "power", "b": 0.1},
            "delta": [0.2, 0.3], "n_list": [100, 400], "replications": 300}"#,
    )
    .unwrap();
    for cmd in ["simulate", "chernoff"] {
        let mut files = Vec::new();
        for (k, threads) in ["1", "3"].iter().enumerate() {
            let out_dir = format!("{cmd}{k}");
            let out = Command::new(env!("CARGO_BIN_EXE_recdev"))
                .current_dir(dir.path())
                .env("RECDEV_THREADS", threads)
                .args([cmd, "--config", "c.json", "--seed", "42", "--out", &out_dir])
                .output()
                .unwrap();
            assert_ne!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
            files.push((
                read(dir.path().join(format!("{out_dir}/{cmd}.csv"))),
                read(dir.path().join(format!("{out_dir}/{cmd}_summary.json"))),
            ));
        }
        assert_eq!(files[0], files[1], "{cmd} output depends on the thread count");
    }
}

#[test]
fn summary_echoes_overrides_and_exit_code_follows_verdicts() {
    let dir = tempfile::tempdir().unwrap();
    // 200 replications are far too few for the 30% gap: a failing verdict.
    let out = recdev(
        dir.path(),
        &[
            "simulate",
            "--set",
            "bandwidth.c=0.35",
            "--set",
            "scaling={\"kind\": \"power\", \"b\": 0.1}",
            "--n",
            "50,100",
            "--replications",
            "200",
        ],
    );
    let summary: Value = serde_json::from_str(&read(dir.path().join("simulate_summary.json"))).unwrap();
    let verdicts = summary["verdicts"].as_array().unwrap();
    let all_pass = verdicts.iter().all(|v| v["passed"] == Value::Bool(true));
    assert_eq!(out.status.code(), Some(if all_pass { 0 } else { 1 }));
    let keys: Vec<&str> = summary["overrides"].as_array().unwrap().iter().map(|o| o["key"].as_str().unwrap()).collect();
    assert_eq!(keys, ["bandwidth.c", "scaling", "n_list", "replications"]);
    assert_eq!(summary["config"]["scaling.b"], 0.1);
    assert_eq!(summary["config"]["bandwidth.c"], 0.35);
    for key in ["config", "overrides", "policy", "per_n", "verdicts"] {
        assert!(summary.get(key).is_some(), "missing {key}");
    }
    assert_eq!(summary["policy"]["rate_tolerance"], 0.3);
}

#[test]
fn hypothesis_violations_are_reported() {
    let dir = tempfile::tempdir().unwrap();
    let out = recdev(dir.path(), &["rate", "--set", "bandwidth.a=0.5", "--set", "alpha=[1]"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("(H3): a < 1/(d+2|α|)=1/3"), "{err}");

    let out = recdev(dir.path(), &["simulate", "--set", "bandwidth.kind=power_log"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("(H2): LDP density case requires h_n=cn^{−a}"));
}

#[test]
fn config_errors_carry_context() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.json"), "{\n  \"seed\": 1,\n  \"d\": ,\n}\n").unwrap();
    let out = recdev(dir.path(), &["rate", "--config", "bad.json"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 3"));

    std::fs::write(dir.path().join("field.json"), r#"{"bandwidth": {"c": "wide"}}"#).unwrap();
    let out = recdev(dir.path(), &["rate", "--config", "field.json"]);
    assert!(String::from_utf8_lossy(&out.stderr).contains("bandwidth.c"));
}

#[test]
fn estimate_from_a_file() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("obs.txt"), "# sample\n0.1\n-0.4\n0.7\n").unwrap();
    let out = recdev(dir.path(), &["estimate", "--observations", "obs.txt", "--set", "point=[0.2]"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rows = rows(&read(dir.path().join("estimate.csv")));
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0][0], "3");
    // Gaussian kernel, h_i = i^{-0.3}.
    let want: f64 = [0.1f64, -0.4, 0.7]
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let h = ((i + 1) as f64).powf(-0.3);
            let z = (0.2 - x) / h;
            (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt() / h
        })
        .sum::<f64>()
        / 3.0;
    let got: f64 = rows[0][2].parse().unwrap();
    assert!((got - want).abs() < 1e-14, "{got} vs {want}");
}
