//! Runs the `hyperhardy` binary end to end.

use std::process::{Command, Output};

fn hyperhardy(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hyperhardy"))
        .args(args)
        .env_remove("HYP_THREADS")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn ground_state_report_passes() {
    let o = hyperhardy(&["verify", "--target", "thm21", "--N", "3", "--j", "0", "--modes", "1", "--lambda", "0", "--seed", "1"]);
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["target"], "thm21");
    assert_eq!(v["verdict"], "pass");
    assert_eq!(v["parameters"]["N"], 3);
}

#[test]
fn euclidean_ckn_identity_passes() {
    let o = hyperhardy(&["verify", "--target", "ckn26", "--manifold", "euclidean", "--N", "3", "--alpha", "0", "--beta", "2"]);
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["kind"], "identity");
    assert_eq!(v["verdict"], "pass");
}

#[test]
fn inadmissible_lambda_exits_2() {
    let o = hyperhardy(&["verify", "--N", "3", "--lambda", "5"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("lambda"));
}

#[test]
fn unknown_config_key_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.toml");
    std::fs::write(&path, "target = \"eq12\"\nmodez = [1]\n").unwrap();
    let o = hyperhardy(&["verify", "--config", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("modez"));
}

#[test]
fn non_convergence_exits_3() {
    let o = hyperhardy(&["verify", "--target", "eq12", "--max-subdivisions", "8", "--rel-tol", "1e-15", "--abs-tol", "1e-300"]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn measured_verdicts_do_not_fail() {
    let o = hyperhardy(&["verify", "--target", "ckn25", "--alpha", "0", "--beta", "1"]);
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["verdict"], "measured");
}

#[test]
fn lambda_sweep_has_five_identity_rows() {
    let o = hyperhardy(&["sweep", "--target", "eq12", "--N", "3", "--grid", "lambda=0,0.25,0.5,0.75,1", "--format", "csv"]);
    assert_eq!(o.status.code(), Some(0));
    let mut rdr = csv::Reader::from_reader(o.stdout.as_slice());
    let rows: Vec<csv::StringRecord> = rdr.records().map(|r| r.unwrap()).collect();
    assert_eq!(rows.len(), 5);
    for row in rows {
        let residual: f64 = row[6].parse().unwrap();
        let scale: f64 = row[7].parse().unwrap();
        assert!(residual.abs() <= 1e-6 * scale);
    }
}

#[test]
fn ckn_grid_has_nine_nonnegative_rows() {
    let o = hyperhardy(&[
        "sweep", "--target", "ckn25", "--manifold", "euclidean", "--grid", "alpha=-1,0,1", "--grid", "beta=0,1,2", "--format", "csv",
    ]);
    assert_eq!(o.status.code(), Some(0));
    let mut rdr = csv::Reader::from_reader(o.stdout.as_slice());
    let header = rdr.headers().unwrap().clone();
    assert_eq!((&header[0], &header[1]), ("alpha", "beta"));
    let rows: Vec<csv::StringRecord> = rdr.records().map(|r| r.unwrap()).collect();
    assert_eq!(rows.len(), 9);
    assert_eq!(&rows[1][0], "-1.0000000000000000e0");
    assert_eq!(&rows[1][1], "1.0000000000000000e0");
    for row in rows {
        assert!(row[7].parse::<f64>().unwrap() >= 0.0);
    }
}

#[test]
fn empty_grid_gives_header_only() {
    let o = hyperhardy(&["sweep", "--target", "eq12", "--grid", "lambda=", "--format", "csv"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o).lines().count(), 1);
}

#[test]
fn output_is_byte_identical_across_runs_and_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str, threads: &str| {
        let path = dir.path().join(name);
        let status = Command::new(env!("CARGO_BIN_EXE_hyperhardy"))
            .args(["sweep", "--target", "cor23", "--j", "0", "--modes", "1,2,3", "--grid", "lambda=0,0.5,1", "--grid", "seed=3,4"])
            .args(["--format", "csv", "--output", path.to_str().unwrap()])
            .env("HYP_THREADS", threads)
            .status()
            .unwrap();
        assert!(status.success());
        std::fs::read(path).unwrap()
    };
    let a = run("a.csv", "1");
    let b = run("b.csv", "4");
    let c = run("c.csv", "4");
    assert_eq!(a, b);
    assert_eq!(b, c);
    assert_eq!(String::from_utf8(a).unwrap().lines().count(), 7);
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.toml");
    std::fs::write(&path, "target = \"cor24\"\nalpha = 1.0\nj = 0\nmodes = [1, 2]\n").unwrap();
    let o = hyperhardy(&["verify", "--config", path.to_str().unwrap(), "--alpha", "-0.5"]);
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["target"], "cor24");
    assert_eq!(v["parameters"]["alpha"], -0.5);
}

#[test]
fn sharpness_ladder_csv() {
    let o = hyperhardy(&["sharpness", "--target", "poincare", "--N", "3", "--rmin", "1e-3", "--rmax", "40", "--levels", "4", "--format", "csv"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    let last = text.lines().last().unwrap();
    let value: f64 = last.rsplit(',').next().unwrap().parse().unwrap();
    assert!((1.0..=1.05).contains(&value), "{value}");
}

#[test]
fn bessel_validate_reports_residual() {
    let o = hyperhardy(&["bessel", "validate", "--pair", "poincare", "--N", "4", "--lambda", "2"]);
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert!(v["max_residual"].as_f64().unwrap() <= 1e-8);
}
