use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use nvgyro::cli::read_signal_matrix;

fn nvgyro(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nvgyro"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn csv_rows(text: &str) -> (Vec<String>, Vec<Vec<String>>) {
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let headers = rdr.headers().unwrap().iter().map(String::from).collect();
    let rows = rdr
        .records()
        .map(|r| r.unwrap().iter().map(String::from).collect())
        .collect();
    (headers, rows)
}

fn column(headers: &[String], rows: &[Vec<String>], name: &str) -> Vec<f64> {
    let i = headers
        .iter()
        .position(|h| h == name)
        .unwrap_or_else(|| panic!("no column {name}"));
    rows.iter().map(|r| r[i].parse().unwrap()).collect()
}

fn stdout(o: &Output) -> String {
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn ramsey_sweep_follows_cos_squared_at_zero_field() {
    let dir = tempfile::tempdir().unwrap();
    write(
        dir.path(),
        "c.json",
        r#"{"constants": {"b_gauss": 0.0}, "sweep": {"points": 21, "stop": 4000.0}}"#,
    );
    let (h, rows) = csv_rows(&stdout(&nvgyro(dir.path(), &["ramsey", "--config", "c.json"])));
    let omega = column(&h, &rows, "omega_rad_per_s");
    let tau = column(&h, &rows, "tau_s");
    let signal = column(&h, &rows, "signal");
    assert_eq!(rows.len(), 21);
    for k in 0..rows.len() {
        assert!((signal[k] - (omega[k] * tau[k]).cos().powi(2)).abs() < 1e-9);
    }
}

#[test]
fn echo_is_flat_in_detuning_while_ramsey_moves() {
    let dir = tempfile::tempdir().unwrap();
    let run = |cmd: &str, det: f64| {
        let cfg = format!(r#"{{"sweep": {{"points": 5, "stop": 1000.0, "detuning_hz": {det}}}}}"#);
        write(dir.path(), "c.json", &cfg);
        let (h, rows) = csv_rows(&stdout(&nvgyro(dir.path(), &[cmd, "--config", "c.json"])));
        column(&h, &rows, "signal")
    };
    let (e0, e1) = (run("echo", 0.0), run("echo", 137.0));
    let (r0, r1) = (run("ramsey", 0.0), run("ramsey", 137.0));
    assert!(e0.iter().zip(&e1).all(|(a, b)| (a - b).abs() < 1e-9));
    assert!(r0.iter().zip(&r1).any(|(a, b)| (a - b).abs() > 1e-2));
}

#[test]
fn same_seed_same_bytes_and_seed_matters() {
    let dir = tempfile::tempdir().unwrap();
    write(
        dir.path(),
        "c.json",
        r#"{"noise": {"ou": {"sigma": 500.0, "tau_c": 1e-4, "seed": 0}, "trials": 50}, "sweep": {"points": 4}}"#,
    );
    let a = stdout(&nvgyro(dir.path(), &["ramsey", "--config", "c.json", "--seed", "5"]));
    let b = stdout(&nvgyro(dir.path(), &["ramsey", "--config", "c.json", "--seed", "5"]));
    let c = stdout(&nvgyro(dir.path(), &["ramsey", "--config", "c.json", "--seed", "6"]));
    assert_eq!(a, b);
    assert_ne!(a, c);
}

#[test]
fn families_then_estimate_recovers_rotation() {
    let dir = tempfile::tempdir().unwrap();
    write(
        dir.path(),
        "c.json",
        r#"{"constants": {"b_gauss": 0.0}, "rotation": {"omega_lab": [0.5, -0.2, 0.1]}}"#,
    );
    let fam = nvgyro(dir.path(), &["families", "--config", "c.json", "--out", "sig.csv"]);
    assert!(fam.status.success());
    assert!(dir.path().join("sig.csv.config.json").exists());
    let m = read_signal_matrix(std::fs::File::open(dir.path().join("sig.csv")).unwrap()).unwrap();
    assert_eq!(m.families.len(), 4);

    let report = stdout(&nvgyro(
        dir.path(),
        &["estimate", "--config", "c.json", "--signals", "sig.csv"],
    ));
    let v: serde_json::Value = serde_json::from_str(&report).unwrap();
    assert_eq!(v["status"], "converged");
    let w: Vec<f64> = v["omega_lab_rad_per_s"]
        .as_array()
        .unwrap()
        .iter()
        .map(|x| x.as_f64().unwrap())
        .collect();
    for (got, want) in w.iter().zip([0.5, -0.2, 0.1]) {
        assert!((got - want).abs() < 1e-6, "{w:?}");
    }
}

#[test]
fn all_ones_is_a_null_rotation() {
    let dir = tempfile::tempdir().unwrap();
    let mut text = String::from("family,tau_s,signal,stderr\n");
    for f in ["F1", "F2", "F3", "F4"] {
        for t in ["0.5", "1.0"] {
            text.push_str(&format!("{f},{t},1.0,0\n"));
        }
    }
    write(dir.path(), "ones.csv", &text);
    write(dir.path(), "c.json", r#"{"constants": {"b_gauss": 0.0}}"#);
    let report = stdout(&nvgyro(
        dir.path(),
        &["estimate", "--config", "c.json", "--signals", "ones.csv"],
    ));
    assert!(report.contains("\"null_rotation\""), "{report}");
}

#[test]
fn two_families_exit_three() {
    let dir = tempfile::tempdir().unwrap();
    write(
        dir.path(),
        "two.csv",
        "family,tau_s,signal,stderr\nF1,0.5,0.9,0\nF2,0.5,0.8,0\n",
    );
    let o = nvgyro(dir.path(), &["estimate", "--signals", "two.csv"]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn malformed_signal_file_names_row_and_column() {
    let dir = tempfile::tempdir().unwrap();
    write(
        dir.path(),
        "bad.csv",
        "family,tau_s,signal,stderr\nF1,0.5,0.9,0\nF2,0.5,oops,0\n",
    );
    let o = nvgyro(dir.path(), &["estimate", "--signals", "bad.csv"]);
    assert_eq!(o.status.code(), Some(3));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("line 3") && err.contains("signal"), "{err}");
}

#[test]
fn bad_config_exits_two_with_line() {
    let dir = tempfile::tempdir().unwrap();
    write(
        dir.path(),
        "c.json",
        "{\n  \"seed\": 1,\n  \"sweep\": {\"points\": \"many\"}\n}\n",
    );
    let o = nvgyro(dir.path(), &["ramsey", "--config", "c.json"]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("3:"), "{err}");

    write(dir.path(), "u.json", "{\"sweep\": {\"pionts\": 3}}");
    assert_eq!(
        nvgyro(dir.path(), &["ramsey", "--config", "u.json"]).status.code(),
        Some(2)
    );
}

#[test]
fn sensitivity_headline_row() {
    let dir = tempfile::tempdir().unwrap();
    write(
        dir.path(),
        "c.json",
        r#"{"sensitivity": {"densities": [1e16, 1e18], "bath": {"n_bath": 20, "n_central": 4, "trials": 20}}}"#,
    );
    let (h, rows) = csv_rows(&stdout(&nvgyro(dir.path(), &["sensitivity", "--config", "c.json"])));
    assert_eq!(rows[0][0], "budget");
    let eta = column(&h, &rows, "eta_mdeg_per_s_per_sqrt_hz");
    assert!((eta[0] - 0.49).abs() < 0.02, "{}", eta[0]);
    // Two interrogation times, two schemes, two densities.
    assert_eq!(rows.len(), 1 + 2 * 2 * 2);
}

#[test]
fn bath_echo_outlasts_ramsey() {
    let dir = tempfile::tempdir().unwrap();
    write(
        dir.path(),
        "c.json",
        r#"{"bath": {"densities": [1e19], "model": {"n_bath": 30, "n_central": 8, "trials": 50}, "points": 12}}"#,
    );
    let (h, rows) = csv_rows(&stdout(&nvgyro(dir.path(), &["bath", "--config", "c.json"])));
    let r = column(&h, &rows, "ramsey_coherence");
    let e = column(&h, &rows, "echo_coherence");
    let (rs, es) = (column(&h, &rows, "ramsey_stderr"), column(&h, &rows, "echo_stderr"));
    for k in 0..rows.len() {
        assert!(e[k] + 3.0 * (es[k] + rs[k]) + 1e-9 >= r[k]);
    }
    assert!(r.last().unwrap() < &0.2 && e.last().unwrap() > &0.5);
}

#[test]
fn two_step_polarizes_further() {
    let dir = tempfile::tempdir().unwrap();
    let last = |two_step: bool| {
        let cfg =
            format!(r#"{{"polarize": {{"sim": {{"steps": 50, "trials": 64}}, "drive": {{"two_step": {two_step}}}}}}}"#);
        write(dir.path(), "c.json", &cfg);
        let o = nvgyro(dir.path(), &["polarize", "--config", "c.json"]);
        assert!(String::from_utf8_lossy(&o.stderr).contains("Hz gives"));
        let (h, rows) = csv_rows(&stdout(&o));
        *column(&h, &rows, "polarization").last().unwrap()
    };
    let (one, two) = (last(false), last(true));
    assert!(two > one && one > 0.0 && two <= 1.0, "{one} {two}");
}

#[test]
fn sidecar_reproduces_output() {
    let dir = tempfile::tempdir().unwrap();
    write(
        dir.path(),
        "c.json",
        r#"{"noise": {"ou": {"sigma": 500.0, "tau_c": 1e-4, "seed": 0}, "trials": 20}, "sweep": {"points": 3}}"#,
    );
    assert!(nvgyro(
        dir.path(),
        &["echo", "--config", "c.json", "--seed", "9", "--out", "a.csv"]
    )
    .status
    .success());
    assert!(
        nvgyro(dir.path(), &["echo", "--config", "a.csv.config.json", "--out", "b.csv"])
            .status
            .success()
    );
    let a = std::fs::read(dir.path().join("a.csv")).unwrap();
    let b = std::fs::read(dir.path().join("b.csv")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn jsonl_rows_parse() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "c.json", r#"{"sweep": {"points": 3}}"#);
    let text = stdout(&nvgyro(
        dir.path(),
        &["ramsey", "--config", "c.json", "--format", "jsonl"],
    ));
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 3);
    for l in lines {
        let v: serde_json::Value = serde_json::from_str(l).unwrap();
        assert!(v["signal"].as_f64().unwrap() >= 0.0);
    }
}
