use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn tikreg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tikreg"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

#[test]
fn experiment1_smoke_writes_curves_and_no_violations() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("e1");
    let o = tikreg(&["experiment1", "--n", "128", "--out", p(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for name in ["total_error", "data_error", "approx_error", "phi", "total_bound"] {
        let text = fs::read_to_string(out.join(format!("{name}.dat"))).unwrap();
        assert_eq!(text.lines().count(), 41, "{name}");
    }
    assert_eq!(fs::read_to_string(out.join("violations.txt")).unwrap(), "");
    let csv = fs::read_to_string(out.join("report.csv")).unwrap();
    assert!(csv.starts_with("alpha,approx_error,"));
}

#[test]
fn outputs_are_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for d in [&a, &b] {
        let o = tikreg(&["experiment1", "--n", "64", "--count", "12", "--seed", "9", "--out", p(d)]);
        assert_eq!(code(&o), 0);
    }
    for name in ["report.csv", "total_error.dat", "phi.dat"] {
        assert_eq!(fs::read(a.join(name)).unwrap(), fs::read(b.join(name)).unwrap(), "{name}");
    }
}

#[test]
fn sweep_is_ordered_and_thread_independent() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let base = ["experiment2", "--n", "64", "--delta-count", "4", "--delta-min", "1e-3", "--count", "30"];
    let o = tikreg(&[&base[..], &["--threads", "1", "--out", p(&a)]].concat());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let o = tikreg(&[&base[..], &["--threads", "3", "--out", p(&b)]].concat());
    assert_eq!(code(&o), 0);
    let csv = fs::read_to_string(a.join("sweep.csv")).unwrap();
    assert_eq!(csv, fs::read_to_string(b.join("sweep.csv")).unwrap());
    let deltas: Vec<f64> = csv
        .lines()
        .skip(1)
        .map(|l| l.split(',').next().unwrap().parse().unwrap())
        .collect();
    assert_eq!(deltas.len(), 4);
    assert!(deltas.windows(2).all(|w| w[0] < w[1]));
    for name in ["alpha_rule.dat", "alpha_oracle.dat", "error_rule.dat", "error_oracle.dat"] {
        assert_eq!(fs::read_to_string(a.join(name)).unwrap().lines().count(), 4);
    }
}

#[test]
fn experiment4_writes_table_images_and_png() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("e4");
    let o = tikreg(&["experiment4", "--n", "12", "--band", "2", "--count", "25", "--png", "--out", p(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let table = fs::read_to_string(out.join("table.csv")).unwrap();
    let rules: Vec<&str> = table.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(rules, ["oracle_bregman", "oracle_norm", "hanke_raus", "quasi_optimality", "discrepancy"]);
    for r in &rules {
        assert_eq!(fs::metadata(out.join(format!("{r}.f64"))).unwrap().len(), 12 * 12 * 8);
        assert!(out.join(format!("{r}.png")).exists());
    }
}

#[test]
fn synthesize_then_select_and_solve_path() {
    let dir = tempfile::tempdir().unwrap();
    let prob = dir.path().join("prob");
    let o = tikreg(&["synthesize", "deconvolution", "--n", "64", "--delta", "0.01", "--out", p(&prob)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(prob.join("manifest.json").exists());

    let o = tikreg(&["select", p(&prob), "--rule", "quasi_optimality", "--q", "0.7", "--count", "20"]);
    assert_eq!(code(&o), 0);
    let stdout = String::from_utf8(o.stdout).unwrap();
    let lines: Vec<&str> = stdout.lines().collect();
    assert!(lines[0].starts_with("# rule=quasi_optimality") && lines[0].contains("q=0.7 count=20"));
    assert_eq!(lines[1], "rule,alpha,index,criterion,delta_star,warnings");
    assert!(lines[2].starts_with("quasi_optimality,"));

    let o = tikreg(&["solve-path", p(&prob), "--count", "6"]);
    assert_eq!(code(&o), 0);
    assert_eq!(String::from_utf8(o.stdout).unwrap().lines().count(), 7);
}

#[test]
fn report_on_stored_instance() {
    let dir = tempfile::tempdir().unwrap();
    let prob = dir.path().join("prob");
    assert_eq!(code(&tikreg(&["synthesize", "deconvolution", "--n", "64", "--out", p(&prob)])), 0);
    let out = dir.path().join("rep");
    let o = tikreg(&["report", p(&prob), "--count", "15", "--out", p(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(fs::read_to_string(out.join("report.csv")).unwrap().lines().count(), 16);
}

#[test]
fn report_without_source_element_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let prob = dir.path().join("blur");
    assert_eq!(code(&tikreg(&["synthesize", "blur", "--n", "8", "--band", "2", "--out", p(&prob)])), 0);
    let o = tikreg(&["report", p(&prob)]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("source element"));
}

#[test]
fn unknown_rule_exits_2() {
    let o = tikreg(&["select", "nowhere", "--rule", "l_curve"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn invalid_config_value_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    fs::write(&cfg, r#"{"q": 1.5}"#).unwrap();
    let o = tikreg(&["--config", p(&cfg), "experiment2", "--out", p(&dir.path().join("o"))]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("`q`"));
}

#[test]
fn unknown_config_key_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    fs::write(&cfg, r#"{"gamma": 2}"#).unwrap();
    let o = tikreg(&["--config", p(&cfg), "experiment1"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn config_for_another_experiment_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    fs::write(&cfg, r#"{"experiment": 4}"#).unwrap();
    let o = tikreg(&["--config", p(&cfg), "experiment1", "--out", p(&dir.path().join("o"))]);
    assert_eq!(code(&o), 2);
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    fs::write(&cfg, r#"{"n": 100, "count": 5}"#).unwrap();
    // n = 100 is rejected unless the flag replaces it.
    let o = tikreg(&["--config", p(&cfg), "experiment1", "--out", p(&dir.path().join("a"))]);
    assert_eq!(code(&o), 2);
    let out = dir.path().join("b");
    let o = tikreg(&["--config", p(&cfg), "experiment1", "--n", "32", "--out", p(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(fs::read_to_string(out.join("phi.dat")).unwrap().lines().count(), 5);
}

#[test]
fn malformed_manifest_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("manifest.json"), "{ not json").unwrap();
    let o = tikreg(&["select", p(dir.path()), "--rule", "hanke_raus"]);
    assert_eq!(code(&o), 2);
}
