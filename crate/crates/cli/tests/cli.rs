use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const SMALL: &str = "size = 16\npsf_size = 5\npsf_sigma = 1\niters = 40\n";

fn sbadmm(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sbadmm"))
        .args(args)
        .arg("--output-dir")
        .arg(dir)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn value(text: &str, key: &str) -> f64 {
    text.lines()
        .find_map(|l| l.strip_prefix(key))
        .unwrap_or_else(|| panic!("no `{key}` in\n{text}"))
        .trim()
        .parse()
        .unwrap()
}

fn small_config(dir: &Path, extra: &str) -> String {
    let path = dir.join("small.cfg");
    fs::write(&path, format!("{SMALL}{extra}")).unwrap();
    path.to_str().unwrap().to_owned()
}

#[test]
fn missing_config_exits_2_and_names_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let out = sbadmm(dir.path(), &["restore", "--config", "/no/such/file.cfg"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("/no/such/file.cfg"), "{}", stderr(&out));
}

#[test]
fn nonpositive_penalty_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = sbadmm(dir.path(), &["restore", "--eta", "0"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("eta"), "{}", stderr(&out));
}

#[test]
fn case_mismatch_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = sbadmm(dir.path(), &["predict", "--case", "III", "--rho", "1", "--eta", "0.5"]);
    assert_eq!(out.status.code(), Some(2), "{}", stdout(&out));
}

#[test]
fn recommend_default_problem() {
    let dir = tempfile::tempdir().unwrap();
    let out = sbadmm(dir.path(), &["recommend"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    assert_eq!(value(&text, "eta*="), 0.0625);
    assert_eq!(value(&text, "rho*="), 1.0);
    assert!(dir.path().join("recommendation.csv").exists());
}

#[test]
fn recommend_band() {
    let dir = tempfile::tempdir().unwrap();
    let out = sbadmm(dir.path(), &["recommend", "--delta-range", "1/256:1/64"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    assert!((value(&text, "eta*=") - 2.0).abs() < 1e-12);
    assert!((value(&text, "rho*=") - 1.0 / 32.0).abs() < 1e-12);
    assert!((value(&text, "gamma=") - 1.0 / 64.0).abs() < 1e-15);
}

#[test]
fn oracle_row_grid_matches_analytic() {
    let dir = tempfile::tempdir().unwrap();
    let out = sbadmm(dir.path(), &["oracle", "--grid", "4x1", "--case", "III"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    let dense = value(&text, "dense radius(H)");
    let analytic = value(&text, "analytic radius");
    assert!((dense - analytic).abs() <= 1e-10);
    assert!((dense - 0.5).abs() <= 1e-10);
    assert!(dir.path().join("oracle.csv").exists());
}

#[test]
fn oracle_rejects_large_grids() {
    let dir = tempfile::tempdir().unwrap();
    let out = sbadmm(dir.path(), &["oracle", "--grid", "32x32"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn spectra_csv_has_zero_difference_eigenvalue_at_dc() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), "");
    let out = sbadmm(dir.path(), &["spectra", "--config", &cfg]);
    assert!(out.status.success(), "{}", stderr(&out));
    let mut reader = csv::Reader::from_path(dir.path().join("spectra.csv")).unwrap();
    let headers = reader.headers().unwrap().clone();
    assert_eq!(headers.iter().collect::<Vec<_>>(), ["freq_row", "freq_col", "lambda", "omega"]);
    let rows: Vec<csv::StringRecord> = reader.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 256);
    assert_eq!(&rows[0][3], "0.0");
    assert!((rows[0][2].parse::<f64>().unwrap() - 1.0).abs() < 1e-12);
}

#[test]
fn figure2_writes_five_traces_and_a_summary() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), "");
    let out = sbadmm(dir.path(), &["figure2", "--config", &cfg, "--iters", "20"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let names: Vec<String> = fs::read_dir(dir.path())
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    assert_eq!(names.iter().filter(|n| n.starts_with("trace_")).count(), 5);
    assert_eq!(names.iter().filter(|n| n.starts_with("final_")).count(), 5);
    let summary = fs::read_to_string(dir.path().join("summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 6);
    for file in ["truth.pgm", "observed.pgm", "reference.pgm"] {
        assert!(names.iter().any(|n| n == file), "{file} missing");
    }
}

#[test]
fn exact_restore_on_periodic_problem_converges_in_one_step() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), "mask_mode = periodic\n");
    let out = sbadmm(dir.path(), &["restore", "--config", &cfg, "--inner", "exact", "--iters", "3"]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stdout(&out).contains("at iteration 1"), "{}", stdout(&out));
    let trace = fs::read_to_string(dir.path().join("restore_trace.csv")).unwrap();
    assert_eq!(trace.lines().count(), 5);
}

#[test]
fn exact_inner_mode_is_refused_for_masked_operators() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), "");
    let out = sbadmm(dir.path(), &["restore", "--config", &cfg, "--inner", "exact"]);
    assert_eq!(out.status.code(), Some(2), "{}", stdout(&out));
}

#[test]
fn outputs_stay_inside_output_dir() {
    let work = tempfile::tempdir().unwrap();
    let out_dir = work.path().join("results");
    let cfg = small_config(work.path(), "");
    let status = Command::new(env!("CARGO_BIN_EXE_sbadmm"))
        .current_dir(work.path())
        .args(["restore", "--config", &cfg, "--iters", "5", "--output-dir"])
        .arg(&out_dir)
        .status()
        .unwrap();
    assert!(status.success());
    let mut top: Vec<String> = fs::read_dir(work.path())
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    top.sort();
    assert_eq!(top, ["results", "small.cfg"]);
    for file in ["restore_trace.csv", "restored.pgm", "restored.txt", "observed.pgm"] {
        assert!(out_dir.join(file).exists(), "{file} missing");
    }
}
