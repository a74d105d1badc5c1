use std::fs;
use std::io::BufReader;
use std::path::Path;
use std::process::{Command, Output};

use svnlearn::io::{read_dataset, read_operator};
use svnlearn::{schatten_norm, Order};

fn run(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_svnlearn"))
        .arg("--out")
        .arg(out)
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

#[test]
fn gen_fit_project_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    let o = run(out, &["--seed", "5", "gen", "-n", "40", "--set", "d_x=5", "--set", "d_y=3"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));

    let text = fs::read_to_string(out.join("dataset.csv")).unwrap();
    assert!(text.starts_with("# SVNDATA 1 40 5 3\n"));
    assert_eq!(text.lines().count(), 41);
    assert_eq!(text.lines().nth(1).unwrap().split(',').count(), 8);
    let data = read_dataset(BufReader::new(fs::File::open(out.join("dataset.csv")).unwrap()), Some((1.0, 1.0))).unwrap();
    assert_eq!((data.len(), data.d_x(), data.d_y()), (40, 5, 3));

    let truth = fs::read_to_string(out.join("truth.svnop")).unwrap();
    assert!(truth.starts_with("SVNOP 1 3 5 3\n"));

    let data_path = out.join("dataset.csv");
    let o = run(out, &["fit", "--data", data_path.to_str().unwrap(), "--set", "p=1", "--set", "B=0.5"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let report = fs::read_to_string(out.join("fit_report.csv")).unwrap();
    let mut lines = report.lines();
    assert_eq!(lines.next().unwrap(), "iterations,final_risk,converged,active_constraint,schatten_norm");
    let fields: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(fields[2], "true");
    let fitted = read_operator(BufReader::new(fs::File::open(out.join("operator.svnop")).unwrap())).unwrap();
    assert!(schatten_norm(&fitted, Order::Finite(1.0)) <= 0.5 * (1.0 + 1e-9));

    let truth_path = out.join("truth.svnop");
    let o = run(out, &["project", "--operator", truth_path.to_str().unwrap(), "--set", "p=inf", "--set", "B=0.2"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let projected = read_operator(BufReader::new(fs::File::open(out.join("projected.svnop")).unwrap())).unwrap();
    assert!((schatten_norm(&projected, Order::Infinity) - 0.2).abs() < 1e-12);
}

#[test]
fn gen_is_reproducible() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        assert_eq!(code(&run(d.path(), &["--seed", "9", "gen", "-n", "10", "--set", "d=4"])), 0);
    }
    assert_eq!(fs::read(a.path().join("dataset.csv")).unwrap(), fs::read(b.path().join("dataset.csv")).unwrap());
}

#[test]
fn invalid_config_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    assert_eq!(code(&run(out, &["gen", "--set", "dx=4"])), 2);
    assert_eq!(code(&run(out, &["gen", "--set", "noise_sigma=-1"])), 2);
    assert_eq!(code(&run(out, &["plot-bounds", "--set", "B=1"])), 2);
    assert_eq!(code(&run(out, &["risk-curve", "--set", "test_size=10"])), 2);
    assert_eq!(code(&run(out, &["rademacher", "--set", "n_grid=8, 4"])), 2);
    let cfg = out.join("bad.cfg");
    fs::write(&cfg, "d = 4\nthis line has no equals sign\n").unwrap();
    assert_eq!(code(&run(out, &["gen", "--config", cfg.to_str().unwrap()])), 2);
    assert_eq!(code(&run(out, &["gen", "--config", "/nonexistent/file.cfg"])), 2);
    // Bad order in the ball settings.
    fs::write(out.join("d.csv"), "# SVNDATA 1 1 1 1\n0.5,0.5\n").unwrap();
    let d = out.join("d.csv");
    assert_eq!(code(&run(out, &["fit", "--data", d.to_str().unwrap(), "--set", "p=0.5", "--set", "B=1"])), 2);
    assert_eq!(code(&run(out, &["fit", "--data", d.to_str().unwrap(), "--set", "p=2"])), 2);
}

#[test]
fn iteration_cap_exits_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    assert_eq!(code(&run(out, &["gen", "-n", "30", "--set", "d=4"])), 0);
    let d = out.join("dataset.csv");
    let o = run(out, &["fit", "--data", d.to_str().unwrap(), "--set", "p=1.5", "--set", "B=0.3", "--set", "max_iter=2"]);
    assert_eq!(code(&o), 3);
    let report = fs::read_to_string(out.join("fit_report.csv")).unwrap();
    assert!(report.lines().nth(1).unwrap().starts_with("2,"));
    assert!(out.join("operator.svnop").exists());
}

#[test]
fn malformed_inputs_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    fs::write(out.join("bad.csv"), "# SVNDATA 1 2 1 1\n0.5,0.5\n").unwrap();
    let bad = out.join("bad.csv");
    assert_eq!(code(&run(out, &["fit", "--data", bad.to_str().unwrap(), "--set", "p=2", "--set", "B=1"])), 1);
    fs::write(out.join("bad.svnop"), "SVNOP 1 2 2 1\n1 0\n1\n").unwrap();
    let bad = out.join("bad.svnop");
    assert_eq!(code(&run(out, &["project", "--operator", bad.to_str().unwrap(), "--set", "p=2", "--set", "B=1"])), 1);
}

#[test]
fn rademacher_output_columns() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    let o = run(out, &["--seed", "3", "rademacher", "--set", "design=orthonormal", "--set", "q=2", "--set", "n_grid=2^3..=2^6", "--set", "trials=2"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(out.join("rademacher.csv")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "design,q,N,trials,mean_norm_xx,mean_norm_yx,lemma_bound_xx,lemma_bound_yx,violated");
    assert_eq!(lines.len(), 6);
    assert!(lines[1].starts_with("orthonormal,2,8,2,"));
    assert!(lines[1].ends_with(",false"));
    assert!(lines[5].starts_with("fit,orthonormal,2,"));
}

#[test]
fn plot_bounds_writes_csv_and_svg() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    let o = run(out, &["plot-bounds", "--set", "B=2", "--set", "c_x=1", "--set", "c_y=0.5", "--set", "p_list=1, 2, inf", "--set", "n_grid=10, 100"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(out.join("bounds.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "p,N,bound");
    assert_eq!(csv.lines().count(), 7);
    let svg = fs::read_to_string(out.join("bounds.svg")).unwrap();
    assert!(svg.contains("<polyline") && !svg.contains("script"));
}
