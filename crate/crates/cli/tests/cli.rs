use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn scalesim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_scalesim"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn write_config(dir: &Path, body: &str) -> String {
    let path = dir.join("run.conf");
    fs::write(&path, body).unwrap();
    path.to_str().unwrap().to_owned()
}

#[test]
fn sweep_defaults_write_csv_and_svg() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("out");
    let out = scalesim(&["sweep", "--out", out_dir.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("scenario = analytic_sweep"));
    assert!(stdout.contains("seed = 1"));
    let csv = fs::read_to_string(out_dir.join("sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 601);
    assert!(out_dir.join("sweep.svg").exists());
}

#[test]
fn runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for d in [&a, &b] {
        let out = scalesim(&["sweep", "--seed", "7", "--out", d.to_str().unwrap()]);
        assert_eq!(code(&out), 0);
    }
    for f in ["sweep.csv", "sweep.svg"] {
        assert_eq!(
            fs::read(a.join(f)).unwrap(),
            fs::read(b.join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn simulate_from_config() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("sim");
    let cfg = write_config(
        dir.path(),
        &format!(
            "scenario = three_layer\nusers = 10, 100\ntrials = 3\nzero_noise = true\nout = {}\n",
            out_dir.display()
        ),
    );
    let out = scalesim(&["simulate", "--config", &cfg]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(out_dir.join("simulate_three_layer.csv")).unwrap();
    let body: Vec<&str> = csv.lines().skip(1).collect();
    assert_eq!(body.len(), 6);
    assert!(body
        .iter()
        .all(|l| l.starts_with("desim,three_layer,") && l.ends_with(",7.500000")));
}

#[test]
fn simulate_without_scenario_is_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = scalesim(&["simulate", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&out), 2);
}

#[test]
fn compare_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    let cfg = write_config(dir.path(), "scenario = analytic_sweep\ntrials = 5\n");
    let exact = scalesim(&["compare", "--config", &cfg, "--zero-noise", "--out", d]);
    assert_eq!(code(&exact), 0);
    assert!(String::from_utf8(exact.stdout).unwrap().contains("PASS"));
    let strict = scalesim(&["compare", "--config", &cfg, "--tolerance", "0", "--out", d]);
    assert_eq!(code(&strict), 1);
}

#[test]
fn config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    for body in [
        "scenario = analytic_sweep\nsigma_mono = 0.5\nsigma_micro = 1\n",
        "scenario = analytic_sweep\nbogus = 1\n",
        "scenario = analytic_sweep\ntrials = 5\ntrials = 6\n",
        "users = 100\n",
    ] {
        let cfg = write_config(dir.path(), body);
        let out = scalesim(&[
            "sweep",
            "--config",
            &cfg,
            "--out",
            dir.path().to_str().unwrap(),
        ]);
        assert_eq!(code(&out), 2, "{body}");
    }
    let out = scalesim(&["sweep", "--scenario", "mainframe"]);
    assert_eq!(code(&out), 2);
    let out = scalesim(&["sweep", "--tolerance", "-1"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn io_errors_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.conf");
    let out = scalesim(&["sweep", "--config", missing.to_str().unwrap()]);
    assert_eq!(code(&out), 3);
    let out = scalesim(&["plot", dir.path().join("none.csv").to_str().unwrap()]);
    assert_eq!(code(&out), 3);
}

#[test]
fn plot_renders_existing_csv() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("lat.csv");
    fs::write(
        &csv,
        "source,architecture,n,trial,latency_ms\nanalytic,monolith,100,0,7.0\nanalytic,monolith,1000,0,25.0\n",
    )
    .unwrap();
    let out = scalesim(&["plot", csv.to_str().unwrap()]);
    assert_eq!(code(&out), 0);
    let svg = fs::read_to_string(dir.path().join("lat.svg")).unwrap();
    assert!(svg.contains("Number of users"));

    fs::write(
        &csv,
        "source,architecture,n,latency_ms\nanalytic,monolith,100,7.0\n",
    )
    .unwrap();
    assert_eq!(code(&scalesim(&["plot", csv.to_str().unwrap()])), 2);
}
