//! End-to-end checks of the command-line interface through the built
//! binary: verb behavior, exit-code classes, and stream discipline.

use std::path::PathBuf;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_pmed"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn tmp_dir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("pmed_cli_{tag}_{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

#[test]
fn classify_prints_verdict_on_stdout_only() {
    let out = run(&[
        "classify", "--m", "2", "--q", "1", "--d", "3", "--q1", "3", "--q2", "5/3",
    ]);
    assert!(out.status.success());
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.starts_with("scaling_invariant"), "{stdout}");
    assert!(out.stderr.is_empty(), "stderr not empty on success");
}

#[test]
fn barenblatt_snapshot_carries_requested_mass() {
    let dir = tmp_dir("bb");
    let snap = dir.join("b.snap");
    let out = run(&[
        "barenblatt",
        "--d",
        "2",
        "--m",
        "2",
        "--t",
        "1",
        "--mass",
        "1",
        "--out",
        snap.to_str().unwrap(),
        "--cells",
        "96",
        "--extent",
        "3",
    ]);
    assert!(out.status.success());
    assert!(out.stderr.is_empty());
    let field = pmed::io::snapshot_to_density(&pmed::io::read_snapshot(&snap).unwrap()).unwrap();
    let mass = pmed::grid::integrate(&field);
    assert!((mass - 1.0).abs() <= 1e-8, "mass {mass}");
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn wasserstein_verb_measures_translation() {
    let dir = tmp_dir("wt");
    let a = dir.join("a.snap");
    let b = dir.join("b.snap");
    // 1-d blob and its copy translated by exactly 0.25 (4 cells).
    let g = pmed::grid::make_grid(1, &[128], &[-4.0], &[0.0625]).unwrap();
    let f = pmed::grid::DensityField::from_fn(g, 0.0, |x| (-(x[0] * x[0]) * 4.0).exp()).unwrap();
    let f2 = pmed::grid::DensityField::from_fn(g, 0.0, |x| {
        (-((x[0] - 0.25) * (x[0] - 0.25)) * 4.0).exp()
    })
    .unwrap();
    pmed::io::write_snapshot(&f, &a).unwrap();
    pmed::io::write_snapshot(&f2, &b).unwrap();
    let out = run(&[
        "wasserstein",
        "--p",
        "2",
        a.to_str().unwrap(),
        b.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let d: f64 = String::from_utf8(out.stdout)
        .unwrap()
        .trim()
        .parse()
        .unwrap();
    assert!((d - 0.25).abs() <= g.spacing(0), "distance {d}");
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn exit_codes_partition_error_classes() {
    // Unknown verb: 1.
    assert_eq!(run(&["frobnicate"]).status.code(), Some(1));
    // Hypothesis violation in a config: 1.
    let dir = tmp_dir("codes");
    let bad = dir.join("bad.cfg");
    std::fs::write(
        &bad,
        "dim = 1\ncells = 64\norigin = -4\nspacing = 0.125\nm = 0.8\nhorizon = 0.5\ninitial = barenblatt 1.0 1.0\n",
    )
    .unwrap();
    let out = run(&["simulate", "--config", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("requires m > 1"), "{err}");

    // IO failure: 2.
    let out = run(&["simulate", "--config", "/definitely/not/here.cfg"]);
    assert_eq!(out.status.code(), Some(2));

    // Snapshot format failure: 2.
    let junk = dir.join("junk.snap");
    std::fs::write(&junk, b"XXXXGARBAGE").unwrap();
    let out = run(&["diagnose", "--snap", junk.to_str().unwrap(), "--m", "2"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("offset 0"), "{err}");
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn simulate_writes_reproducible_artifacts() {
    let dir = tmp_dir("sim");
    let out_dir = dir.join("out");
    let cfg = dir.join("run.cfg");
    std::fs::write(
        &cfg,
        format!(
            "dim = 1\ncells = 96\norigin = -4\nspacing = 0.08333333333333333\n\
             m = 2.0\nhorizon = 0.4\nsubintervals = 4\ninitial = barenblatt 1.0 1.0\n\
             drift = rotation 0.0\noutput_times = 1.4\noutput_dir = {}\n",
            out_dir.to_string_lossy()
        ),
    )
    .unwrap();
    let out = run(&["simulate", "--config", cfg.to_str().unwrap()]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(out.stderr.is_empty());
    // Echo parses back to an equivalent config.
    let echo = std::fs::read_to_string(out_dir.join("echo.cfg")).unwrap();
    let parsed = pmed::io::parse_config(&echo).unwrap();
    assert_eq!(parsed.to_text(), echo);
    // Ledger has the comment block, a header, and rows.
    let ledger = std::fs::read_to_string(out_dir.join("ledger.csv")).unwrap();
    assert!(ledger.lines().filter(|l| l.starts_with('#')).count() > 5);
    assert!(ledger.lines().any(|l| l.starts_with("time,mass,")));
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn ks_verb_writes_free_energy_ledger() {
    let dir = tmp_dir("ks");
    let out_dir = dir.join("out");
    let cfg = dir.join("run.cfg");
    std::fs::write(
        &cfg,
        format!(
            "dim = 2\ncells = 32 32\norigin = -3 -3\nspacing = 0.1875 0.1875\n\
             m = 2.0\nhorizon = 0.1\nsubintervals = 4\ninitial = indicator 1.0 1.0\n\
             c_initial = zero\ndrift = zero\noutput_dir = {}\n",
            out_dir.to_string_lossy()
        ),
    )
    .unwrap();
    let out = run(&["ks", "--config", cfg.to_str().unwrap()]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let fe = std::fs::read_to_string(out_dir.join("free_energy.csv")).unwrap();
    assert!(fe
        .lines()
        .any(|l| l.starts_with("time,entropy,field_energy,")));
    assert!(out_dir.join("rho_000.snap").exists());
    assert!(out_dir.join("c_000.snap").exists());
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn convergence_verb_prints_table() {
    let dir = tmp_dir("conv");
    let cfg = dir.join("run.cfg");
    std::fs::write(
        &cfg,
        "dim = 1\ncells = 96\norigin = -4\nspacing = 0.08333333333333333\n\
         m = 2.0\nhorizon = 0.3\nsubintervals = 1\ninitial = barenblatt 1.0 1.0\n\
         drift = constant 0.2\n",
    )
    .unwrap();
    let out = run(&[
        "convergence",
        "--config",
        cfg.to_str().unwrap(),
        "--n-list",
        "2 4 8",
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.lines().next().unwrap() == "n,l1_error,w2_error");
    assert!(stdout.lines().count() >= 4, "{stdout}");
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn help_exists_for_the_verbs() {
    let out = run(&["--help"]);
    assert!(out.status.success());
    let stdout = String::from_utf8(out.stdout).unwrap();
    for verb in [
        "simulate",
        "ks",
        "classify",
        "wasserstein",
        "barenblatt",
        "diagnose",
        "convergence",
    ] {
        assert!(stdout.contains(verb), "missing {verb} in help");
    }
    let out = run(&["classify", "--help"]);
    assert!(out.status.success());
}
