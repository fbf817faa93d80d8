//! End-to-end checks of the `crease` binary: pipeline wiring, exit
//! codes, and byte-level reproducibility of archives.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn crease() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_crease"));
    cmd.env_remove("CREASE_SEED").env_remove("SOURCE_DATE_EPOCH");
    cmd
}

fn run(cmd: &mut Command) -> Output {
    cmd.output().expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("no signal")
}

/// Simulate a small career and fit it quickly inside `dir`.
fn fit_fixture(dir: &Path) -> std::path::PathBuf {
    let out = run(crease()
        .current_dir(dir)
        .args(["simulate", "--innings", "12", "--mu", "25"])
        .args(["--not-out-rate", "0.2", "--seed", "3", "--player", "px"]));
    assert_eq!(code(&out), 0, "simulate failed: {}", stderr(&out));
    let out = run(crease()
        .current_dir(dir)
        .args(["fit", "--scores", "px.scores.txt", "--particles", "120"])
        .args(["--mcmc-steps", "50", "--seed", "4"]));
    assert_eq!(code(&out), 0, "fit failed: {}", stderr(&out));
    dir.join("px.fit.json")
}

fn tsv_rows(text: &str) -> Vec<Vec<String>> {
    text.lines()
        .skip(1)
        .map(|l| l.split('\t').map(str::to_string).collect())
        .collect()
}

#[test]
fn pipeline_produces_consistent_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let archive = fit_fixture(dir.path());
    assert!(archive.exists());
    assert!(dir.path().join("px.progress.jsonl").exists());
    assert!(dir.path().join("px.run_config.json").exists());

    let out = run(crease()
        .current_dir(dir.path())
        .args(["predict", "--fit", "px.fit.json", "--horizon", "3"])
        .args(["--samples", "200", "--retain-curves"]));
    assert_eq!(code(&out), 0, "predict failed: {}", stderr(&out));
    assert!(stdout(&out).contains("next innings"));

    let curve = fs::read_to_string(dir.path().join("px.nu.tsv")).unwrap();
    assert!(curve.starts_with("innings\tnu_median\tnu_low\tnu_high\n"));
    let rows = tsv_rows(&curve);
    assert_eq!(rows.len(), 12);
    for row in &rows {
        let low: f64 = row[2].parse().unwrap();
        let mid: f64 = row[1].parse().unwrap();
        let high: f64 = row[3].parse().unwrap();
        assert!(low <= mid && mid <= high);
    }

    let forecast = fs::read_to_string(dir.path().join("px.forecast.tsv")).unwrap();
    let rows = tsv_rows(&forecast);
    assert_eq!(rows.len(), 3);
    assert_eq!(rows[0][0], "13", "forecast continues the career");
    assert!(dir.path().join("px.nu_samples.tsv").exists());

    let out = run(crease()
        .current_dir(dir.path())
        .args(["summary", "--fit", "px.fit.json"]));
    assert_eq!(code(&out), 0);
    let text = stdout(&out);
    assert!(text.contains("log_z"));
    assert!(text.contains("innings       12 ("));
}

#[test]
fn fits_are_byte_identical_for_fixed_seed() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("a.scores.txt"), "12\n0\n55*\n31\n7\n102\n4*\n19\n").unwrap();
    for sub in ["one", "two"] {
        let out = run(crease()
            .current_dir(dir.path())
            .env("SOURCE_DATE_EPOCH", "1700000000")
            .args(["fit", "--scores", "a.scores.txt", "--out-dir", sub])
            .args(["--particles", "100", "--mcmc-steps", "40"])
            .args(["--seed", "11", "--threads", "1"]));
        assert_eq!(code(&out), 0, "fit failed: {}", stderr(&out));
    }
    let one = fs::read(dir.path().join("one/a.fit.json")).unwrap();
    let two = fs::read(dir.path().join("two/a.fit.json")).unwrap();
    assert_eq!(one, two);
    let one = fs::read(dir.path().join("one/a.progress.jsonl")).unwrap();
    let two = fs::read(dir.path().join("two/a.progress.jsonl")).unwrap();
    assert_eq!(one, two);
}

#[test]
fn thread_count_does_not_change_results() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("c.scores.txt"), "17\n44\n0\n68*\n23\n5\n91\n").unwrap();
    for (sub, threads) in [("seq", "1"), ("par", "4")] {
        let out = run(crease()
            .current_dir(dir.path())
            .env("SOURCE_DATE_EPOCH", "1700000000")
            .args(["fit", "--scores", "c.scores.txt", "--out-dir", sub])
            .args(["--particles", "90", "--mcmc-steps", "35"])
            .args(["--seed", "13", "--threads", threads]));
        assert_eq!(code(&out), 0, "fit failed: {}", stderr(&out));
        let out = run(crease()
            .current_dir(dir.path())
            .args(["predict", "--fit", &format!("{sub}/c.fit.json")])
            .args(["--samples", "200", "--seed", "13", "--threads", threads])
            .args(["--out-dir", sub]));
        assert_eq!(code(&out), 0, "predict failed: {}", stderr(&out));
    }
    for name in ["c.fit.json", "c.nu.tsv", "c.forecast.tsv"] {
        let seq = fs::read(dir.path().join("seq").join(name)).unwrap();
        let par = fs::read(dir.path().join("par").join(name)).unwrap();
        assert_eq!(seq, par, "{name} depends on the thread count");
    }
}

#[test]
fn seed_env_is_equivalent_to_the_flag() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("b.scores.txt"), "40\n8\n63\n0*\n22\n").unwrap();
    let out = run(crease()
        .current_dir(dir.path())
        .env("SOURCE_DATE_EPOCH", "1700000000")
        .args(["fit", "--scores", "b.scores.txt", "--out-dir", "flag"])
        .args(["--particles", "80", "--mcmc-steps", "30", "--seed", "77"]));
    assert_eq!(code(&out), 0);
    let out = run(crease()
        .current_dir(dir.path())
        .env("SOURCE_DATE_EPOCH", "1700000000")
        .env("CREASE_SEED", "77")
        .args(["fit", "--scores", "b.scores.txt", "--out-dir", "env"])
        .args(["--particles", "80", "--mcmc-steps", "30"]));
    assert_eq!(code(&out), 0);
    let flag = fs::read(dir.path().join("flag/b.fit.json")).unwrap();
    let env = fs::read(dir.path().join("env/b.fit.json")).unwrap();
    assert_eq!(flag, env);

    let out = run(crease()
        .current_dir(dir.path())
        .env("CREASE_SEED", "not-a-number")
        .args(["fit", "--scores", "b.scores.txt"]));
    assert_eq!(code(&out), 65);
    assert!(stderr(&out).contains("CREASE_SEED"));
}

#[test]
fn malformed_scores_are_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("bad.txt"), "12\n-3\n9\n").unwrap();
    let out = run(crease()
        .current_dir(dir.path())
        .args(["fit", "--scores", "bad.txt"]));
    assert_eq!(code(&out), 65);
    assert!(stderr(&out).contains("line 2"), "stderr: {}", stderr(&out));
}

#[test]
fn missing_files_are_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(crease()
        .current_dir(dir.path())
        .args(["fit", "--scores", "nope.txt"]));
    assert_eq!(code(&out), 74);
    assert!(stderr(&out).contains("nope.txt"));
    let out = run(crease()
        .current_dir(dir.path())
        .args(["summary", "--fit", "nope.fit.json"]));
    assert_eq!(code(&out), 74);
}

#[test]
fn usage_errors_exit_with_two() {
    let out = run(crease().args(["fit", "--no-such-flag"]));
    assert_eq!(code(&out), 2);
    // Partial ability spec: --c without the rest of the path params.
    let out = run(crease().args(["simulate", "--innings", "5", "--c", "0.4"]));
    assert_eq!(code(&out), 2);
    // Constant and path specs are mutually exclusive.
    let out = run(crease().args([
        "simulate", "--innings", "5", "--mu", "30", "--c", "0.4", "--d", "0.2", "--m",
        "30", "--sigma", "0.1", "--ell", "10",
    ]));
    assert_eq!(code(&out), 2);
}

#[test]
fn self_comparison_is_symmetric() {
    let dir = tempfile::tempdir().unwrap();
    fit_fixture(dir.path());
    let out = run(crease()
        .current_dir(dir.path())
        .args(["compare", "--fit-a", "px.fit.json", "--fit-b", "px.fit.json"])
        .args(["--samples", "250", "--seed", "6"]));
    assert_eq!(code(&out), 0, "compare failed: {}", stderr(&out));

    let table = fs::read_to_string(dir.path().join("px_vs_px.tsv")).unwrap();
    let mut fields = std::collections::HashMap::new();
    for row in tsv_rows(&table) {
        fields.insert(row[0].clone(), row[1].clone());
    }
    assert_eq!(fields["expected_margin"], "0.000000");
    assert_eq!(fields["p_outscore"], fields["p_outscored"]);
}

#[test]
fn simulate_writes_the_latent_path_on_request() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(crease()
        .current_dir(dir.path())
        .args(["simulate", "--innings", "9", "--c", "0.4", "--d", "0.2"])
        .args(["--m", "28", "--sigma", "0.15", "--ell", "8"])
        .args(["--seed", "2", "--player", "gp", "--truth-out"]));
    assert_eq!(code(&out), 0, "simulate failed: {}", stderr(&out));
    let truth = fs::read_to_string(dir.path().join("gp.truth.tsv")).unwrap();
    assert!(truth.starts_with("innings\tmu2\n"));
    assert_eq!(tsv_rows(&truth).len(), 9);
    let scores = fs::read_to_string(dir.path().join("gp.scores.txt")).unwrap();
    assert_eq!(scores.lines().count(), 9);
}
