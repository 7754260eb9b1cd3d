//! End-to-end tests of the command-line binary: spawn the real executable
//! against temporary files and check outputs and exit codes.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_rtmcd"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn write_gaussian_csv(path: &Path, n: usize, p: usize, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut text = String::new();
    for _ in 0..n {
        let row: Vec<String> = (0..p)
            .map(|_| format!("{:.10}", Distribution::<f64>::sample(&StandardNormal, &mut rng)))
            .collect();
        text.push_str(&row.join(","));
        text.push('\n');
    }
    fs::write(path, text).unwrap();
}

fn report_rows(path: &Path) -> Vec<(usize, f64, bool)> {
    let text = fs::read_to_string(path).unwrap();
    let mut rows = Vec::new();
    for line in text.lines().skip(1) {
        let fields: Vec<&str> = line.split(',').collect();
        rows.push((
            fields[0].parse().unwrap(),
            fields[1].parse().unwrap(),
            fields[2] == "1",
        ));
    }
    rows
}

fn path_str(p: &Path) -> String {
    p.to_str().unwrap().to_string()
}

#[test]
fn fit_toy_csv_flags_the_outlier() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("toy.csv");
    fs::write(&input, "1.0\n1.1\n0.9\n1.05\n8.0\n").unwrap();
    let out = run(&[
        "fit",
        &path_str(&input),
        "--alpha",
        "0.75",
        "--out",
        &path_str(&dir.path().join("toy")),
    ]);
    assert!(out.status.success(), "stderr: {}", stderr(&out));
    let rows = report_rows(&dir.path().join("toy.report.csv"));
    assert_eq!(rows.len(), 5);
    let flagged: Vec<usize> = rows.iter().filter(|r| r.2).map(|r| r.0).collect();
    assert_eq!(flagged, vec![4], "only the remote point is an outlier");
    // Distances of the bulk sit well below the flagged point's distance.
    for r in &rows[..4] {
        assert!(r.1 < rows[4].1 / 5.0, "bulk distance {} too large", r.1);
    }
    // Manifest exists and is valid JSON with a digest.
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("toy.manifest.json")).unwrap())
            .unwrap();
    assert!(manifest["input_sha256"].as_str().unwrap().len() == 64);
}

#[test]
fn header_is_autodetected() {
    let dir = tempfile::tempdir().unwrap();
    let bare = dir.path().join("bare.csv");
    let with_header = dir.path().join("header.csv");
    write_gaussian_csv(&bare, 120, 2, 31);
    fs::write(
        &with_header,
        format!("x,y\n{}", fs::read_to_string(&bare).unwrap()),
    )
    .unwrap();
    for (input, prefix) in [(&bare, "a"), (&with_header, "b")] {
        let out = run(&[
            "fit",
            &path_str(input),
            "--out",
            &path_str(&dir.path().join(prefix)),
        ]);
        assert!(out.status.success(), "stderr: {}", stderr(&out));
    }
    assert_eq!(
        fs::read(dir.path().join("a.fit")).unwrap(),
        fs::read(dir.path().join("b.fit")).unwrap(),
        "header must not change the fit"
    );
}

#[test]
fn missing_column_is_input_error_with_line_number() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("ragged.csv");
    fs::write(&input, "1.0,2.0\n3.0,4.0\n5.0\n6.0,7.0\n").unwrap();
    let out = run(&["fit", &path_str(&input)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("line 3"), "stderr: {}", stderr(&out));
}

#[test]
fn non_numeric_value_is_input_error_with_line_number() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("text.csv");
    fs::write(&input, "1.0,2.0\n3.0,oops\n").unwrap();
    let out = run(&["fit", &path_str(&input)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("line 2"), "stderr: {}", stderr(&out));
}

#[test]
fn single_block_matches_serial_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("data.csv");
    write_gaussian_csv(&input, 300, 2, 32);
    let serial = run(&[
        "fit",
        &path_str(&input),
        "--out",
        &path_str(&dir.path().join("serial")),
    ]);
    assert!(serial.status.success(), "stderr: {}", stderr(&serial));
    let blocked = run(&[
        "fit",
        &path_str(&input),
        "--blocks",
        "1",
        "--out",
        &path_str(&dir.path().join("blocked")),
    ]);
    assert!(blocked.status.success(), "stderr: {}", stderr(&blocked));
    assert_eq!(
        fs::read(dir.path().join("serial.fit")).unwrap(),
        fs::read(dir.path().join("blocked.fit")).unwrap()
    );
    assert_eq!(
        fs::read(dir.path().join("serial.report.csv")).unwrap(),
        fs::read(dir.path().join("blocked.report.csv")).unwrap()
    );
}

#[test]
fn scoring_training_data_reproduces_fit_report() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("train.csv");
    write_gaussian_csv(&input, 400, 3, 33);
    let prefix = dir.path().join("model");
    let fit = run(&["fit", &path_str(&input), "--out", &path_str(&prefix)]);
    assert!(fit.status.success(), "stderr: {}", stderr(&fit));
    let score = run(&[
        "score",
        &path_str(&input),
        "--fit",
        &path_str(&dir.path().join("model.fit")),
        "--out",
        &path_str(&dir.path().join("rescored")),
    ]);
    assert!(score.status.success(), "stderr: {}", stderr(&score));
    assert_eq!(
        fs::read(dir.path().join("model.report.csv")).unwrap(),
        fs::read(dir.path().join("rescored.report.csv")).unwrap()
    );
    // Throughput is recorded.
    let manifest: serde_json::Value = serde_json::from_str(
        &fs::read_to_string(dir.path().join("rescored.manifest.json")).unwrap(),
    )
    .unwrap();
    assert!(manifest["extra"]["rows_per_second"].as_f64().unwrap() > 0.0);
}

/// Reads the stored fit back through its text format and returns the model
/// center in data units.
fn stored_center(fit_path: &Path) -> Vec<f64> {
    let text = fs::read_to_string(fit_path).unwrap();
    let grab = |key: &str| -> Vec<f64> {
        text.lines()
            .find(|l| l.starts_with(key))
            .unwrap()
            .split_whitespace()
            .skip(1)
            .map(|t| t.parse().unwrap())
            .collect()
    };
    let loc = grab("scaling_location");
    let scale = grab("scaling_scale");
    let center = grab("center_rew");
    (0..loc.len())
        .map(|j| loc[j] + scale[j] * center[j])
        .collect()
}

#[test]
fn row_at_stored_center_scores_distance_zero() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("train.csv");
    write_gaussian_csv(&input, 400, 2, 34);
    let prefix = dir.path().join("model");
    let fit = run(&["fit", &path_str(&input), "--out", &path_str(&prefix)]);
    assert!(fit.status.success(), "stderr: {}", stderr(&fit));

    let center = stored_center(&dir.path().join("model.fit"));
    let probe = dir.path().join("probe.csv");
    fs::write(
        &probe,
        format!("{:.17e},{:.17e}\n", center[0], center[1]),
    )
    .unwrap();
    let score = run(&[
        "score",
        &path_str(&probe),
        "--fit",
        &path_str(&dir.path().join("model.fit")),
        "--out",
        &path_str(&dir.path().join("probe")),
    ]);
    assert!(score.status.success(), "stderr: {}", stderr(&score));
    let rows = report_rows(&dir.path().join("probe.report.csv"));
    assert_eq!(rows.len(), 1);
    assert!(rows[0].1 < 1e-10, "distance at center = {}", rows[0].1);
    assert!(!rows[0].2);
}

#[test]
fn same_seed_replays_bit_identically() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("data.csv");
    write_gaussian_csv(&input, 600, 2, 35);
    for prefix in ["one", "two"] {
        let out = run(&[
            "fit",
            &path_str(&input),
            "--blocks",
            "3",
            "--seed",
            "42",
            "--out",
            &path_str(&dir.path().join(prefix)),
        ]);
        assert!(out.status.success(), "stderr: {}", stderr(&out));
    }
    assert_eq!(
        fs::read(dir.path().join("one.fit")).unwrap(),
        fs::read(dir.path().join("two.fit")).unwrap()
    );
    assert_eq!(
        fs::read(dir.path().join("one.report.csv")).unwrap(),
        fs::read(dir.path().join("two.report.csv")).unwrap()
    );
}

#[test]
fn fit_file_version_mismatch_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("data.csv");
    write_gaussian_csv(&input, 50, 2, 36);
    let fake = dir.path().join("future.fit");
    fs::write(&fake, "rtmcd-fit 99\np 2\n").unwrap();
    let out = run(&["score", &path_str(&input), "--fit", &path_str(&fake)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("version 99"), "stderr: {}", stderr(&out));
}

#[test]
fn score_width_mismatch_is_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let train = dir.path().join("train.csv");
    write_gaussian_csv(&train, 300, 2, 37);
    let prefix = dir.path().join("model");
    let fit = run(&["fit", &path_str(&train), "--out", &path_str(&prefix)]);
    assert!(fit.status.success(), "stderr: {}", stderr(&fit));
    let wide = dir.path().join("wide.csv");
    write_gaussian_csv(&wide, 10, 3, 38);
    let out = run(&[
        "score",
        &path_str(&wide),
        "--fit",
        &path_str(&dir.path().join("model.fit")),
    ]);
    assert_eq!(out.status.code(), Some(2), "stderr: {}", stderr(&out));
}

#[test]
fn simulate_prints_one_row_per_variant() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "simulate",
        "--n",
        "600",
        "--p",
        "2",
        "--eps",
        "0.1",
        "--reps",
        "2",
        "--seed",
        "7",
        "--variant",
        "idc",
        "--variant",
        "id",
        "--out",
        &path_str(&dir.path().join("sim")),
    ]);
    assert!(out.status.success(), "stderr: {}", stderr(&out));
    let text = stdout(&out);
    let lines: Vec<&str> = text.trim().lines().collect();
    assert_eq!(lines.len(), 3, "header plus one row per variant:\n{text}");
    for line in &lines[1..] {
        let mean_kl: f64 = line.split(',').nth(10).unwrap().parse().unwrap();
        assert!(mean_kl.is_finite() && mean_kl >= 0.0);
    }
    assert!(dir.path().join("sim.csv").exists());
    assert!(dir.path().join("sim.manifest.json").exists());
}

#[test]
fn bench_reports_block_engine_overhead_within_bounds() {
    // With a single worker thread the block engine has no parallelism to
    // exploit, so its time must stay within 1.3× of the serial variant.
    let out = run(&[
        "bench",
        "--n",
        "16384",
        "--p",
        "4",
        "--runs",
        "5",
        "--variants",
        "idc,idcp",
        "--baseline",
        "idc",
        "--blocks",
        "4",
        "--threads",
        "1",
        "--seed",
        "9",
    ]);
    assert!(out.status.success(), "stderr: {}", stderr(&out));
    let text = stdout(&out);
    let median = |name: &str| -> f64 {
        text.lines()
            .find(|l| l.starts_with(&format!("{name},")))
            .unwrap_or_else(|| panic!("no row for {name} in:\n{text}"))
            .split(',')
            .nth(1)
            .unwrap()
            .parse()
            .unwrap()
    };
    let idc = median("idc");
    let idcp = median("idcp");
    assert!(
        idcp <= 1.3 * idc,
        "block-engine overhead too high: idcp {idcp:.4}s vs idc {idc:.4}s"
    );
}

#[test]
fn warm_start_fit_succeeds_and_tags_the_start() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("data.csv");
    write_gaussian_csv(&input, 500, 2, 40);
    let prefix = dir.path().join("cold");
    let fit = run(&["fit", &path_str(&input), "--out", &path_str(&prefix)]);
    assert!(fit.status.success(), "stderr: {}", stderr(&fit));
    let warm = run(&[
        "fit",
        &path_str(&input),
        "--warm-start",
        &path_str(&dir.path().join("cold.fit")),
        "--out",
        &path_str(&dir.path().join("warm")),
    ]);
    assert!(warm.status.success(), "stderr: {}", stderr(&warm));
    let text = fs::read_to_string(dir.path().join("warm.fit")).unwrap();
    assert!(text.contains("chosen_start warm"), "fit file:\n{text}");
    // The warm refit may settle in a different concentration optimum, but
    // on the same clean data both models must describe the same bulk: both
    // centers near zero, and the reports cover every row.
    assert_eq!(report_rows(&dir.path().join("warm.report.csv")).len(), 500);
    for path in ["cold.fit", "warm.fit"] {
        for c in stored_center(&dir.path().join(path)) {
            assert!(c.abs() < 0.2, "{path} center coordinate {c} far from 0");
        }
    }
}
