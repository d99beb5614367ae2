use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn rpca(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rpca")).args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn report(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("report is JSON")
}

/// Parses CSV text into header and rows of raw fields.
fn csv(text: &str) -> (Vec<String>, Vec<Vec<String>>) {
    let mut lines = text.lines();
    let header = lines.next().unwrap().split(',').map(str::to_string).collect();
    let rows = lines.map(|l| l.split(',').map(str::to_string).collect()).collect();
    (header, rows)
}

fn column(header: &[String], name: &str) -> usize {
    header.iter().position(|h| h == name).unwrap_or_else(|| panic!("missing column {name}"))
}

fn write_text_matrix(path: &Path, rows: &[Vec<f64>]) {
    let mut s = format!("{},{}\n", rows.len(), rows[0].len());
    for r in rows {
        s.push_str(&r.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(","));
        s.push('\n');
    }
    std::fs::write(path, s).unwrap();
}

#[test]
fn decompose_easy_synthetic_instance() {
    let dir = tempfile::tempdir().unwrap();
    let out = rpca(&[
        "decompose",
        "--synth",
        "m=200,n=200,k=20,rho=0.1",
        "--penalty",
        "lpnorm",
        "--p",
        "0.5",
        "--mu",
        "0.9:1e-4",
        "--iters",
        "10",
        "--seed",
        "7",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let r = report(&out);
    assert!(r["rel_error_l"].as_f64().unwrap() <= 0.05);
    assert_eq!(r["success"], Value::Bool(true));
    assert_eq!(r["seed"], 7);
    assert_eq!(r["config"]["penalty"], "lpnorm");
    assert_eq!(r["cost_trace"].as_array().unwrap().len(), 10);
    for f in ["l_hat.bin", "s_hat.bin", "u.bin", "y.bin", "report.json"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    // Binary header: magic, then m and n.
    let u = std::fs::read(dir.path().join("u.bin")).unwrap();
    assert_eq!(&u[..4], b"RPCM");
    assert_eq!(u.len(), 16 + 8 * 200 * 20);
}

#[test]
fn missing_input_is_a_data_error() {
    let out = rpca(&["decompose", "--input", "/no/such/matrix.bin", "--rank", "2"]);
    assert_eq!(code(&out), 1);
    let err = stderr(&out);
    assert!(err.contains("/no/such/matrix.bin"));
    assert_eq!(err.trim_end().lines().count(), 1);
}

#[test]
fn zero_rank_is_a_usage_error() {
    let out = rpca(&["decompose", "--synth", "m=20,n=20,k=2,rho=0.1", "--rank", "0"]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("rank"));
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let out = rpca(&["phase", "--bogus"]);
    assert_eq!(code(&out), 1);
    assert_eq!(stderr(&out).trim_end().lines().count(), 1);
}

#[test]
fn failed_recovery_exits_with_two() {
    let out = rpca(&["decompose", "--synth", "m=40,n=40,k=20,rho=0.5", "--iters", "3"]);
    assert_eq!(code(&out), 2, "{}", stderr(&out));
    assert_eq!(report(&out)["success"], Value::Bool(false));
}

#[test]
fn file_input_without_truth_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let x: Vec<Vec<f64>> = (0..12).map(|i| (0..10).map(|j| ((i + 1) * (j + 2)) as f64 / 10.0).collect()).collect();
    let input = dir.path().join("x.csv");
    write_text_matrix(&input, &x);
    let mask = dir.path().join("mask.csv");
    let entries: Vec<String> = (0..12)
        .flat_map(|i| (0..10).map(move |j| (i, j)))
        .filter(|(i, j)| (i + j) % 4 != 0)
        .map(|(i, j)| format!("{i},{j}"))
        .collect();
    std::fs::write(&mask, entries.join("\n") + "\n").unwrap();
    let out = rpca(&["decompose", "--input", input.to_str().unwrap(), "--mask", mask.to_str().unwrap(), "--rank", "1"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let r = report(&out);
    assert_eq!(r["success"], Value::Null);
    assert_eq!(r["rel_error_l"], Value::Null);
    assert!((r["config"]["observed_fraction"].as_f64().unwrap() - 0.75).abs() < 1e-12);

    // With the rank-one truth the same data is recovered.
    let truth = dir.path().join("l.csv");
    write_text_matrix(&truth, &x);
    let out =
        rpca(&["decompose", "--input", input.to_str().unwrap(), "--truth", truth.to_str().unwrap(), "--rank", "1"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert_eq!(report(&out)["success"], Value::Bool(true));
}

fn track(args: &[&str]) -> (Vec<String>, Vec<Vec<String>>, Value) {
    let dir = tempfile::tempdir().unwrap();
    let mut full = vec!["track"];
    full.extend_from_slice(args);
    full.extend_from_slice(&["--out", dir.path().to_str().unwrap()]);
    let out = rpca(&full);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let text = std::fs::read_to_string(dir.path().join("track.csv")).unwrap();
    let (h, rows) = csv(&text);
    let summary =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("track_summary.json")).unwrap()).unwrap();
    assert!(dir.path().join("u_final.bin").exists());
    (h, rows, summary)
}

#[test]
fn track_log_has_one_row_per_sample() {
    let (h, rows, _) = track(&["--synth", "m=30,n=80,k=2,rho=0.05", "--init-count", "20", "--mu", "2"]);
    assert_eq!(h, ["index", "residual_sparsity", "angle_to_initial", "angle_to_truth", "seconds"]);
    assert_eq!(rows.len(), 60);
    assert_eq!(rows[0][0], "20");
    assert_eq!(rows[59][0], "79");
}

#[test]
fn track_static_stream_improves_on_the_initial_angle() {
    let (_, rows, summary) = track(&[
        "--synth",
        "m=100,n=250,k=2,rho=0.05",
        "--init-count",
        "50",
        "--w",
        "0.05",
        "--mu",
        "2",
        "--seed",
        "1",
    ]);
    assert_eq!(rows.len(), 200);
    let initial = summary["initial_angle_to_truth"].as_f64().unwrap();
    let fin = summary["final_angle_to_truth"].as_f64().unwrap();
    assert!(fin < initial, "final {fin} vs initial {initial}");
}

#[test]
fn track_recovers_after_a_subspace_switch() {
    let (h, rows, _) = track(&[
        "--synth",
        "m=100,n=300,k=2,rho=0.05,switch=100",
        "--init-count",
        "50",
        "--w",
        "0.05",
        "--mu",
        "2",
        "--seed",
        "2",
    ]);
    let (idx, ang) = (column(&h, "index"), column(&h, "angle_to_truth"));
    let after: Vec<f64> =
        rows.iter().filter(|r| r[idx].parse::<usize>().unwrap() >= 100).map(|r| r[ang].parse().unwrap()).collect();
    let first_below = after.iter().position(|&a| a < 0.2);
    assert!(matches!(first_below, Some(n) if n < 100), "first sample below 0.2 rad: {first_below:?}");
    let window_means: Vec<f64> = after[..100].chunks(20).map(|c| c.iter().sum::<f64>() / c.len() as f64).collect();
    assert!(window_means.windows(2).all(|w| w[1] <= w[0]), "{window_means:?}");
}

#[test]
fn track_rejects_short_init() {
    let out = rpca(&["track", "--synth", "m=30,n=80,k=3", "--init-count", "2"]);
    assert_eq!(code(&out), 1);
    let out = rpca(&["track", "--synth", "m=30,n=10,k=3", "--init-count", "20"]);
    assert_eq!(code(&out), 1);
}

#[test]
fn phase_grid_rows_and_regimes() {
    let run = |jobs: &str| {
        let out = rpca(&[
            "phase",
            "--m",
            "100",
            "--ranks",
            "0.05,0.5",
            "--rhos",
            "0.05,0.5",
            "--seeds",
            "1",
            "--penalty",
            "lpnorm",
            "--jobs",
            jobs,
        ]);
        assert_eq!(code(&out), 0, "{}", stderr(&out));
        csv(&String::from_utf8(out.stdout).unwrap())
    };
    let (h, rows) = run("4");
    assert_eq!(rows.len(), 4);
    let (r, s, ok) = (column(&h, "k_over_m"), column(&h, "rho"), column(&h, "success"));
    let cell = |km: &str, rho: &str| rows.iter().find(|row| row[r] == km && row[s] == rho).unwrap()[ok].clone();
    assert_eq!(cell("0.05", "0.05"), "true");
    assert_eq!(cell("0.5", "0.5"), "false");

    // Order and values do not depend on the worker count.
    let (_, serial) = run("1");
    let t = column(&h, "seconds");
    let strip = |rows: &[Vec<String>]| {
        rows.iter()
            .map(|row| {
                let mut v = row.clone();
                v.remove(t);
                v
            })
            .collect::<Vec<_>>()
    };
    assert_eq!(strip(&rows), strip(&serial));
}

#[test]
fn noise_without_noise_matches_decompose() {
    let out = rpca(&["noise", "--m", "100", "--snr", "inf", "--seeds", "1", "--seed", "7"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let (h, rows) = csv(&String::from_utf8(out.stdout).unwrap());
    let sweep: f64 = rows[0][column(&h, "rel_error_l")].parse().unwrap();
    let single = rpca(&["decompose", "--synth", "m=100,n=100,k=10,rho=0.1", "--seed", "7"]);
    assert_eq!(report(&single)["rel_error_l"].as_f64().unwrap(), sweep);
}

#[test]
fn noise_sweep_error_shrinks_with_snr() {
    let out = rpca(&["noise", "--m", "100", "--snr", "10,20,40", "--seeds", "5", "--penalty", "lpnorm"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let (h, rows) = csv(&String::from_utf8(out.stdout).unwrap());
    assert_eq!(rows.len(), 15);
    let (snr, err) = (column(&h, "snr_db"), column(&h, "rel_error_l"));
    let median = |db: &str| {
        let mut v: Vec<f64> = rows.iter().filter(|r| r[snr] == db).map(|r| r[err].parse().unwrap()).collect();
        v.sort_by(f64::total_cmp);
        v[v.len() / 2]
    };
    let m = [median("10.0"), median("20.0"), median("40.0")];
    // Non-increasing up to a 10% allowance for noise realizations.
    assert!(m[1] <= 1.1 * m[0] && m[2] <= 1.1 * m[1], "{m:?}");
}
