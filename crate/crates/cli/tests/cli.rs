//! End-to-end tests of the `llglab` binary: exit codes, file outputs,
//! format equivalence, and rerun determinism.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn llglab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_llglab")).args(args).output().expect("binary runs")
}

fn exit_code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

/// Synthetic monthly panel with AR(1) columns, long enough to survive the
/// preprocessing warm-up.
fn write_panel(path: &Path, n: usize) {
    use std::fmt::Write as _;
    let cols = ["retx", "dp", "dy", "ep"];
    let mut text = String::from("date,retx,dp,dy,ep\n");
    let mut state = [0.0f64; 4];
    let mut rng_state = 0x2545F4914F6CDD1Du64;
    let mut next_unit = || {
        // xorshift into (-1, 1); plenty for fixture data.
        rng_state ^= rng_state << 13;
        rng_state ^= rng_state >> 7;
        rng_state ^= rng_state << 17;
        (rng_state >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
    };
    for i in 0..n {
        let (y, m) = (1930 + i / 12, i % 12 + 1);
        write!(text, "{y:04}-{m:02}").unwrap();
        for s in state.iter_mut() {
            *s = 0.5 * *s + next_unit();
            write!(text, ",{s:.6}").unwrap();
        }
        text.push('\n');
        let _ = cols;
    }
    std::fs::write(path, text).unwrap();
}

fn preprocess(dir: &Path, rows: usize) -> PathBuf {
    let raw = dir.join("raw.csv");
    write_panel(&raw, rows);
    let processed = dir.join("processed.csv");
    let out = llglab(&[
        "preprocess",
        "--input",
        raw.to_str().unwrap(),
        "--output",
        processed.to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&out), 0, "stderr: {}", String::from_utf8_lossy(&out.stderr));
    processed
}

#[test]
fn preprocess_roundtrip_row_count() {
    let dir = tempfile::tempdir().unwrap();
    let processed = preprocess(dir.path(), 240);
    let text = std::fs::read_to_string(&processed).unwrap();
    let data_rows =
        text.lines().filter(|l| !l.starts_with('#') && !l.starts_with("date")).count();
    assert_eq!(data_rows, 240);
    assert!(dir.path().join("processed.manifest.json").exists());
}

#[test]
fn preprocess_missing_column_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let raw = dir.path().join("raw.csv");
    write_panel(&raw, 120);
    let out = llglab(&[
        "preprocess",
        "--input",
        raw.to_str().unwrap(),
        "--output",
        dir.path().join("x.csv").to_str().unwrap(),
        "--columns",
        "retx,tbl",
    ]);
    assert_eq!(exit_code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing column `tbl`"));
}

#[test]
fn preprocess_interior_blank_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let raw = dir.path().join("raw.csv");
    std::fs::write(&raw, "date,a\n1930-01,1.0\n1930-02,\n1930-03,2.0\n").unwrap();
    let out = llglab(&[
        "preprocess",
        "--input",
        raw.to_str().unwrap(),
        "--output",
        dir.path().join("x.csv").to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&out), 2);
}

#[test]
fn llg_unknown_target_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let processed = preprocess(dir.path(), 240);
    let out = llglab(&[
        "llg",
        "--input",
        processed.to_str().unwrap(),
        "--target",
        "nope",
        "--split-date",
        "1940-01",
        "--max-features",
        "50",
    ]);
    assert_eq!(exit_code(&out), 2);
}

#[test]
fn llg_tight_split_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let processed = preprocess(dir.path(), 240);
    let out = llglab(&[
        "llg",
        "--input",
        processed.to_str().unwrap(),
        "--target",
        "dp",
        "--split-date",
        "1990-01", // beyond the fixture's range: no out-of-sample rows
        "--max-features",
        "50",
    ]);
    assert_eq!(exit_code(&out), 2);
}

#[test]
fn llg_json_and_csv_carry_identical_numbers() {
    let dir = tempfile::tempdir().unwrap();
    let processed = preprocess(dir.path(), 300);
    let out_dir = dir.path().join("out");
    let out = llglab(&[
        "llg",
        "--input",
        processed.to_str().unwrap(),
        "--target",
        "dp",
        "--split-date",
        "1946-01",
        "--max-features",
        "80",
        "--grid",
        "20,80",
        "--format",
        "both",
        "--out-dir",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&out), 0, "stderr: {}", String::from_utf8_lossy(&out.stderr));

    let csv_text = std::fs::read_to_string(out_dir.join("dp_voc.csv")).unwrap();
    let json_text = std::fs::read_to_string(out_dir.join("dp_voc.json")).unwrap();
    let json: serde_json::Value = serde_json::from_str(&json_text).unwrap();
    let points = json["points"].as_array().unwrap();
    let mut csv_rows = csv_text.lines().filter(|l| !l.starts_with('#') && !l.starts_with("P1"));
    for point in points {
        let row = csv_rows.next().unwrap();
        let cells: Vec<&str> = row.split(',').collect();
        for (idx, key) in
            ["c", "r2_oos", "llg", "lower_bound", "sigma_r2_hat", "conf_lower"].iter().enumerate()
        {
            let from_csv: f64 = cells[idx + 1].parse().unwrap();
            let from_json = point[*key].as_f64().unwrap();
            assert_eq!(from_csv.to_bits(), from_json.to_bits(), "field {key}");
        }
    }
    assert!(csv_rows.next().is_none());
}

fn write_sim_config(path: &Path) {
    std::fs::write(
        path,
        r#"
version = 1
mode = "garch"
t = 80
t_oos = 60
d = 5
p_grid = [10, 40]
activation = "tanh"
seeds = [7]

[garch]
omega = 0.5
alpha = 0.05
beta = 0.9
"#,
    )
    .unwrap();
}

#[test]
fn simulate_seed_override_emits_raw_and_mean_files() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("sim.toml");
    write_sim_config(&config);
    let out_dir = dir.path().join("out");
    let out = llglab(&[
        "simulate",
        "--config",
        config.to_str().unwrap(),
        "--seeds",
        "1,2,3",
        "--out-dir",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&out), 0, "stderr: {}", String::from_utf8_lossy(&out.stderr));
    for seed in [1, 2, 3] {
        assert!(out_dir.join(format!("garch_seed{seed}.csv")).exists());
    }
    assert!(out_dir.join("garch_mean.csv").exists());
    let text = std::fs::read_to_string(out_dir.join("garch_seed2.csv")).unwrap();
    assert!(text.lines().nth(1).unwrap()
        .starts_with("P1,c,r2_oos,llg,lower_bound,sigma_r2_hat,conf_lower,seed"));
}

#[test]
fn simulate_schema_violation_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("sim.toml");
    std::fs::write(&config, "version = 1\nmode = \"garch\"\n").unwrap();
    let out = llglab(&["simulate", "--config", config.to_str().unwrap()]);
    assert_eq!(exit_code(&out), 2);
}

#[test]
fn simulate_reruns_reproduce_outputs_bit_for_bit() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("sim.toml");
    write_sim_config(&config);
    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    for out_dir in [&out_a, &out_b] {
        let out = llglab(&[
            "simulate",
            "--config",
            config.to_str().unwrap(),
            "--out-dir",
            out_dir.to_str().unwrap(),
        ]);
        assert_eq!(exit_code(&out), 0);
    }
    for name in ["garch_seed7.csv", "garch_mean.csv"] {
        let a = std::fs::read(out_a.join(name)).unwrap();
        let b = std::fs::read(out_b.join(name)).unwrap();
        assert_eq!(a, b, "{name} differs between reruns");
    }
}

#[test]
fn rmt_check_identity_small_c() {
    // c -> 0 with unit spectrum at z = 1: m = 1/(z+1) = 0.5.
    let out = llglab(&[
        "rmt-check", "--c", "1e-8", "--z", "1", "--p", "200", "--t", "400",
    ]);
    assert_eq!(exit_code(&out), 0);
    let text = String::from_utf8_lossy(&out.stdout).to_string();
    let m_line = text.lines().find(|l| l.trim_start().starts_with("m ")).unwrap();
    let value: f64 = m_line.split('=').nth(1).unwrap().trim().parse().unwrap();
    assert!((value - 0.5).abs() <= 1e-6, "m = {value}");
}

#[test]
fn rmt_check_malformed_spectrum_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("spec.txt");
    std::fs::write(&bad, "1.0\nnot-a-number\n").unwrap();
    let out = llglab(&[
        "rmt-check", "--c", "1", "--z", "1", "--spectrum", bad.to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&out), 2);
}

#[test]
fn rmt_check_nonconvergence_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("spec.txt");
    std::fs::write(&spec, "0\n1\n").unwrap();
    let out = llglab(&[
        "rmt-check",
        "--c",
        "0.5",
        "--z",
        "1e-290",
        "--spectrum",
        spec.to_str().unwrap(),
        "--p",
        "50",
        "--t",
        "100",
    ]);
    assert_eq!(exit_code(&out), 3);
}

#[test]
fn table_single_target_reports_undefined_correlation() {
    let dir = tempfile::tempdir().unwrap();
    let processed = preprocess(dir.path(), 240);
    let out_dir = dir.path().join("out");
    let out = llglab(&[
        "table",
        "--input",
        processed.to_str().unwrap(),
        "--targets",
        "dp",
        "--split-date",
        "1942-01",
        "--max-features",
        "60",
        "--grid-points",
        "3",
        "--top-k",
        "10",
        "--out-dir",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&out), 0, "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let corr = std::fs::read_to_string(out_dir.join("table_correlation.csv")).unwrap();
    assert!(corr.contains("correlation undefined"));
}

#[test]
fn table_identical_targets_correlate_perfectly() {
    let dir = tempfile::tempdir().unwrap();
    // Two identical synthetic targets: duplicate a column.
    let raw = dir.path().join("raw.csv");
    write_panel(&raw, 240);
    let text = std::fs::read_to_string(&raw).unwrap();
    let doubled: String = text
        .lines()
        .map(|l| {
            if l.starts_with("date") {
                format!("{l},dp2\n")
            } else {
                let dp = l.split(',').nth(2).unwrap();
                format!("{l},{dp}\n")
            }
        })
        .collect();
    std::fs::write(&raw, doubled).unwrap();
    let processed = dir.path().join("processed.csv");
    let out = llglab(&[
        "preprocess",
        "--input",
        raw.to_str().unwrap(),
        "--output",
        processed.to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&out), 0);
    let out_dir = dir.path().join("out");
    let out = llglab(&[
        "table",
        "--input",
        processed.to_str().unwrap(),
        "--targets",
        "dp,dp2",
        "--split-date",
        "1942-01",
        "--max-features",
        "60",
        "--grid-points",
        "3",
        "--top-k",
        "10",
        "--out-dir",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&out), 0, "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let corr = std::fs::read_to_string(out_dir.join("table_correlation.csv")).unwrap();
    // Identical targets make every summary column constant across targets,
    // so all correlation entries are 1 by the degenerate-agreement rule.
    for line in corr.lines().skip(2) {
        for cell in line.split(',').skip(1) {
            let v: f64 = cell.parse().unwrap();
            assert!((v - 1.0).abs() <= 1e-12, "entry {v}");
        }
    }
}

#[test]
fn llg_synthetic_known_r2_respects_coverage() {
    // A processed-format fixture with a planted single-index target at
    // population R2 = 0.25: the summary band floor must not exceed it.
    use llglab::features::Activation;
    use llglab::sim::{seeded_gaussian_matrix, semi_synthetic, SemiSyntheticSpec};
    use std::fmt::Write as _;

    let (n, d) = (520usize, 8usize);
    let x = seeded_gaussian_matrix::<f64>(n, d, 91);
    let spec = SemiSyntheticSpec {
        gamma: 0.0,
        activation: Activation::Tanh,
        w_seed: 92,
        eps_seed: 93,
        target_r2: Some(0.25),
    };
    let draw = semi_synthetic(&x, &spec).unwrap();

    // Column `syn` holds y shifted so that syn[t+1] = f(X_t) + eps: the
    // supervised alignment pairs X_t with syn at t+1.
    let mut text = String::from("date,syn,syn_mask");
    for j in 0..d {
        write!(text, ",x{j},x{j}_mask").unwrap();
    }
    text.push('\n');
    for i in 0..n {
        let (yy, mm) = (1950 + i / 12, i % 12 + 1);
        write!(text, "{yy:04}-{mm:02}").unwrap();
        if i == 0 {
            text.push_str(",,0");
        } else {
            write!(text, ",{:?},1", draw.y[i - 1]).unwrap();
        }
        for j in 0..d {
            write!(text, ",{:?},1", x[(i, j)]).unwrap();
        }
        text.push('\n');
    }
    let dir = tempfile::tempdir().unwrap();
    let processed = dir.path().join("synthetic.csv");
    std::fs::write(&processed, text).unwrap();

    let out_dir = dir.path().join("out");
    let out = llglab(&[
        "llg",
        "--input",
        processed.to_str().unwrap(),
        "--target",
        "syn",
        "--split-date",
        "1978-01",
        "--max-features",
        "600",
        "--grid",
        "100,300,600",
        "--out-dir",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&out), 0, "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let summary = std::fs::read_to_string(out_dir.join("syn_summary.csv")).unwrap();
    let row = summary.lines().nth(2).unwrap();
    let best_conf: f64 = row.split(',').nth(2).unwrap().parse().unwrap();
    assert!(
        best_conf <= 0.25,
        "band floor {best_conf} exceeds the planted population R2"
    );
    // The planted signal is detectable: the floor should also be positive.
    assert!(best_conf > 0.0, "band floor {best_conf} should detect the planted signal");
}

#[test]
fn rmt_check_sampled_gap_within_two_percent() {
    // Default check design (P = 2000, T = 1000) at c = 2, z = 0.1: the
    // sampled Stieltjes trace sits within 2% of the fixed point.
    let out = llglab(&["rmt-check", "--c", "2", "--z", "0.1"]);
    assert_eq!(exit_code(&out), 0);
    let text = String::from_utf8_lossy(&out.stdout).to_string();
    let gap_line = text.lines().find(|l| l.contains("m_hat")).unwrap();
    let pct: f64 = gap_line
        .split("rel gap")
        .nth(1)
        .unwrap()
        .trim()
        .trim_end_matches('%')
        .parse()
        .unwrap();
    assert!(pct <= 2.0, "sampled gap {pct}%");
}
