use std::path::Path;
use std::process::{Command, Output};

use osilp::harness::{csv_header, load_series, ExperimentConfig};

fn osilp(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_osilp"))
        .args(args)
        .current_dir(dir)
        .env("OSILP_THREADS", "2")
        .output()
        .unwrap()
}

const TINY: &str = "[experiment]\nalgo = \"alg1\"\nreps = 1\nseed = 3\n[size]\nT = 50\nm = 10\nq = 3\n";

#[test]
fn single_replication_gives_two_rows() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("c.toml"), TINY).unwrap();
    let out = osilp(&["run", "--config", "c.toml"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 3);
    assert_eq!(lines[0], csv_header());
    assert!(lines[1].starts_with("result,0:0,alg1,stochastic,uniform,50,10,3,"));
    assert!(lines[2].starts_with("aggregate,0:all,alg1,"));
}

#[test]
fn out_file_and_effective_config() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("c.toml"), TINY).unwrap();
    let out = osilp(&["run", "--config", "c.toml", "--reps", "2", "--seed", "9", "--out", "r.csv"], dir.path());
    assert!(out.status.success());
    assert!(out.stdout.is_empty());
    let text = std::fs::read_to_string(dir.path().join("r.csv")).unwrap();
    assert_eq!(text.lines().count(), 1 + 2 + 1);
    let eff = std::fs::read_to_string(dir.path().join("r.csv.effective.toml")).unwrap();
    let cfg = ExperimentConfig::parse(&eff).unwrap();
    assert_eq!(cfg.reps, 2);
    assert_eq!(cfg.master_seed, 9);
    assert_eq!(ExperimentConfig::parse(&cfg.to_toml()).unwrap(), cfg);
}

#[test]
fn print_config_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let out = osilp(&["run", "--paper-scale", "--print-config"], dir.path());
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let cfg = ExperimentConfig::parse(&text).unwrap();
    assert_eq!((cfg.horizon, cfg.m, cfg.reps), (5000, 2000, 100));
}

#[test]
fn config_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.toml"), "[size]\nT = 10\nwidth = 3\n").unwrap();
    let out = osilp(&["run", "--config", "bad.toml"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("size.width"));

    std::fs::write(dir.path().join("empty.toml"), "[sweep]\naxis = \"T\"\nvalues = []\n").unwrap();
    assert_eq!(osilp(&["sweep", "--config", "empty.toml"], dir.path()).status.code(), Some(2));

    std::fs::write(dir.path().join("nosweep.toml"), TINY).unwrap();
    assert_eq!(osilp(&["sweep", "--config", "nosweep.toml"], dir.path()).status.code(), Some(2));

    // two-stage schedule longer than the horizon
    std::fs::write(
        dir.path().join("long.toml"),
        "[experiment]\nalgo = \"alg5\"\nreps = 1\n[size]\nT = 50\nm = 10\nq = 3\n[two_stage]\nJ = 1000\n",
    )
    .unwrap();
    assert_eq!(osilp(&["run", "--config", "long.toml"], dir.path()).status.code(), Some(2));
}

#[test]
fn sweep_and_plot() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("s.toml"),
        "[experiment]\nalgo = [\"alg2\", \"alg5\"]\nreps = 3\n[size]\nm = 20\nq = 4\n\
         [two_stage]\nJ = \"capped\"\n[sweep]\naxis = \"T\"\nvalues = [100, 200, 400]\n",
    )
    .unwrap();
    let out = osilp(&["sweep", "--config", "s.toml", "--out", "s.csv"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(dir.path().join("s.csv")).unwrap();
    assert_eq!(text.lines().filter(|l| l.starts_with("slope,")).count(), 2);

    let out = osilp(&["plot", "s.csv", "--out", "figs"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for metric in ["regret", "regret_ratio", "violation_projected", "violation_dual"] {
        let svg = std::fs::read_to_string(dir.path().join("figs").join(format!("{metric}.svg"))).unwrap();
        assert!(svg.starts_with("<svg"));
        assert_eq!(svg.matches("class=\"legend\"").count(), 2);
        assert_eq!(svg.matches("<polyline").count(), 2);
    }

    // band half-width recomputed from the replication rows
    let (label, series) = load_series(text.as_bytes()).unwrap();
    assert_eq!(label, "T");
    let header = csv_header();
    let cols: Vec<&str> = header.split(',').collect();
    let col = |n: &str| cols.iter().position(|c| *c == n).unwrap();
    for s in series.iter().filter(|s| s.metric == "regret") {
        for p in &s.points {
            let reps: Vec<f64> = text
                .lines()
                .filter(|l| l.starts_with("result,"))
                .map(|l| l.split(',').collect::<Vec<_>>())
                .filter(|f| f[col("algo")] == s.algo && f[col("T")].parse::<f64>().unwrap() == p.x)
                .map(|f| f[col("regret")].parse().unwrap())
                .collect();
            let n = reps.len() as f64;
            let mean = reps.iter().sum::<f64>() / n;
            let sd = (reps.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
            let half = 1.96 * sd / n.sqrt();
            assert!((p.ci_hi - p.mean - half).abs() <= 1e-9 * (1.0 + half));
            assert!((p.mean - p.ci_lo - half).abs() <= 1e-9 * (1.0 + half));
        }
    }
}

#[test]
fn malformed_csv_reports_line() {
    let dir = tempfile::tempdir().unwrap();
    let body = format!("{}\naggregate,oops\n", csv_header());
    std::fs::write(dir.path().join("bad.csv"), body).unwrap();
    let out = osilp(&["plot", "bad.csv", "--out", "figs"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2"));
}

#[test]
fn dump_writes_trajectories() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("c.toml"), TINY).unwrap();
    let out = osilp(&["run", "--config", "c.toml", "--dump", "traj", "--out", "r.csv"], dir.path());
    assert!(out.status.success());
    let t = std::fs::read_to_string(dir.path().join("traj").join("traj_p0_r0_alg1.csv")).unwrap();
    assert!(t.starts_with("t,x_virtual,x_actual,reward,w_1,w_2,w_3,B_1,B_2,B_3\n"));
    assert_eq!(t.lines().count(), 51);
}

#[test]
fn selftest_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let out = osilp(&["selftest"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.lines().all(|l| l.starts_with("PASS ")));
}
