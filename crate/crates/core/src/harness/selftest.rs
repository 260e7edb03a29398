//! Quick end-to-end consistency checks.

use std::io::Write;

use super::config::{Algo, ExperimentConfig};
use super::run::{run_experiment, write_csv};
use crate::basis::{Basis, BasisSpec};
use crate::dual::Quadratic;
use crate::error::Result;
use crate::instance::{derive_seed, gen_support, sample_rhs, stream_stochastic, ArrivalSource, Preset, SupportSize};
use crate::metrics::violation_projected;
use crate::oracle::{brute_force_lp, minimize, sample_objective, solve_projected_lp, DUAL_TOL};
use crate::policies::{run_alg1, run_alg2, ProjectedStream, StepSchedule};

fn tight_stream(m: usize, q: usize, horizon: usize, seed: u64) -> Result<ProjectedStream> {
    let basis = Basis::rbf(&BasisSpec::with_defaults(m, q))?;
    let dist = Preset::Uniform.dist(SupportSize::Finite(10));
    let support = gen_support(&dist, 10, m, derive_seed(seed, 0))?;
    let d = sample_rhs(m, 0.4, 0.8, derive_seed(seed, 1))?;
    let stream = stream_stochastic(&ArrivalSource::Support(&support), horizon, derive_seed(seed, 2))?;
    ProjectedStream::new(&stream, &basis, &d)
}

fn check_simplex_vs_enumeration() -> Result<bool> {
    for s in 0..10 {
        let ps = tight_stream(4, 3, 5, derive_seed(11, s))?;
        let lp = solve_projected_lp(&ps)?.value;
        let rows: Vec<Vec<f64>> = (0..ps.q()).map(|j| ps.a_phi.iter().map(|a| a[j]).collect()).collect();
        let brute = brute_force_lp(&ps.rewards, &rows, &ps.b_phi)?;
        if (lp - brute).abs() > 1e-9 * (1.0 + brute.abs()) {
            return Ok(false);
        }
    }
    Ok(true)
}

fn check_strong_duality() -> Result<bool> {
    for s in 0..5 {
        let ps = tight_stream(20, 5, 100, derive_seed(12, s))?;
        let lp = solve_projected_lp(&ps)?.value;
        let dual = 100.0 * minimize(&sample_objective(&ps)?, 2000, DUAL_TOL)?.value;
        if (lp - dual).abs() > 1e-6 * (1.0 + lp.abs()) {
            return Ok(false);
        }
    }
    Ok(true)
}

fn check_degeneration() -> Result<bool> {
    let ps = tight_stream(20, 5, 300, 13)?;
    let gamma = StepSchedule::inv_sqrt(300);
    let a = run_alg1(&ps, &gamma)?;
    let b = run_alg2(&ps, &gamma, &Quadratic)?;
    Ok(a.decisions() == b.decisions() && a.max_dual_deviation(&b) <= 1e-12)
}

fn tiny_config() -> Result<ExperimentConfig> {
    ExperimentConfig::parse(
        "[experiment]\nalgo = [\"alg1\", \"alg5\", \"simple_gd\"]\nreps = 2\nseed = 3\n\
         [size]\nT = 200\nm = 20\nq = 5\n",
    )
}

fn check_gated_feasibility() -> Result<bool> {
    let out = run_experiment(&tiny_config()?, None)?;
    Ok(out
        .results
        .iter()
        .filter(|r| r.algo == Algo::Alg5)
        .all(|r| r.metrics.violation_projected == 0.0))
}

fn check_gate_metric() -> Result<bool> {
    let ps = tight_stream(20, 5, 300, 14)?;
    let traj = run_alg1(&ps, &StepSchedule::inv_sqrt(300))?;
    Ok(violation_projected(&traj, &ps)? >= 0.0)
}

fn strip_wall(text: &str) -> String {
    let col = super::run::csv_header().split(',').position(|c| c == "wall_ms").unwrap_or(0);
    text.lines()
        .map(|l| {
            let mut f: Vec<&str> = l.split(',').collect();
            if f.len() > col {
                f[col] = "";
            }
            f.join(",")
        })
        .collect::<Vec<_>>()
        .join("\n")
}

fn check_determinism() -> Result<bool> {
    let cfg = tiny_config()?;
    let mut a = Vec::new();
    let mut b = Vec::new();
    write_csv(&run_experiment(&cfg, None)?, &mut a)?;
    write_csv(&run_experiment(&cfg, None)?, &mut b)?;
    let a = String::from_utf8_lossy(&a).into_owned();
    let b = String::from_utf8_lossy(&b).into_owned();
    Ok(strip_wall(&a) == strip_wall(&b))
}

/// Run every check, printing one line each. Returns whether all passed.
pub fn selftest<W: Write>(mut out: W) -> Result<bool> {
    let checks: [(&str, fn() -> Result<bool>); 6] = [
        ("simplex matches vertex enumeration", check_simplex_vs_enumeration),
        ("projected LP equals T * min f", check_strong_duality),
        ("quadratic mirror descent equals gradient descent", check_degeneration),
        ("budget-gated runs are feasible", check_gated_feasibility),
        ("violation metric is non-negative", check_gate_metric),
        ("repeated runs give identical CSV", check_determinism),
    ];
    let mut all = true;
    for (name, check) in checks {
        let ok = check()?;
        all &= ok;
        writeln!(out, "{} {name}", if ok { "PASS" } else { "FAIL" })?;
    }
    Ok(all)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn selftest_passes() {
        let mut buf = Vec::new();
        assert!(selftest(&mut buf).unwrap());
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().filter(|l| l.starts_with("PASS")).count(), 6);
    }
}
