//! Regret, constraint violation, log-log slopes and replication statistics.

use crate::basis::Basis;
use crate::error::{Error, Result};
use crate::linalg::{dot, positive_part_norm2, Square};
use crate::policies::{ProjectedStream, Trajectory};

/// `benchmark - total_reward`
pub fn regret(traj: &Trajectory, benchmark: f64) -> f64 {
    benchmark - traj.total_reward
}

/// `Σ_t a_tᵀΦ x_t - bᵀΦ`, accumulated in time order from `-bᵀΦ`.
pub fn projected_residual(traj: &Trajectory, ps: &ProjectedStream) -> Result<Vec<f64>> {
    Error::check_len(ps.horizon(), traj.len())?;
    let mut left = ps.b_phi.clone();
    for rec in &traj.records {
        let x = rec.x_actual;
        if x != 0.0 {
            for (b, a) in left.iter_mut().zip(&ps.a_phi[rec.t]) {
                *b -= a * x;
            }
        }
    }
    Ok(left.into_iter().map(|v| -v).collect())
}

/// `‖[Σ_t a_tᵀΦ x_t - bᵀΦ]⁺‖₂`
pub fn violation_projected(traj: &Trajectory, ps: &ProjectedStream) -> Result<f64> {
    Ok(positive_part_norm2(&projected_residual(traj, ps)?))
}

const QP_MAX_ITERS: usize = 10_000;

/// `max { ρᵀw : w ≥ 0, ‖Φw‖₂ ≤ ū }`, clipped at 0.
///
/// With `w°` minimizing `½‖Φw‖² - ρᵀw` over `w ≥ 0`, the maximum equals
/// `ū·√(ρᵀw°)`. The inner problem is solved by an active-set method.
pub fn dual_tested_value(rho: &[f64], basis: &Basis, u_bar: f64) -> Result<f64> {
    let q = basis.q();
    Error::check_len(q, rho.len())?;
    if !(u_bar > 0.0 && u_bar.is_finite()) {
        return Err(Error::Precondition(format!("u_bar must be positive, got {u_bar}")));
    }
    if rho.iter().all(|r| *r <= 0.0) {
        return Ok(0.0);
    }
    let mut gram = vec![vec![0.0; q]; q];
    let cols: Vec<Vec<f64>> = (0..q).map(|j| basis.column(j).collect()).collect();
    for i in 0..q {
        for j in i..q {
            let v = dot(&cols[i], &cols[j]);
            gram[i][j] = v;
            gram[j][i] = v;
        }
    }
    let w = nonneg_quadratic(&gram, rho)?;
    Ok(u_bar * dot(rho, &w).max(0.0).sqrt())
}

/// `argmin_{w ≥ 0} ½wᵀGw - ρᵀw` for positive semi-definite `G`.
fn nonneg_quadratic(g: &[Vec<f64>], rho: &[f64]) -> Result<Vec<f64>> {
    let q = rho.len();
    let scale = rho.iter().fold(0.0_f64, |m, r| m.max(r.abs()));
    let tol = 1e-12 * (1.0 + scale);
    let mut w = vec![0.0; q];
    let mut passive = vec![false; q];
    let grad = |w: &[f64]| -> Vec<f64> { (0..q).map(|i| rho[i] - dot(&g[i], w)).collect() };
    let solve_passive = |passive: &[bool]| -> Option<Vec<f64>> {
        let idx: Vec<usize> = (0..q).filter(|&j| passive[j]).collect();
        let rows: Vec<Vec<f64>> = idx.iter().map(|&i| idx.iter().map(|&j| g[i][j]).collect()).collect();
        let rhs: Vec<f64> = idx.iter().map(|&i| rho[i]).collect();
        let sol = Square::from_rows(&rows).solve(&rhs, 1e-13)?;
        let mut z = vec![0.0; q];
        for (&i, v) in idx.iter().zip(sol) {
            z[i] = v;
        }
        Some(z)
    };
    for iter in 0..QP_MAX_ITERS {
        let gr = grad(&w);
        let enter = (0..q)
            .filter(|&j| !passive[j] && gr[j] > tol)
            .max_by(|&a, &b| gr[a].total_cmp(&gr[b]));
        let Some(j) = enter else {
            return Ok(w);
        };
        passive[j] = true;
        loop {
            let z = solve_passive(&passive).ok_or_else(|| {
                Error::numerical(
                    "dual-tested violation: singular Gram block",
                    format!("iteration {iter}, passive = {passive:?}"),
                )
            })?;
            if (0..q).all(|i| !passive[i] || z[i] > 0.0) {
                w = z;
                break;
            }
            let mut alpha = 1.0_f64;
            for i in 0..q {
                if passive[i] && z[i] <= 0.0 {
                    alpha = alpha.min(w[i] / (w[i] - z[i]));
                }
            }
            for i in 0..q {
                w[i] += alpha * (z[i] - w[i]);
                if passive[i] && w[i] <= 1e-15 {
                    passive[i] = false;
                    w[i] = 0.0;
                }
            }
            if !passive.iter().any(|p| *p) {
                break;
            }
        }
    }
    Err(Error::numerical(
        "dual-tested violation did not converge",
        format!("{QP_MAX_ITERS} active-set iterations, rho = {rho:?}"),
    ))
}

/// Worst violation against the dual test set of radius `u_bar`.
pub fn violation_dual_tested(traj: &Trajectory, ps: &ProjectedStream, basis: &Basis, u_bar: f64) -> Result<f64> {
    let rho = projected_residual(traj, ps)?;
    dual_tested_value(&rho, basis, u_bar)
}

/// Default test radius: `max_t ‖w_t‖_∞ · max_j ‖φ_j‖₂`, or `max_j ‖φ_j‖₂`
/// when the run never moved its dual.
pub fn default_u_bar(traj: &Trajectory, basis: &Basis) -> f64 {
    let col = basis.column_norms().into_iter().fold(0.0_f64, f64::max);
    let w = traj.w_inf_max();
    if w > 0.0 && w.is_finite() {
        w * col
    } else {
        col
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RunMetrics {
    pub reward: f64,
    pub benchmark: f64,
    pub regret: f64,
    /// `regret / benchmark`, NaN unless the benchmark is positive.
    pub regret_ratio: f64,
    pub violation_projected: f64,
    pub violation_dual_tested: f64,
    pub w_inf_max: f64,
    pub u_bar: f64,
}

pub fn run_metrics(
    traj: &Trajectory,
    ps: &ProjectedStream,
    basis: &Basis,
    benchmark: f64,
    u_bar: Option<f64>,
) -> Result<RunMetrics> {
    if !benchmark.is_finite() {
        return Err(Error::Precondition(format!("benchmark must be finite, got {benchmark}")));
    }
    let u_bar = u_bar.unwrap_or_else(|| default_u_bar(traj, basis));
    let reg = regret(traj, benchmark);
    Ok(RunMetrics {
        reward: traj.total_reward,
        benchmark,
        regret: reg,
        regret_ratio: if benchmark > 0.0 { reg / benchmark } else { f64::NAN },
        violation_projected: violation_projected(traj, ps)?,
        violation_dual_tested: violation_dual_tested(traj, ps, basis, u_bar)?,
        w_inf_max: traj.w_inf_max(),
        u_bar,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LogLogFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    pub used: usize,
}

/// Least squares of `ln value` on `ln T`. Non-positive values are dropped
/// with a warning; at least three usable points are required.
pub fn fit_loglog_slope(points: &[(f64, f64)]) -> Result<LogLogFit> {
    let mut xs = Vec::with_capacity(points.len());
    let mut ys = Vec::with_capacity(points.len());
    for &(t, v) in points {
        if t > 0.0 && v > 0.0 && t.is_finite() && v.is_finite() {
            xs.push(t.ln());
            ys.push(v.ln());
        } else {
            log::warn!("log-log fit: dropping point (T = {t}, value = {v})");
        }
    }
    let n = xs.len();
    if n < 3 {
        return Err(Error::Precondition(format!(
            "log-log fit needs at least 3 positive points, got {n} of {}",
            points.len()
        )));
    }
    let nf = n as f64;
    let mx = xs.iter().sum::<f64>() / nf;
    let my = ys.iter().sum::<f64>() / nf;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    if sxx == 0.0 {
        return Err(Error::Precondition("log-log fit needs at least two distinct T values".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_tot: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let ss_res: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum();
    let r2 = if ss_tot == 0.0 { 1.0 } else { 1.0 - ss_res / ss_tot };
    Ok(LogLogFit {
        slope,
        intercept,
        r2,
        used: n,
    })
}

/// Mean, sample standard deviation and normal 95% interval.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Summary {
    pub n: usize,
    pub mean: f64,
    pub sd: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
}

pub fn summarize(values: &[f64]) -> Result<Summary> {
    let n = values.len();
    if n < 2 {
        return Err(Error::Precondition(format!("need at least 2 replications to aggregate, got {n}")));
    }
    let nf = n as f64;
    let mean = values.iter().sum::<f64>() / nf;
    let sd = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (nf - 1.0)).sqrt();
    let half = 1.96 * sd / nf.sqrt();
    Ok(Summary {
        n,
        mean,
        sd,
        ci_lo: mean - half,
        ci_hi: mean + half,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Aggregate {
    pub n_reps: usize,
    pub reward: Summary,
    pub benchmark: Summary,
    pub regret: Summary,
    pub regret_ratio: Summary,
    pub violation_projected: Summary,
    pub violation_dual_tested: Summary,
    pub w_inf_max: Summary,
}

/// Aggregate replications given in replication order.
pub fn aggregate(reps: &[RunMetrics]) -> Result<Aggregate> {
    let col = |f: fn(&RunMetrics) -> f64| summarize(&reps.iter().map(f).collect::<Vec<_>>());
    Ok(Aggregate {
        n_reps: reps.len(),
        reward: col(|r| r.reward)?,
        benchmark: col(|r| r.benchmark)?,
        regret: col(|r| r.regret)?,
        regret_ratio: col(|r| r.regret_ratio)?,
        violation_projected: col(|r| r.violation_projected)?,
        violation_dual_tested: col(|r| r.violation_dual_tested)?,
        w_inf_max: col(|r| r.w_inf_max)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::BasisSpec;
    use crate::policies::{fixtures, run_alg1, run_two_stage, JRule, StepRecord, StepSchedule, TwoStageConfig, TwoStageParams};
    use proptest::prelude::*;

    fn fixed(total: f64) -> Trajectory {
        Trajectory {
            records: Vec::new(),
            total_reward: total,
            final_w: Vec::new(),
            t_fast: None,
        }
    }

    #[test]
    fn regret_arithmetic() {
        assert_eq!(regret(&fixed(7.0), 10.0), 3.0);
        assert_eq!(regret(&fixed(10.0), 10.0), 0.0);
    }

    #[test]
    fn positive_part_norms() {
        assert_eq!(positive_part_norm2(&[1.0, -2.0]), 1.0);
        assert_eq!(positive_part_norm2(&[3.0, 4.0]), 5.0);
    }

    #[test]
    fn residual_matches_budget() {
        let ps = ProjectedStream::from_parts(vec![1.0, 1.0], vec![vec![3.0, 1.0], vec![1.0, 4.0]], vec![1.0, 1.0]).unwrap();
        let rec = |t: usize, x: f64| StepRecord {
            t,
            x_virtual: x,
            x_actual: x,
            w: vec![],
            g: vec![],
            budget: vec![],
            reward: x,
        };
        let tr = Trajectory::from_records(vec![rec(0, 1.0), rec(1, 1.0)], vec![], None);
        assert_eq!(projected_residual(&tr, &ps).unwrap(), vec![2.0, 3.0]);
        assert!((violation_projected(&tr, &ps).unwrap() - 13f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn dual_tested_closed_form_q1() {
        let basis = Basis::from_rows(&[vec![1.0], vec![2.0]]).unwrap();
        let v = dual_tested_value(&[3.0], &basis, 2.0).unwrap();
        assert!((v - 2.0 * 3.0 / 5f64.sqrt()).abs() < 1e-14);
        assert_eq!(dual_tested_value(&[-1.0], &basis, 2.0).unwrap(), 0.0);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn dual_tested_dominates_feasible_points(
            rho in prop::collection::vec(-3.0f64..3.0, 4),
            probes in prop::collection::vec(prop::collection::vec(0.0f64..1.0, 4), 50),
        ) {
            let basis = Basis::rbf(&BasisSpec::with_defaults(12, 4)).unwrap();
            let u_bar = 1.5;
            let v = dual_tested_value(&rho, &basis, u_bar).unwrap();
            prop_assert!(v >= 0.0);
            for w in &probes {
                let norm = crate::linalg::norm2(&basis.eval_dual(w).unwrap());
                if norm == 0.0 { continue; }
                let scaled: Vec<f64> = w.iter().map(|x| x * u_bar / norm).collect();
                prop_assert!(dot(&rho, &scaled) <= v + 1e-9);
            }
            if rho.iter().any(|r| *r > 0.0) {
                prop_assert!(v > 0.0);
            }
        }

        #[test]
        fn ci_brackets_mean(values in prop::collection::vec(-100.0f64..100.0, 2..40)) {
            let s = summarize(&values).unwrap();
            prop_assert!(s.ci_lo <= s.mean && s.mean <= s.ci_hi);
        }
    }

    #[test]
    fn slopes() {
        let lin: Vec<(f64, f64)> = [10.0, 100.0, 1000.0, 5000.0].iter().map(|t| (*t, 3.0 * t)).collect();
        assert!((fit_loglog_slope(&lin).unwrap().slope - 1.0).abs() < 1e-9);
        let sq: Vec<(f64, f64)> = [10.0_f64, 100.0, 1000.0].iter().map(|t| (*t, 2.0 * t.sqrt())).collect();
        assert!((fit_loglog_slope(&sq).unwrap().slope - 0.5).abs() < 1e-9);
        // points (ln T, ln v) = (0,0), (1,1), (2,3): slope 1.5, intercept -1/6
        let e = std::f64::consts::E;
        let fit = fit_loglog_slope(&[(1.0, 1.0), (e, e), (e * e, e.powi(3))]).unwrap();
        assert!((fit.slope - 1.5).abs() < 1e-12);
        assert!((fit.intercept + 1.0 / 6.0).abs() < 1e-12);
        assert!(fit_loglog_slope(&[(1.0, 1.0), (2.0, -1.0), (3.0, 2.0)]).is_err());
    }

    #[test]
    fn summaries() {
        let s = summarize(&[1.0, 3.0]).unwrap();
        assert_eq!(s.mean, 2.0);
        assert!((s.sd - 2f64.sqrt()).abs() < 1e-15);
        let z = summarize(&[4.0; 5]).unwrap();
        assert_eq!((z.ci_lo, z.ci_hi), (4.0, 4.0));
        assert!(summarize(&[1.0]).is_err());
    }

    #[test]
    fn gated_runs_have_zero_violation_and_nonnegative_regret() {
        for seed in 0..20 {
            let f = fixtures::tight(20, 5, 300, 100 + seed);
            let bounds = crate::instance::compute_bounds(&f.stream, &f.instance, &f.basis).unwrap();
            let p = TwoStageParams {
                j_rule: JRule::Fixed(10),
                ..TwoStageParams::default()
            };
            let cfg = TwoStageConfig::derive(p, &bounds, 300).unwrap();
            let tr = run_two_stage(&f.ps, &cfg).unwrap();
            let bench = crate::oracle::solve_projected_lp(&f.ps).unwrap().value;
            let m = run_metrics(&tr, &f.ps, &f.basis, bench, None).unwrap();
            assert_eq!(m.violation_projected, 0.0);
            assert_eq!(m.violation_dual_tested, 0.0);
            assert!(m.regret >= -1e-9 * (1.0 + bench));
        }
    }

    #[test]
    fn ungated_violation_agrees_in_sign() {
        let f = fixtures::tight(20, 5, 300, 7);
        let tr = run_alg1(&f.ps, &StepSchedule::inv_sqrt(300)).unwrap();
        let m = run_metrics(&tr, &f.ps, &f.basis, 1.0, None).unwrap();
        assert_eq!(m.violation_projected == 0.0, m.violation_dual_tested == 0.0);
    }
}
