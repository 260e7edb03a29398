//! Offline benchmarks.
//!
//! The projected LP `max rᵀx s.t. ΦᵀAx ≤ Φᵀb, 0 ≤ x ≤ 1` is solved by a
//! bounded-variable simplex over its `q` rows. Its dual is `T·min f_{T,Φ}`,
//! minimized independently in `w`-space. Tiny instances can also be checked
//! by vertex enumeration.

mod brute;
mod dual_min;
mod simplex;

use std::io::Write;

pub use brute::{brute_force_lp, BRUTE_MAX_ROWS, BRUTE_MAX_T};
pub use dual_min::{minimize, Atom, DualObjective, DualSolution, DualStatus, DEFAULT_SUBGRADIENT_ITERS};

use crate::basis::Basis;
use crate::csvfmt::fmt_f64;
use crate::error::{Error, Result};
use crate::instance::Arrival;
use crate::linalg::{axpy, dot, norm2};
use crate::policies::{GeneralModel, ProjectedStream};
use simplex::{solve_bounded, BoundedLp};

pub const LP_MAX_Q: usize = 64;
pub const LP_MAX_T: usize = 100_000;

/// Default multiplier tolerance of the dual polish.
pub const DUAL_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq)]
pub struct ProjectedLpSolution {
    pub value: f64,
    /// Optimizer, one entry per arrival.
    pub x: Vec<f64>,
    /// Row prices, an optimal `w` for `T·f_{T,Φ}`.
    pub duals: Vec<f64>,
    pub pivots: usize,
    pub bland: bool,
}

/// Solve the projected LP with budget `bᵀΦ`.
pub fn solve_projected_lp(ps: &ProjectedStream) -> Result<ProjectedLpSolution> {
    solve_projected_lp_with_rhs(ps, &ps.b_phi)
}

pub fn solve_projected_lp_with_rhs(ps: &ProjectedStream, rhs: &[f64]) -> Result<ProjectedLpSolution> {
    let t = ps.horizon();
    let q = ps.q();
    Error::check_len(q, rhs.len())?;
    if q > LP_MAX_Q || t > LP_MAX_T {
        return Err(Error::Precondition(format!(
            "projected LP limited to q <= {LP_MAX_Q} and T <= {LP_MAX_T}, got q = {q}, T = {t}"
        )));
    }
    let atoms = dual_min::aggregate(&ps.rewards, &ps.a_phi, &vec![1.0; t]);
    let cost: Vec<f64> = atoms.iter().map(|a| a.r).collect();
    let cols: Vec<Vec<f64>> = atoms.iter().map(|a| a.p.clone()).collect();
    let upper: Vec<f64> = atoms.iter().map(|a| a.members.len() as f64).collect();
    let out = solve_bounded(&BoundedLp {
        cost: &cost,
        cols: &cols,
        upper: &upper,
        rhs,
    })?;
    let mut x = vec![0.0; t];
    for (atom, total) in atoms.iter().zip(&out.x) {
        let mut left = *total;
        for &i in &atom.members {
            let v = left.clamp(0.0, 1.0);
            x[i] = v;
            left -= v;
        }
    }
    Ok(ProjectedLpSolution {
        value: out.value,
        x,
        duals: out.duals,
        pivots: out.pivots,
        bland: out.bland,
    })
}

/// `f_{T,Φ}` for a projected stream.
pub fn sample_objective(ps: &ProjectedStream) -> Result<DualObjective> {
    let t = ps.horizon();
    if t == 0 {
        return Err(Error::Precondition("empty stream".into()));
    }
    let w = vec![1.0 / t as f64; t];
    DualObjective::new(ps.d_phi.clone(), &ps.rewards, &ps.a_phi, &w)
}

/// Minimize `f_{T,Φ}`; the returned value is `f_{T,Φ}(ŵ*)` (not scaled by T).
pub fn minimize_f_t_phi(obj: &DualObjective, iters: usize, tol: f64) -> Result<DualSolution> {
    minimize(obj, iters, tol)
}

/// Minimize `f_Φ(w) = dᵀΦw + E[(r - aᵀΦw)⁺]` for a finite support.
pub fn minimize_f_phi(support: &[Arrival], probs: &[f64], basis: &Basis, d: &[f64]) -> Result<DualSolution> {
    Error::check_len(support.len(), probs.len())?;
    Error::check_len(basis.m(), d.len())?;
    let total: f64 = probs.iter().sum();
    if probs.iter().any(|p| !(*p >= 0.0)) || (total - 1.0).abs() > 1e-9 {
        return Err(Error::Precondition(format!("support probabilities must be non-negative and sum to 1, got {total}")));
    }
    let r: Vec<f64> = support.iter().map(|a| a.r).collect();
    let mut p = Vec::with_capacity(support.len());
    for a in support {
        p.push(basis.project_columns(&a.a)?);
    }
    let obj = DualObjective::new(basis.project_columns(d)?, &r, &p, probs)?;
    minimize(&obj, DEFAULT_SUBGRADIENT_ITERS.min(20_000), DUAL_TOL)
}

/// `x_t = 𝕀(r_t > a_tᵀΦw + tie_tol)`.
pub fn recover_primal_threshold(ps: &ProjectedStream, w: &[f64], tie_tol: f64) -> Result<Vec<f64>> {
    Error::check_len(ps.q(), w.len())?;
    if let Some(j) = w.iter().position(|v| !(*v >= 0.0)) {
        return Err(Error::Precondition(format!("w[{j}] = {} is negative", w[j])));
    }
    Ok((0..ps.horizon())
        .map(|t| if ps.rewards[t] > ps.price(t, w) + tie_tol { 1.0 } else { 0.0 })
        .collect())
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchmarkReport {
    /// `R*_Φ`
    pub r_phi_star: f64,
    /// `T·f_{T,Φ}(ŵ*)`
    pub dual_value: f64,
    pub w_hat: Vec<f64>,
    pub gap: f64,
    pub lp_method: &'static str,
    pub dual_method: &'static str,
    pub dual_status: DualStatus,
}

impl BenchmarkReport {
    pub const CSV_HEADER: &'static str = "r_phi_star,dual_value,gap,lp_method,dual_method,dual_status";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{}",
            fmt_f64(self.r_phi_star),
            fmt_f64(self.dual_value),
            fmt_f64(self.gap),
            self.lp_method,
            self.dual_method,
            self.dual_status.name()
        )
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{}", Self::CSV_HEADER)?;
        writeln!(out, "{}", self.csv_row())?;
        Ok(())
    }

    /// `ŵ*` as `j,w_j`.
    pub fn write_w_hat_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "j,w_j")?;
        for (j, v) in self.w_hat.iter().enumerate() {
            writeln!(out, "{},{}", j + 1, fmt_f64(*v))?;
        }
        Ok(())
    }
}

/// Projected-LP value together with an independently minimized dual.
pub fn benchmark(ps: &ProjectedStream, iters: usize) -> Result<BenchmarkReport> {
    let lp = solve_projected_lp(ps)?;
    let obj = sample_objective(ps)?;
    let dual = minimize(&obj, iters, DUAL_TOL)?;
    let dual_value = ps.horizon() as f64 * dual.value;
    Ok(BenchmarkReport {
        r_phi_star: lp.value,
        dual_value,
        w_hat: dual.w,
        gap: dual_value - lp.value,
        lp_method: "bounded-simplex",
        dual_method: "subgradient+vertex-descent",
        dual_status: dual.status,
    })
}

/// Weak-duality bound on the projected program with a general model:
/// `max Σ f(x_t; r_t)` subject to `Σ c(x_t)·a_tᵀΦ ≤ bᵀΦ`, `x ∈ [0,1]^T`.
///
/// Every `w ≥ 0` gives the upper bound
/// `bᵀΦw + Σ_t max_x (f(x; r_t) - c(x)·a_tᵀΦw)`; the smallest value seen
/// along a projected subgradient run is returned.
pub fn general_dual_bound(ps: &ProjectedStream, model: &dyn GeneralModel, iters: usize) -> Result<f64> {
    let q = ps.q();
    let d_lo = ps.d_phi.iter().copied().fold(f64::INFINITY, f64::min);
    let f_bar = ps.rewards.iter().map(|r| model.reward_bound(*r)).fold(0.0_f64, f64::max);
    let radius = if d_lo > 0.0 && f_bar > 0.0 { f_bar / d_lo } else { 1.0 };
    let eval = |w: &[f64]| -> Result<(f64, Vec<f64>)> {
        let mut value = dot(&ps.b_phi, w);
        let mut g = ps.b_phi.clone();
        for t in 0..ps.horizon() {
            let p = ps.price(t, w);
            let x = model.argmax(ps.rewards[t], p);
            if !(0.0..=1.0).contains(&x) {
                return Err(Error::Model(format!("argmax returned {x} outside [0, 1] at step {t}")));
            }
            let c = model.usage(x);
            value += model.reward(x, ps.rewards[t]) - c * p;
            if c != 0.0 {
                axpy(-c, &ps.a_phi[t], &mut g);
            }
        }
        Ok((value, g))
    };
    let mut w = vec![0.0; q];
    let mut best = f64::INFINITY;
    for k in 1..=iters.max(1) {
        let (value, g) = eval(&w)?;
        if !value.is_finite() {
            return Err(Error::numerical(
                "non-finite dual value",
                format!("iteration {k}, w = {w:?}"),
            ));
        }
        best = best.min(value);
        let norm = norm2(&g);
        if norm == 0.0 {
            break;
        }
        let step = radius / (k as f64).sqrt() / norm;
        for (wi, gi) in w.iter_mut().zip(&g) {
            *wi = (*wi - step * gi).max(0.0);
        }
    }
    Ok(best)
}
