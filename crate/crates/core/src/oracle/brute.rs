//! Exact LP value on tiny instances by vertex enumeration.

use crate::error::{Error, Result};
use crate::linalg::Square;

pub const BRUTE_MAX_T: usize = 6;
pub const BRUTE_MAX_ROWS: usize = 4;

const FEAS_TOL: f64 = 1e-9;

/// `max rᵀx  s.t.  Ax ≤ b,  0 ≤ x ≤ 1` with `A` given by rows.
///
/// Every vertex fixes some variables at 0 or 1 and makes as many rows tight
/// as there are free variables, so enumerating row subsets, free-variable
/// subsets of the same size and 0/1 assignments of the rest covers them all.
pub fn brute_force_lp(r: &[f64], a: &[Vec<f64>], b: &[f64]) -> Result<f64> {
    let t = r.len();
    let m = a.len();
    if t > BRUTE_MAX_T || m > BRUTE_MAX_ROWS {
        return Err(Error::Precondition(format!(
            "vertex enumeration is limited to T <= {BRUTE_MAX_T} and at most {BRUTE_MAX_ROWS} rows, got T = {t}, rows = {m}"
        )));
    }
    Error::check_len(m, b.len())?;
    for row in a {
        Error::check_len(t, row.len())?;
    }
    let feasible = |x: &[f64]| {
        x.iter().all(|v| *v >= -FEAS_TOL && *v <= 1.0 + FEAS_TOL)
            && a.iter().zip(b).all(|(row, bi)| {
                let lhs: f64 = row.iter().zip(x).map(|(p, q)| p * q).sum();
                lhs <= bi + FEAS_TOL * (1.0 + bi.abs())
            })
    };
    let mut best = f64::NEG_INFINITY;
    for rows in 0u32..(1 << m) {
        let rows: Vec<usize> = (0..m).filter(|i| rows & (1 << i) != 0).collect();
        let k = rows.len();
        if k > t {
            continue;
        }
        for free in 0u32..(1 << t) {
            if free.count_ones() as usize != k {
                continue;
            }
            let free: Vec<usize> = (0..t).filter(|j| free & (1 << j) != 0).collect();
            let fixed: Vec<usize> = (0..t).filter(|j| !free.contains(j)).collect();
            for assign in 0u32..(1 << fixed.len()) {
                let mut x = vec![0.0; t];
                for (bit, &j) in fixed.iter().enumerate() {
                    if assign & (1 << bit) != 0 {
                        x[j] = 1.0;
                    }
                }
                if k > 0 {
                    let sys: Vec<Vec<f64>> = rows.iter().map(|&i| free.iter().map(|&j| a[i][j]).collect()).collect();
                    let rhs: Vec<f64> = rows
                        .iter()
                        .map(|&i| b[i] - fixed.iter().map(|&j| a[i][j] * x[j]).sum::<f64>())
                        .collect();
                    let Some(sol) = Square::from_rows(&sys).solve(&rhs, 1e-12) else {
                        continue;
                    };
                    for (&j, v) in free.iter().zip(sol) {
                        x[j] = v;
                    }
                }
                if feasible(&x) {
                    let val: f64 = r.iter().zip(&x).map(|(p, q)| p * q).sum();
                    best = best.max(val);
                }
            }
        }
    }
    if best.is_finite() {
        Ok(best)
    } else {
        Err(Error::Precondition("no feasible vertex; the right-hand side must admit x = 0".into()))
    }
}
