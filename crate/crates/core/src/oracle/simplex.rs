//! Bounded-variable primal simplex for
//! `max cᵀx  s.t.  Mx ≤ h,  0 ≤ x ≤ u` with `h ≥ 0`.
//!
//! The slack basis is feasible at `x = 0`. Pricing is Dantzig's rule until
//! a long run of degenerate pivots, after which Bland's rule takes over for
//! the rest of the solve.

use crate::error::{Error, Result};
use crate::linalg::Square;

const PIVOT_TOL: f64 = 1e-11;
const REFACTOR_EVERY: usize = 64;
const DEGENERATE_STEP: f64 = 1e-13;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum State {
    Lower,
    Upper,
    Basic,
}

pub(crate) struct BoundedLp<'a> {
    pub cost: &'a [f64],
    /// Column of `M` per structural variable.
    pub cols: &'a [Vec<f64>],
    pub upper: &'a [f64],
    pub rhs: &'a [f64],
}

#[derive(Clone, Debug)]
pub(crate) struct LpOutcome {
    pub value: f64,
    pub x: Vec<f64>,
    /// Row prices `y ≥ 0`.
    pub duals: Vec<f64>,
    pub pivots: usize,
    pub bland: bool,
}

struct Tableau<'a> {
    lp: &'a BoundedLp<'a>,
    n: usize,
    q: usize,
    state: Vec<State>,
    basic: Vec<usize>,
    binv: Vec<f64>,
    xb: Vec<f64>,
}

impl<'a> Tableau<'a> {
    fn cost(&self, j: usize) -> f64 {
        if j < self.n {
            self.lp.cost[j]
        } else {
            0.0
        }
    }

    fn upper(&self, j: usize) -> f64 {
        if j < self.n {
            self.lp.upper[j]
        } else {
            f64::INFINITY
        }
    }

    /// `B⁻¹ a_j`
    fn ftran(&self, j: usize) -> Vec<f64> {
        let q = self.q;
        if j < self.n {
            let col = &self.lp.cols[j];
            (0..q)
                .map(|i| {
                    let row = &self.binv[i * q..(i + 1) * q];
                    row.iter().zip(col).map(|(b, c)| b * c).sum()
                })
                .collect()
        } else {
            let k = j - self.n;
            (0..q).map(|i| self.binv[i * q + k]).collect()
        }
    }

    fn prices(&self) -> Vec<f64> {
        let q = self.q;
        let mut y = vec![0.0; q];
        for i in 0..q {
            let cb = self.cost(self.basic[i]);
            if cb != 0.0 {
                for k in 0..q {
                    y[k] += cb * self.binv[i * q + k];
                }
            }
        }
        y
    }

    fn reduced_cost(&self, j: usize, y: &[f64]) -> f64 {
        if j < self.n {
            self.lp.cost[j] - self.lp.cols[j].iter().zip(y).map(|(a, b)| a * b).sum::<f64>()
        } else {
            -y[j - self.n]
        }
    }

    fn refactor(&mut self) -> Result<()> {
        let q = self.q;
        let mut rows = vec![vec![0.0; q]; q];
        for (i, &j) in self.basic.iter().enumerate() {
            if j < self.n {
                for k in 0..q {
                    rows[k][i] = self.lp.cols[j][k];
                }
            } else {
                rows[j - self.n][i] = 1.0;
            }
        }
        let inv = Square::from_rows(&rows)
            .inverse(1e-14)
            .ok_or_else(|| Error::numerical("simplex basis became singular", format!("q = {q}")))?;
        for i in 0..q {
            for k in 0..q {
                self.binv[i * q + k] = inv.get(i, k);
            }
        }
        let mut rhs = self.lp.rhs.to_vec();
        for j in 0..self.n {
            if self.state[j] == State::Upper {
                let u = self.lp.upper[j];
                for (r, a) in rhs.iter_mut().zip(&self.lp.cols[j]) {
                    *r -= u * a;
                }
            }
        }
        self.xb = (0..q)
            .map(|i| (0..q).map(|k| self.binv[i * q + k] * rhs[k]).sum())
            .collect();
        Ok(())
    }

    fn pivot(&mut self, r: usize, alpha: &[f64]) {
        let q = self.q;
        let p = alpha[r];
        for k in 0..q {
            self.binv[r * q + k] /= p;
        }
        for i in 0..q {
            if i != r && alpha[i] != 0.0 {
                let f = alpha[i];
                for k in 0..q {
                    self.binv[i * q + k] -= f * self.binv[r * q + k];
                }
            }
        }
    }
}

pub(crate) fn solve_bounded(lp: &BoundedLp<'_>) -> Result<LpOutcome> {
    let n = lp.cols.len();
    let q = lp.rhs.len();
    Error::check_len(n, lp.cost.len())?;
    Error::check_len(n, lp.upper.len())?;
    for c in lp.cols {
        Error::check_len(q, c.len())?;
    }
    if let Some(i) = lp.rhs.iter().position(|h| !(*h >= 0.0 && h.is_finite())) {
        return Err(Error::Precondition(format!(
            "right-hand side entry {i} = {} must be finite and non-negative",
            lp.rhs[i]
        )));
    }
    if let Some(j) = lp.upper.iter().position(|u| !(*u >= 0.0 && u.is_finite())) {
        return Err(Error::Precondition(format!("upper bound {j} = {} is invalid", lp.upper[j])));
    }
    if let Some(j) = lp.cost.iter().position(|c| !c.is_finite()) {
        return Err(Error::Precondition(format!("objective coefficient {j} = {} is not finite", lp.cost[j])));
    }

    let mut binv = vec![0.0; q * q];
    for i in 0..q {
        binv[i * q + i] = 1.0;
    }
    let mut tab = Tableau {
        lp,
        n,
        q,
        state: vec![State::Lower; n + q],
        basic: (n..n + q).collect(),
        binv,
        xb: lp.rhs.to_vec(),
    };
    for j in n..n + q {
        tab.state[j] = State::Basic;
    }

    let scale = lp.cost.iter().fold(1.0_f64, |m, c| m.max(c.abs()));
    let opt_tol = 1e-10 * scale;
    let max_iters = 50 * (n + q) + 1000;
    let degenerate_limit = 5 * (n + q);
    let mut degenerate_run = 0usize;
    let mut bland = false;
    let mut pivots = 0usize;

    for iter in 0.. {
        if iter >= max_iters {
            return Err(Error::numerical(
                "simplex iteration cap reached",
                format!("iterations = {iter}, n = {n}, q = {q}"),
            ));
        }
        if pivots > 0 && pivots % REFACTOR_EVERY == 0 {
            tab.refactor()?;
        }
        let y = tab.prices();
        let mut entering: Option<(usize, f64, f64)> = None;
        for j in 0..n + q {
            let dir = match tab.state[j] {
                State::Basic => continue,
                State::Lower => 1.0,
                State::Upper => -1.0,
            };
            let d = tab.reduced_cost(j, &y);
            if dir * d <= opt_tol {
                continue;
            }
            if bland {
                entering = Some((j, dir, d));
                break;
            }
            if entering.is_none_or(|(_, _, best)| d.abs() > best.abs()) {
                entering = Some((j, dir, d));
            }
        }
        let Some((j, dir, _)) = entering else {
            break;
        };

        let alpha = tab.ftran(j);
        let mut theta = tab.upper(j);
        let mut leave: Option<(usize, bool, f64)> = None;
        for i in 0..q {
            let dl = dir * alpha[i];
            let b = tab.basic[i];
            let (lim, to_upper) = if dl > PIVOT_TOL {
                (tab.xb[i].max(0.0) / dl, false)
            } else if dl < -PIVOT_TOL && tab.upper(b).is_finite() {
                ((tab.upper(b) - tab.xb[i]).max(0.0) / -dl, true)
            } else {
                continue;
            };
            let better = match leave {
                None => lim < theta,
                Some((r, _, best_dl)) => {
                    if lim < theta - 1e-12 * theta.max(1.0) {
                        true
                    } else if lim <= theta + 1e-12 * theta.max(1.0) {
                        if bland {
                            b < tab.basic[r]
                        } else {
                            dl.abs() > best_dl.abs()
                        }
                    } else {
                        false
                    }
                }
            };
            if better {
                theta = lim;
                leave = Some((i, to_upper, dl));
            }
        }
        if !theta.is_finite() {
            return Err(Error::numerical("simplex ray is unbounded", format!("entering = {j}")));
        }

        for i in 0..q {
            tab.xb[i] -= theta * dir * alpha[i];
        }
        match leave {
            None => {
                tab.state[j] = if tab.state[j] == State::Lower {
                    State::Upper
                } else {
                    State::Lower
                };
            }
            Some((r, to_upper, _)) => {
                let entering_value = if dir > 0.0 { theta } else { tab.upper(j) - theta };
                let out = tab.basic[r];
                tab.state[out] = if to_upper { State::Upper } else { State::Lower };
                tab.basic[r] = j;
                tab.state[j] = State::Basic;
                tab.pivot(r, &alpha);
                tab.xb[r] = entering_value;
                pivots += 1;
            }
        }
        if theta <= DEGENERATE_STEP {
            degenerate_run += 1;
            if degenerate_run > degenerate_limit {
                bland = true;
            }
        } else {
            degenerate_run = 0;
        }
    }

    tab.refactor()?;
    let mut x = vec![0.0; n];
    for j in 0..n {
        x[j] = match tab.state[j] {
            State::Lower => 0.0,
            State::Upper => lp.upper[j],
            State::Basic => 0.0,
        };
    }
    for (i, &b) in tab.basic.iter().enumerate() {
        if b < n {
            x[b] = tab.xb[i].clamp(0.0, lp.upper[b]);
        }
    }
    let value = x.iter().zip(lp.cost).map(|(a, c)| a * c).sum();
    let duals = tab.prices().into_iter().map(|v| v.max(0.0)).collect();

    let hscale = lp.rhs.iter().fold(1.0_f64, |m, h| m.max(h.abs()));
    for k in 0..q {
        let used: f64 = (0..n).map(|j| lp.cols[j][k] * x[j]).sum();
        if used > lp.rhs[k] + 1e-7 * hscale {
            return Err(Error::numerical(
                "simplex solution violates a row",
                format!("row {k}: {used} > {}", lp.rhs[k]),
            ));
        }
    }
    Ok(LpOutcome {
        value,
        x,
        duals,
        pivots,
        bland,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn solve(cost: &[f64], cols: &[Vec<f64>], upper: &[f64], rhs: &[f64]) -> LpOutcome {
        solve_bounded(&BoundedLp {
            cost,
            cols,
            upper,
            rhs,
        })
        .unwrap()
    }

    #[test]
    fn two_variable_knapsack() {
        // max x1 + x2, x1 + x2 ≤ 1.5
        let out = solve(&[1.0, 1.0], &[vec![1.0], vec![1.0]], &[1.0, 1.0], &[1.5]);
        assert!((out.value - 1.5).abs() < 1e-12);
        assert!((out.duals[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn fractional_knapsack_order() {
        // values 6, 5, 4 with weights 3, 2, 4 and capacity 5
        let out = solve(
            &[6.0, 5.0, 4.0],
            &[vec![3.0], vec![2.0], vec![4.0]],
            &[1.0; 3],
            &[5.0],
        );
        assert!((out.value - 11.0).abs() < 1e-12);
        assert_eq!(out.x, vec![1.0, 1.0, 0.0]);
    }

    #[test]
    fn two_rows() {
        // max 3x + 2y, x + y ≤ 1.5, x - y ≤ 0.25
        let out = solve(&[3.0, 2.0], &[vec![1.0, 1.0], vec![1.0, -1.0]], &[1.0, 1.0], &[1.5, 0.25]);
        assert!((out.value - (3.0 * 0.875 + 2.0 * 0.625)).abs() < 1e-12, "{:?}", out);
    }

    #[test]
    fn negative_costs_stay_at_zero() {
        let out = solve(&[-1.0, -2.0], &[vec![1.0], vec![1.0]], &[1.0, 1.0], &[1.0]);
        assert_eq!(out.value, 0.0);
        assert_eq!(out.x, vec![0.0, 0.0]);
    }

    #[test]
    fn general_upper_bounds() {
        let out = solve(&[1.0], &[vec![1.0]], &[3.0], &[2.5]);
        assert!((out.value - 2.5).abs() < 1e-12);
    }

    #[test]
    fn rejects_negative_rhs() {
        let r = solve_bounded(&BoundedLp {
            cost: &[1.0],
            cols: &[vec![1.0]],
            upper: &[1.0],
            rhs: &[-1.0],
        });
        assert!(matches!(r, Err(Error::Precondition(_))));
    }
}
