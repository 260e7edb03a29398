//! Online policies and the trajectories they produce.
//!
//! All policies observe arrivals in order and decide before seeing the
//! future. The linear-threshold policies and their two-stage variant work on
//! a [`ProjectedStream`], which caches `a_tᵀΦ`, `dᵀΦ` and `bᵀΦ` for a
//! stream, basis and budget. The Simple-GD baseline works directly on the
//! `m`-dimensional data.

mod baseline;
mod general;
mod linear;
mod two_stage;

use std::collections::HashMap;
use std::io::Write;

pub use baseline::run_simple_gd_baseline;
pub use general::{
    run_general_md, run_general_two_stage, argmax_numeric, GeneralModel, LinearModel, LogUtilityModel,
};
pub use linear::{run_alg1, run_alg2};
pub use two_stage::{
    run_accelerate, run_accelerate_with_budget, run_refine, run_two_stage, AccelerateOutput,
    JRule, TwoStageConfig, TwoStageParams,
};

use crate::basis::Basis;
use crate::csvfmt::fmt_f64;
use crate::error::{Error, Result};
use crate::instance::{ArrivalStream, DataBounds};
use crate::linalg::{dot, norm_inf};

/// A stream together with its projections onto the basis.
#[derive(Clone, Debug)]
pub struct ProjectedStream {
    pub rewards: Vec<f64>,
    /// `a_tᵀΦ` per arrival.
    pub a_phi: Vec<Vec<f64>>,
    /// `dᵀΦ`
    pub d_phi: Vec<f64>,
    /// `bᵀΦ` with `b = T·d`
    pub b_phi: Vec<f64>,
}

impl ProjectedStream {
    pub fn new(stream: &ArrivalStream, basis: &Basis, d: &[f64]) -> Result<Self> {
        Error::check_len(basis.m(), d.len())?;
        let mut a_phi: Vec<Vec<f64>> = Vec::with_capacity(stream.len());
        // arrivals drawn from a finite support share their cost storage
        let mut seen: HashMap<*const f64, usize> = HashMap::new();
        for (t, arr) in stream.arrivals.iter().enumerate() {
            let key = arr.a.as_ptr();
            match seen.get(&key) {
                Some(&i) if stream.arrivals[i].a.len() == arr.a.len() => {
                    let row = a_phi[i].clone();
                    a_phi.push(row);
                }
                _ => {
                    a_phi.push(basis.project_columns(&arr.a)?);
                    seen.insert(key, t);
                }
            }
        }
        let t = stream.len() as f64;
        let b: Vec<f64> = d.iter().map(|v| t * v).collect();
        Ok(Self {
            rewards: stream.rewards(),
            a_phi,
            d_phi: basis.project_unchecked(d),
            b_phi: basis.project_unchecked(&b),
        })
    }

    /// Build directly from already projected data.
    pub fn from_parts(rewards: Vec<f64>, a_phi: Vec<Vec<f64>>, d_phi: Vec<f64>) -> Result<Self> {
        Error::check_len(rewards.len(), a_phi.len())?;
        let q = d_phi.len();
        for row in &a_phi {
            Error::check_len(q, row.len())?;
        }
        let t = rewards.len() as f64;
        let b_phi = d_phi.iter().map(|v| t * v).collect();
        Ok(Self {
            rewards,
            a_phi,
            d_phi,
            b_phi,
        })
    }

    pub fn horizon(&self) -> usize {
        self.rewards.len()
    }

    pub fn q(&self) -> usize {
        self.d_phi.len()
    }

    /// `a_tᵀΦ w`
    pub fn price(&self, t: usize, w: &[f64]) -> f64 {
        dot(&self.a_phi[t], w)
    }
}

/// Step-size schedule `γ_t`.
#[derive(Clone, Debug, PartialEq)]
pub enum StepSchedule {
    Constant(f64),
    PerStep(Vec<f64>),
}

impl StepSchedule {
    /// `γ_t = 1/√T`
    pub fn inv_sqrt(horizon: usize) -> Self {
        StepSchedule::Constant(1.0 / (horizon as f64).sqrt())
    }

    /// `γ_t = 1/ln T`
    pub fn inv_log(horizon: usize) -> Self {
        StepSchedule::Constant(1.0 / (horizon as f64).ln())
    }

    /// Step for 0-based step index `t`.
    pub fn at(&self, t: usize) -> f64 {
        match self {
            StepSchedule::Constant(g) => *g,
            StepSchedule::PerStep(v) => v[t.min(v.len() - 1)],
        }
    }

    pub(crate) fn validate(&self, horizon: usize) -> Result<()> {
        let ok = match self {
            StepSchedule::Constant(g) => *g > 0.0 && g.is_finite(),
            StepSchedule::PerStep(v) => {
                v.len() >= horizon && v.iter().all(|g| *g > 0.0 && g.is_finite())
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid step schedule {self:?} for T = {horizon}")))
        }
    }
}

/// One online step.
#[derive(Clone, Debug, PartialEq)]
pub struct StepRecord {
    /// 0-based step index.
    pub t: usize,
    pub x_virtual: f64,
    pub x_actual: f64,
    /// Dual weights used for the decision at this step.
    pub w: Vec<f64>,
    /// Subgradient applied after the decision.
    pub g: Vec<f64>,
    /// Remaining budget `B_t` before the decision.
    pub budget: Vec<f64>,
    /// Reward collected at this step.
    pub reward: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub records: Vec<StepRecord>,
    pub total_reward: f64,
    pub final_w: Vec<f64>,
    pub t_fast: Option<usize>,
}

impl Trajectory {
    pub(crate) fn from_records(records: Vec<StepRecord>, final_w: Vec<f64>, t_fast: Option<usize>) -> Self {
        let total_reward = records.iter().map(|r| r.reward).sum();
        Self {
            records,
            total_reward,
            final_w,
            t_fast,
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn decisions(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.x_actual).collect()
    }

    pub fn virtual_decisions(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.x_virtual).collect()
    }

    /// `max_t ‖w_t‖_∞` over the recorded iterates and the final one.
    pub fn w_inf_max(&self) -> f64 {
        self.records
            .iter()
            .map(|r| norm_inf(&r.w))
            .fold(norm_inf(&self.final_w), f64::max)
    }

    /// Largest deviation between the dual iterates of two trajectories.
    pub fn max_dual_deviation(&self, other: &Trajectory) -> f64 {
        let mut dev = 0.0_f64;
        for (a, b) in self.records.iter().zip(&other.records) {
            for (x, y) in a.w.iter().zip(&b.w) {
                dev = dev.max((x - y).abs());
            }
        }
        for (x, y) in self.final_w.iter().zip(&other.final_w) {
            dev = dev.max((x - y).abs());
        }
        dev
    }

    /// Dump as `t,x_virtual,x_actual,reward,w_1..w_q,B_1..B_q`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let qw = self.records.first().map_or(0, |r| r.w.len());
        let qb = self.records.first().map_or(0, |r| r.budget.len());
        let mut header = String::from("t,x_virtual,x_actual,reward");
        for j in 1..=qw {
            header.push_str(&format!(",w_{j}"));
        }
        for j in 1..=qb {
            header.push_str(&format!(",B_{j}"));
        }
        writeln!(out, "{header}")?;
        for r in &self.records {
            let mut line = format!(
                "{},{},{},{}",
                r.t + 1,
                fmt_f64(r.x_virtual),
                fmt_f64(r.x_actual),
                fmt_f64(r.reward)
            );
            for v in r.w.iter().chain(&r.budget) {
                line.push(',');
                line.push_str(&fmt_f64(*v));
            }
            writeln!(out, "{line}")?;
        }
        Ok(())
    }
}

/// Threshold decision: accept only when the reward strictly beats the price.
#[inline]
pub(crate) fn threshold(r: f64, price: f64) -> f64 {
    if r > price {
        1.0
    } else {
        0.0
    }
}

/// Budget gate: `x̃` passes only if its consumption fits the remaining
/// budget in every coordinate.
#[inline]
pub(crate) fn fits(consumption: &[f64], budget: &[f64]) -> bool {
    consumption.iter().zip(budget).all(|(c, b)| c <= b)
}

/// Iterate bound for projected subgradient runs with `γ ≤ 1`:
/// `(q(C̄+D̄)² + 2r̄)/(2D_lo) + q(C̄+D̄)`.
pub fn gd_iterate_bound(q: usize, bounds: &DataBounds) -> f64 {
    let s = bounds.c_bar + bounds.d_phi_hi;
    let q = q as f64;
    (q * s * s + 2.0 * bounds.r_bar) / (2.0 * bounds.d_phi_lo) + q * s
}

/// Iterate bound for the general two-stage algorithm:
/// `(q(Ḡ+D̄)² + 4F̄)/(2D_lo) + q(Ḡ+D̄)`.
pub fn general_iterate_bound(q: usize, g_bar: f64, f_bar: f64, bounds: &DataBounds) -> f64 {
    let s = g_bar + bounds.d_phi_hi;
    let q = q as f64;
    (q * s * s + 4.0 * f_bar) / (2.0 * bounds.d_phi_lo) + q * s
}

/// `‖w*‖₂ ≤ √q·r̄/D_lo` for any minimizer of the sample dual.
pub fn optimal_dual_bound(q: usize, bounds: &DataBounds) -> f64 {
    (q as f64).sqrt() * bounds.r_bar / bounds.d_phi_lo
}


#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedules() {
        assert_eq!(StepSchedule::inv_sqrt(100).at(5), 0.1);
        assert!((StepSchedule::inv_log(100).at(0) - 1.0 / 100f64.ln()).abs() < 1e-16);
        let s = StepSchedule::PerStep(vec![0.5, 0.25]);
        assert_eq!(s.at(1), 0.25);
        assert!(s.validate(3).is_err());
        assert!(StepSchedule::Constant(0.0).validate(1).is_err());
    }

    #[test]
    fn trajectory_csv_header() {
        let tr = Trajectory::from_records(
            vec![StepRecord {
                t: 0,
                x_virtual: 1.0,
                x_actual: 1.0,
                w: vec![0.0, 0.5],
                g: vec![1.0, 1.0],
                budget: vec![3.0, 4.0],
                reward: 0.25,
            }],
            vec![0.0, 0.5],
            None,
        );
        let mut buf = Vec::new();
        tr.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "t,x_virtual,x_actual,reward,w_1,w_2,B_1,B_2");
        assert!(lines.next().unwrap().starts_with("1,1.0000000000000000e0,"));
        assert_eq!(tr.total_reward, 0.25);
        assert_eq!(tr.w_inf_max(), 0.5);
    }
}
