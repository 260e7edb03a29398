//! Threshold policies with projected gradient and mirror-descent duals.

use super::{threshold, ProjectedStream, StepRecord, StepSchedule, Trajectory};
use crate::dual::{gd_step, mirror_step, subgrad_linear, Potential};
use crate::error::Result;

/// Threshold policy with projected subgradient dual updates, starting at zero.
pub fn run_alg1(ps: &ProjectedStream, gamma: &StepSchedule) -> Result<Trajectory> {
    gamma.validate(ps.horizon())?;
    let q = ps.q();
    let mut w = vec![0.0; q];
    let mut budget = ps.b_phi.clone();
    let mut records = Vec::with_capacity(ps.horizon());
    for t in 0..ps.horizon() {
        let r = ps.rewards[t];
        let a = &ps.a_phi[t];
        let x = threshold(r, ps.price(t, &w));
        let g = subgrad_linear(&ps.d_phi, a, x);
        let next = gd_step(&w, &g, gamma.at(t))?;
        records.push(StepRecord {
            t,
            x_virtual: x,
            x_actual: x,
            w: std::mem::replace(&mut w, next),
            g,
            budget: budget.clone(),
            reward: r * x,
        });
        consume(&mut budget, a, x);
    }
    Ok(Trajectory::from_records(records, w, None))
}

/// Threshold policy with mirror-descent dual updates under `psi`.
pub fn run_alg2(ps: &ProjectedStream, gamma: &StepSchedule, psi: &dyn Potential) -> Result<Trajectory> {
    gamma.validate(ps.horizon())?;
    let q = ps.q();
    let mut w = vec![psi.initial_weight(); q];
    let mut budget = ps.b_phi.clone();
    let mut records = Vec::with_capacity(ps.horizon());
    for t in 0..ps.horizon() {
        let r = ps.rewards[t];
        let a = &ps.a_phi[t];
        let x = threshold(r, ps.price(t, &w));
        let g = subgrad_linear(&ps.d_phi, a, x);
        let next = mirror_step(&w, &g, gamma.at(t), psi)?;
        records.push(StepRecord {
            t,
            x_virtual: x,
            x_actual: x,
            w: std::mem::replace(&mut w, next),
            g,
            budget: budget.clone(),
            reward: r * x,
        });
        consume(&mut budget, a, x);
    }
    Ok(Trajectory::from_records(records, w, None))
}

pub(super) fn consume(budget: &mut [f64], a_phi: &[f64], x: f64) {
    if x != 0.0 {
        for (b, a) in budget.iter_mut().zip(a_phi) {
            *b -= a * x;
        }
    }
}
