//! Simple-GD: projected subgradient on the full `m`-dimensional dual.

use super::{threshold, StepRecord, StepSchedule, Trajectory};
use crate::error::{Error, Result};
use crate::instance::ArrivalStream;
use crate::linalg::dot;

/// `x_t = 𝕀(r_t > a_tᵀp_t)`, `p_{t+1} = max(p_t + γ(a_t x_t - d), 0)`.
///
/// Records carry no `q`-space state; `final_w` holds the final `p`.
pub fn run_simple_gd_baseline(stream: &ArrivalStream, d: &[f64], gamma: &StepSchedule) -> Result<Trajectory> {
    gamma.validate(stream.len())?;
    let m = d.len();
    let mut p = vec![0.0; m];
    let mut records = Vec::with_capacity(stream.len());
    for (t, arr) in stream.arrivals.iter().enumerate() {
        Error::check_len(m, arr.a.len())?;
        let x = threshold(arr.r, dot(&arr.a, &p));
        let g = gamma.at(t);
        for ((pi, ai), di) in p.iter_mut().zip(arr.a.iter()).zip(d) {
            *pi = (*pi + g * (ai * x - di)).max(0.0);
        }
        records.push(StepRecord {
            t,
            x_virtual: x,
            x_actual: x,
            w: Vec::new(),
            g: Vec::new(),
            budget: Vec::new(),
            reward: arr.r * x,
        });
    }
    Ok(Trajectory::from_records(records, p, None))
}
