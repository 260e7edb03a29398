//! Policies for concave rewards and convex resource usage.
//!
//! An arrival carries `θ_t = (r_t, a_t)`. The decision set is `[0, 1]`, the
//! reward is `f(x; r)` and the consumption is `g(x; θ) = a·c(x)` with `c`
//! convex, non-decreasing and `c(0) = 0`. The projected consumption is then
//! `c(x)·aᵀΦ`, and the per-step price is `p = aᵀΦw`.

use super::{fits, ProjectedStream, StepRecord, StepSchedule, Trajectory, TwoStageConfig};
use crate::dual::{gd_step, mirror_step, project_ball_nonneg, subgrad_linear, Potential, DYKSTRA_TOL};
use crate::error::{Error, Result};

pub trait GeneralModel: Send + Sync {
    fn name(&self) -> &'static str;

    /// `f(x; r)`, concave in `x`.
    fn reward(&self, x: f64, r: f64) -> f64;

    /// `c(x)`, convex and non-decreasing with `c(0) = 0`.
    fn usage(&self, x: f64) -> f64;

    /// `argmax_{x ∈ [0,1]} f(x; r) - c(x)·price`.
    fn argmax(&self, r: f64, price: f64) -> f64 {
        argmax_numeric(|x| self.reward(x, r) - self.usage(x) * price)
    }

    /// `max_{x ∈ [0,1]} |f(x; r)|`
    fn reward_bound(&self, r: f64) -> f64;

    fn usage_max(&self) -> f64 {
        self.usage(1.0)
    }
}

const GOLDEN_ITERS: usize = 200;

/// Maximize a function on `[0, 1]` by golden-section search, then compare
/// against both endpoints. Ties go to the smaller `x`.
pub fn argmax_numeric(obj: impl Fn(f64) -> f64) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    let mut x1 = hi - inv_phi * (hi - lo);
    let mut x2 = lo + inv_phi * (hi - lo);
    let (mut f1, mut f2) = (obj(x1), obj(x2));
    for _ in 0..GOLDEN_ITERS {
        if hi - lo <= f64::EPSILON {
            break;
        }
        if f1 >= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = obj(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = obj(x2);
        }
    }
    let mid = 0.5 * (lo + hi);
    let mut best = (0.0, obj(0.0));
    for x in [mid, 1.0] {
        let v = obj(x);
        if v > best.1 {
            best = (x, v);
        }
    }
    best.0
}

/// `f = r·x`, `c(x) = x`: the linear program.
#[derive(Clone, Copy, Debug, Default)]
pub struct LinearModel;

impl GeneralModel for LinearModel {
    fn name(&self) -> &'static str {
        "linear"
    }
    fn reward(&self, x: f64, r: f64) -> f64 {
        r * x
    }
    fn usage(&self, x: f64) -> f64 {
        x
    }
    fn argmax(&self, r: f64, price: f64) -> f64 {
        super::threshold(r, price)
    }
    fn reward_bound(&self, r: f64) -> f64 {
        r.abs()
    }
}

/// `f = r·ln(1 + x)`, `c(x) = x`.
#[derive(Clone, Copy, Debug, Default)]
pub struct LogUtilityModel;

impl GeneralModel for LogUtilityModel {
    fn name(&self) -> &'static str {
        "log"
    }
    fn reward(&self, x: f64, r: f64) -> f64 {
        r * x.ln_1p()
    }
    fn usage(&self, x: f64) -> f64 {
        x
    }
    fn argmax(&self, r: f64, price: f64) -> f64 {
        if r <= 0.0 {
            0.0
        } else if price <= 0.0 {
            1.0
        } else {
            (r / price - 1.0).clamp(0.0, 1.0)
        }
    }
    fn reward_bound(&self, r: f64) -> f64 {
        r.abs() * std::f64::consts::LN_2
    }
}

fn decide(model: &dyn GeneralModel, r: f64, price: f64) -> Result<f64> {
    let x = model.argmax(r, price);
    if (0.0..=1.0).contains(&x) {
        Ok(x)
    } else {
        Err(Error::Model(format!(
            "{} argmax returned {x} for r = {r}, price = {price}",
            model.name()
        )))
    }
}

fn scaled(a_phi: &[f64], c: f64) -> Vec<f64> {
    a_phi.iter().map(|a| a * c).collect()
}

fn spend(budget: &mut [f64], used: &[f64]) {
    for (b, u) in budget.iter_mut().zip(used) {
        *b -= u;
    }
}

/// Mirror-descent policy with a general reward and usage model.
pub fn run_general_md(
    ps: &ProjectedStream,
    gamma: &StepSchedule,
    psi: &dyn Potential,
    model: &dyn GeneralModel,
) -> Result<Trajectory> {
    gamma.validate(ps.horizon())?;
    let mut w = vec![psi.initial_weight(); ps.q()];
    let mut budget = ps.b_phi.clone();
    let mut records = Vec::with_capacity(ps.horizon());
    for t in 0..ps.horizon() {
        let r = ps.rewards[t];
        let a = &ps.a_phi[t];
        let x = decide(model, r, ps.price(t, &w))?;
        let c = model.usage(x);
        let y = subgrad_linear(&ps.d_phi, a, c);
        let next = mirror_step(&w, &y, gamma.at(t), psi)?;
        records.push(StepRecord {
            t,
            x_virtual: x,
            x_actual: x,
            w: std::mem::replace(&mut w, next),
            g: y,
            budget: budget.clone(),
            reward: model.reward(x, r),
        });
        if c != 0.0 {
            spend(&mut budget, &scaled(a, c));
        }
    }
    Ok(Trajectory::from_records(records, w, None))
}

struct Gated {
    record: StepRecord,
    next_w: Vec<f64>,
}

fn gated_step(
    ps: &ProjectedStream,
    model: &dyn GeneralModel,
    t: usize,
    w: &[f64],
    gamma: f64,
    budget: &mut Vec<f64>,
) -> Result<Gated> {
    let r = ps.rewards[t];
    let a = &ps.a_phi[t];
    let xv = decide(model, r, ps.price(t, w))?;
    let cv = model.usage(xv);
    let mut x = 0.0;
    let before = budget.clone();
    if xv != 0.0 {
        let used = scaled(a, cv);
        if fits(&used, budget) {
            x = xv;
            spend(budget, &used);
        }
    }
    let g = subgrad_linear(&ps.d_phi, a, cv);
    let next_w = gd_step(w, &g, gamma)?;
    Ok(Gated {
        record: StepRecord {
            t,
            x_virtual: xv,
            x_actual: x,
            w: w.to_vec(),
            g,
            budget: before,
            reward: model.reward(x, r),
        },
        next_w,
    })
}

/// Accelerate-then-refine with a general reward and usage model.
pub fn run_general_two_stage(
    ps: &ProjectedStream,
    cfg: &TwoStageConfig,
    model: &dyn GeneralModel,
) -> Result<Trajectory> {
    run_general_two_stage_with_budget(ps, cfg, model, ps.b_phi.clone())
}

pub(crate) fn run_general_two_stage_with_budget(
    ps: &ProjectedStream,
    cfg: &TwoStageConfig,
    model: &dyn GeneralModel,
    mut budget: Vec<f64>,
) -> Result<Trajectory> {
    Error::check_len(ps.q(), budget.len())?;
    if cfg.t_fast > ps.horizon() {
        return Err(Error::Config(format!(
            "accelerate stage needs {} steps but the stream has {}",
            cfg.t_fast,
            ps.horizon()
        )));
    }
    let q = ps.q();
    let mut w = vec![0.0; q];
    let mut w_tilde_prev = vec![0.0; q];
    let mut records = Vec::with_capacity(ps.horizon());
    for l in 0..cfg.epochs {
        let (eta, radius) = cfg.epoch_steps(l);
        let mut wt = w_tilde_prev.clone();
        let mut sum = vec![0.0; q];
        for j in 0..cfg.j {
            let step = gated_step(ps, model, l * cfg.j + j, &w, cfg.gamma_fast, &mut budget)?;
            for (s, v) in sum.iter_mut().zip(&wt) {
                *s += v;
            }
            let stepped: Vec<f64> = wt.iter().zip(&step.record.g).map(|(v, gi)| v - eta * gi).collect();
            wt = project_ball_nonneg(&stepped, &w_tilde_prev, radius, DYKSTRA_TOL)?;
            w = step.next_w;
            records.push(step.record);
        }
        let jf = cfg.j as f64;
        w_tilde_prev = sum.into_iter().map(|s| s / jf).collect();
    }
    if cfg.t_fast < ps.horizon() {
        w = w_tilde_prev;
        for t in cfg.t_fast..ps.horizon() {
            let step = gated_step(ps, model, t, &w, cfg.gamma_refine, &mut budget)?;
            w = step.next_w;
            records.push(step.record);
        }
    }
    Ok(Trajectory::from_records(records, w, Some(cfg.t_fast)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dual::{Entropy, Quadratic};
    use crate::instance::compute_bounds;
    use crate::linalg::norm2;
    use crate::policies::{
        fixtures, general_iterate_bound, run_alg2, run_two_stage, JRule, TwoStageParams,
    };
    use proptest::prelude::*;

    #[test]
    fn log_closed_form_matches_numeric() {
        let m = LogUtilityModel;
        for &(r, p) in &[(1.0, 0.3), (2.0, 1.5), (0.5, 1.0), (3.0, 1.0), (1.0, 0.75), (0.2, 0.0)] {
            let closed = m.argmax(r, p);
            let numeric = argmax_numeric(|x| m.reward(x, r) - x * p);
            let obj = |x: f64| m.reward(x, r) - x * p;
            assert!((obj(closed) - obj(numeric)).abs() <= 1e-9, "r={r} p={p}");
            assert!(obj(closed) >= obj(numeric) - 1e-12);
        }
        assert_eq!(m.argmax(1.0, 0.8), 0.25);
    }

    proptest! {
        #[test]
        fn numeric_argmax_on_concave_quadratics(c in 0.0f64..1.0, k in 0.1f64..10.0) {
            let x = argmax_numeric(|x| -k * (x - c).powi(2));
            prop_assert!((x - c).abs() < 1e-6);
        }

        #[test]
        fn log_closed_form_is_optimal(r in 0.0f64..5.0, p in 0.0f64..5.0) {
            let m = LogUtilityModel;
            let x = m.argmax(r, p);
            let obj = |x: f64| m.reward(x, r) - x * p;
            for k in 0..=100 {
                let y = k as f64 / 100.0;
                prop_assert!(obj(x) >= obj(y) - 1e-12);
            }
        }
    }

    #[test]
    fn zero_prices_maximize_reward() {
        let f = fixtures::uniform(10, 4, 20, 31);
        let tr = run_general_md(&f.ps, &StepSchedule::inv_sqrt(20), &Quadratic, &LogUtilityModel).unwrap();
        let r0 = f.ps.rewards[0];
        assert_eq!(tr.records[0].x_actual, if r0 > 0.0 { 1.0 } else { 0.0 });
    }

    #[test]
    fn linear_model_matches_mirror_descent() {
        let f = fixtures::tight(20, 6, 400, 32);
        let g = StepSchedule::inv_sqrt(400);
        for psi in [&Quadratic as &dyn Potential, &Entropy::default()] {
            let a = run_alg2(&f.ps, &g, psi).unwrap();
            let b = run_general_md(&f.ps, &g, psi, &LinearModel).unwrap();
            assert_eq!(a.decisions(), b.decisions());
            assert!(a.max_dual_deviation(&b) <= 1e-12);
        }
    }

    fn cfg_for(f: &fixtures::Fixture, j: usize) -> TwoStageConfig {
        let bounds = compute_bounds(&f.stream, &f.instance, &f.basis).unwrap();
        let p = TwoStageParams {
            j_rule: JRule::Fixed(j),
            ..TwoStageParams::default()
        };
        TwoStageConfig::derive(p, &bounds, f.ps.horizon()).unwrap()
    }

    #[test]
    fn linear_model_matches_two_stage() {
        let f = fixtures::tight(20, 6, 600, 33);
        let cfg = cfg_for(&f, 15);
        let a = run_two_stage(&f.ps, &cfg).unwrap();
        let b = run_general_two_stage(&f.ps, &cfg, &LinearModel).unwrap();
        assert_eq!(a.decisions(), b.decisions());
        assert_eq!(a.virtual_decisions(), b.virtual_decisions());
        assert!(a.max_dual_deviation(&b) <= 1e-12);
    }

    #[test]
    fn unbounded_budget_never_gates() {
        let f = fixtures::tight(20, 6, 300, 34);
        let cfg = cfg_for(&f, 10);
        let tr = run_general_two_stage_with_budget(&f.ps, &cfg, &LogUtilityModel, vec![f64::INFINITY; 6])
            .unwrap();
        assert!(tr.records.iter().all(|r| r.x_actual == r.x_virtual));
    }

    #[test]
    fn dual_iterates_bounded() {
        let f = fixtures::tight(20, 6, 800, 35);
        let bounds = compute_bounds(&f.stream, &f.instance, &f.basis).unwrap();
        let cfg = cfg_for(&f, 20);
        let model = LogUtilityModel;
        let tr = run_general_two_stage(&f.ps, &cfg, &model).unwrap();
        let g_bar = bounds.c_bar * model.usage_max();
        let f_bar = f.ps.rewards.iter().map(|r| model.reward_bound(*r)).fold(0.0, f64::max);
        let cap = general_iterate_bound(6, g_bar, f_bar, &bounds);
        assert!(tr.records.iter().all(|r| norm2(&r.w) <= cap));
        assert!(tr.records.iter().all(|r| r.budget.iter().all(|b| *b >= 0.0)));
    }

    struct Broken;
    impl GeneralModel for Broken {
        fn name(&self) -> &'static str {
            "broken"
        }
        fn reward(&self, x: f64, _r: f64) -> f64 {
            x
        }
        fn usage(&self, x: f64) -> f64 {
            x
        }
        fn argmax(&self, _r: f64, _p: f64) -> f64 {
            f64::NAN
        }
        fn reward_bound(&self, _r: f64) -> f64 {
            1.0
        }
    }

    #[test]
    fn oracle_failure_is_model_error() {
        let f = fixtures::uniform(10, 4, 5, 36);
        let out = run_general_md(&f.ps, &StepSchedule::inv_sqrt(5), &Quadratic, &Broken);
        assert!(matches!(out, Err(Error::Model(_))));
    }
}
