//! Accelerate-then-refine: epoch-restarted subgradient steps on a shrinking
//! ball, followed by small-step refinement from the accelerated point.

use super::linear::consume;
use super::{fits, threshold, ProjectedStream, StepRecord, Trajectory};
use crate::dual::{gd_step, project_ball_nonneg, subgrad_linear, DYKSTRA_TOL};
use crate::error::{Error, Result};
use crate::instance::DataBounds;

/// How the inner epoch length `J` is chosen.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum JRule {
    /// The theoretical lower bound, rounded up.
    Theory,
    /// The theoretical bound capped at `⌊T/(2L)⌋`.
    Capped,
    Fixed(usize),
}

/// User-facing inputs of the two-stage schedule.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TwoStageParams {
    pub delta: f64,
    pub lambda: f64,
    pub theta: f64,
    pub j_rule: JRule,
}

impl Default for TwoStageParams {
    fn default() -> Self {
        Self {
            delta: 0.05,
            lambda: 1.0,
            theta: 1.0,
            j_rule: JRule::Capped,
        }
    }
}

impl TwoStageParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::Config(format!("delta must lie in (0,1), got {}", self.delta)));
        }
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(Error::Config(format!("lambda must be positive, got {}", self.lambda)));
        }
        if !(self.theta > 0.0 && self.theta <= 1.0) {
            return Err(Error::Config(format!("theta must lie in (0,1], got {}", self.theta)));
        }
        if self.j_rule == JRule::Fixed(0) {
            return Err(Error::Config("J must be at least 1".into()));
        }
        Ok(())
    }
}

/// Fully derived two-stage schedule.
#[derive(Clone, Debug, PartialEq)]
pub struct TwoStageConfig {
    pub params: TwoStageParams,
    pub eps0: f64,
    pub epochs: usize,
    pub delta_hat: f64,
    /// Unrounded theoretical lower bound on `J`.
    pub j_theory: f64,
    pub j: usize,
    pub eta1: f64,
    pub v1: f64,
    pub t_fast: usize,
    pub gamma_fast: f64,
    pub gamma_refine: f64,
    /// Set when `J` falls below its theoretical lower bound.
    pub theory_violating: bool,
}

impl TwoStageConfig {
    pub fn derive(params: TwoStageParams, bounds: &DataBounds, horizon: usize) -> Result<Self> {
        Self::derive_with(
            params,
            bounds.r_bar,
            bounds.d_phi_lo,
            bounds.c_bar + bounds.d_phi_hi,
            horizon,
        )
    }

    /// `spread` is `C̄ + D̄` (or `Ḡ + D̄` for general models).
    pub fn derive_with(
        params: TwoStageParams,
        r_bar: f64,
        d_phi_lo: f64,
        spread: f64,
        horizon: usize,
    ) -> Result<Self> {
        params.validate()?;
        if horizon < 3 {
            return Err(Error::Config(format!("two-stage schedule needs T >= 3, got {horizon}")));
        }
        if !(r_bar > 0.0 && r_bar.is_finite()) {
            return Err(Error::Config(format!("two-stage schedule needs r_bar > 0, got {r_bar}")));
        }
        if !(d_phi_lo > 0.0) {
            return Err(Error::Config(format!("two-stage schedule needs min(dᵀΦ) > 0, got {d_phi_lo}")));
        }
        let t = horizon as f64;
        let eps0 = r_bar / d_phi_lo;
        let epochs = ((eps0 * t).ln().ceil()).max(1.0) as usize;
        let delta_hat = params.delta / epochs as f64;
        let s2 = spread * spread / (params.lambda * params.lambda);
        let j_theory = (9.0 * s2).max(1152.0 * s2 * (1.0 / delta_hat).ln());
        let theory = (j_theory.ceil() as usize).max(1);
        let j = match params.j_rule {
            JRule::Theory => theory,
            JRule::Capped => theory.min(horizon / (2 * epochs)).max(1),
            JRule::Fixed(j) => j,
        };
        let t_fast = epochs.saturating_mul(j);
        if t_fast > horizon {
            return Err(Error::Config(format!(
                "accelerate stage needs L·J = {epochs}·{j} = {t_fast} steps but T = {horizon}; \
                 use a larger T, a smaller J, or rescale lambda"
            )));
        }
        Ok(Self {
            params,
            eps0,
            epochs,
            delta_hat,
            j_theory,
            j,
            eta1: eps0 / (3.0 * r_bar * r_bar),
            v1: eps0 / params.lambda,
            t_fast,
            gamma_fast: 1.0 / t.ln(),
            gamma_refine: 1.0 / t,
            theory_violating: (j as f64) < j_theory,
        })
    }

    /// Step size and ball radius for 0-based epoch `l`.
    pub fn epoch_steps(&self, l: usize) -> (f64, f64) {
        let s = 0.5_f64.powi(l as i32);
        (self.eta1 * s, self.v1 * s)
    }
}

/// Result of the accelerate stage.
#[derive(Clone, Debug, PartialEq)]
pub struct AccelerateOutput {
    /// Steps `0..t_fast`; `final_w` is the decision dual after the stage.
    pub trajectory: Trajectory,
    /// `w̃_L`
    pub w_tilde: Vec<f64>,
    /// `w̃_1, ..., w̃_L`
    pub epoch_points: Vec<Vec<f64>>,
    /// Remaining budget after the stage.
    pub budget: Vec<f64>,
    pub t_fast: usize,
}

pub fn run_accelerate(ps: &ProjectedStream, cfg: &TwoStageConfig) -> Result<AccelerateOutput> {
    run_accelerate_with_budget(ps, cfg, ps.b_phi.clone())
}

/// Accelerate stage starting from an arbitrary budget, e.g. `+∞` to switch
/// the gate off.
pub fn run_accelerate_with_budget(
    ps: &ProjectedStream,
    cfg: &TwoStageConfig,
    mut budget: Vec<f64>,
) -> Result<AccelerateOutput> {
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
    let mut epoch_points = Vec::with_capacity(cfg.epochs);
    let mut records = Vec::with_capacity(cfg.t_fast);
    for l in 0..cfg.epochs {
        let (eta, radius) = cfg.epoch_steps(l);
        let mut wt = w_tilde_prev.clone();
        let mut sum = vec![0.0; q];
        for j in 0..cfg.j {
            let t = l * cfg.j + j;
            let r = ps.rewards[t];
            let a = &ps.a_phi[t];
            let xv = threshold(r, ps.price(t, &w));
            let x = if xv != 0.0 && fits(a, &budget) { xv } else { 0.0 };
            let g = subgrad_linear(&ps.d_phi, a, xv);
            let next = gd_step(&w, &g, cfg.gamma_fast)?;
            for (s, v) in sum.iter_mut().zip(&wt) {
                *s += v;
            }
            let stepped: Vec<f64> = wt.iter().zip(&g).map(|(v, gi)| v - eta * gi).collect();
            wt = project_ball_nonneg(&stepped, &w_tilde_prev, radius, DYKSTRA_TOL)?;
            records.push(StepRecord {
                t,
                x_virtual: xv,
                x_actual: x,
                w: std::mem::replace(&mut w, next),
                g,
                budget: budget.clone(),
                reward: r * x,
            });
            consume(&mut budget, a, x);
        }
        let jf = cfg.j as f64;
        w_tilde_prev = sum.into_iter().map(|s| s / jf).collect();
        epoch_points.push(w_tilde_prev.clone());
    }
    Ok(AccelerateOutput {
        trajectory: Trajectory::from_records(records, w, Some(cfg.t_fast)),
        w_tilde: w_tilde_prev,
        epoch_points,
        budget,
        t_fast: cfg.t_fast,
    })
}

/// Refine stage over steps `start..T` from `w_hat` with constant step `gamma`.
pub fn run_refine(
    ps: &ProjectedStream,
    start: usize,
    w_hat: &[f64],
    gamma: f64,
    b_init: &[f64],
) -> Result<Trajectory> {
    Error::check_len(ps.q(), w_hat.len())?;
    Error::check_len(ps.q(), b_init.len())?;
    if let Some(j) = b_init.iter().position(|b| !(*b >= 0.0)) {
        return Err(Error::Config(format!("initial budget entry {j} is negative ({})", b_init[j])));
    }
    if let Some(j) = w_hat.iter().position(|v| !(*v >= 0.0 && v.is_finite())) {
        return Err(Error::Precondition(format!("w_hat[{j}] = {} is not non-negative", w_hat[j])));
    }
    if !(gamma > 0.0) {
        return Err(Error::Config(format!("refine step size must be positive, got {gamma}")));
    }
    let mut w = w_hat.to_vec();
    let mut budget = b_init.to_vec();
    let mut records = Vec::with_capacity(ps.horizon().saturating_sub(start));
    for t in start..ps.horizon() {
        let r = ps.rewards[t];
        let a = &ps.a_phi[t];
        let xv = threshold(r, ps.price(t, &w));
        let x = if xv != 0.0 && fits(a, &budget) { xv } else { 0.0 };
        let g = subgrad_linear(&ps.d_phi, a, xv);
        let next = gd_step(&w, &g, gamma)?;
        records.push(StepRecord {
            t,
            x_virtual: xv,
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

/// Accelerate on the first `t_fast` steps, then refine on the rest from
/// `w̃_L` with the budget left over from the first stage.
pub fn run_two_stage(ps: &ProjectedStream, cfg: &TwoStageConfig) -> Result<Trajectory> {
    let acc = run_accelerate(ps, cfg)?;
    if acc.t_fast == ps.horizon() {
        return Ok(acc.trajectory);
    }
    let refine = run_refine(ps, acc.t_fast, &acc.w_tilde, cfg.gamma_refine, &acc.budget)?;
    let mut records = acc.trajectory.records;
    records.extend(refine.records);
    Ok(Trajectory::from_records(records, refine.final_w, Some(acc.t_fast)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::compute_bounds;
    use crate::policies::fixtures;

    fn manual(epochs: usize, j: usize, eta1: f64, v1: f64, gamma_fast: f64, horizon: usize) -> TwoStageConfig {
        TwoStageConfig {
            params: TwoStageParams::default(),
            eps0: 1.0,
            epochs,
            delta_hat: 0.05,
            j_theory: 1.0,
            j,
            eta1,
            v1,
            t_fast: epochs * j,
            gamma_fast,
            gamma_refine: 1.0 / horizon as f64,
            theory_violating: false,
        }
    }

    #[test]
    fn epoch_halving() {
        let cfg = manual(3, 2, 0.8, 4.0, 0.5, 10);
        assert_eq!(cfg.epoch_steps(1), (0.4, 2.0));
        assert_eq!(cfg.epoch_steps(2), (0.2, 1.0));
    }

    #[test]
    fn derived_schedule() {
        let bounds = DataBounds {
            r_bar: 2.0,
            a_bar: 1.0,
            d_lo: 1.0,
            d_hi: 1.0,
            c_bar: 1.0,
            d_phi_lo: 0.5,
            d_phi_hi: 1.0,
        };
        let p = TwoStageParams {
            j_rule: JRule::Fixed(10),
            ..TwoStageParams::default()
        };
        let cfg = TwoStageConfig::derive(p, &bounds, 1000).unwrap();
        // eps0 = 4, L = ceil(ln 4000) = 9
        assert_eq!(cfg.eps0, 4.0);
        assert_eq!(cfg.epochs, 9);
        assert_eq!(cfg.t_fast, 90);
        assert_eq!(cfg.eta1, 4.0 / 12.0);
        assert_eq!(cfg.v1, 4.0);
        let want = 1152.0 * 4.0 * (9.0 / 0.05_f64).ln();
        assert!((cfg.j_theory - want).abs() < 1e-9 * want);
        assert!(cfg.theory_violating);

        let capped = TwoStageConfig::derive(TwoStageParams::default(), &bounds, 1000).unwrap();
        assert_eq!(capped.j, 1000 / 18);

        let theory = TwoStageParams {
            j_rule: JRule::Theory,
            ..TwoStageParams::default()
        };
        assert!(matches!(
            TwoStageConfig::derive(theory, &bounds, 1000),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn one_epoch_hand_simulation() {
        // q = 1, dΦ = 1, two arrivals with aΦ = 3, rewards 1 and 1.
        let ps = ProjectedStream::from_parts(vec![1.0, 1.0], vec![vec![3.0], vec![3.0]], vec![1.0]).unwrap();
        let cfg = manual(1, 2, 0.25, 10.0, 0.5, 2);
        let out = run_accelerate(&ps, &cfg).unwrap();
        // step 1: w = 0, x̃ = 1, g = 1 - 3 = -2
        //   w₂ = max(0 + 0.5·2, 0) = 1, w̃₂ = Π(0 + 0.25·2) = 0.5
        // step 2: price 3·1 = 3 ≥ 1, x̃ = 0, g = 1
        // w̃₁ = (w̃₁¹ + w̃₂¹)/2 = (0 + 0.5)/2
        assert_eq!(out.trajectory.records[0].x_virtual, 1.0);
        assert_eq!(out.trajectory.records[1].w, vec![1.0]);
        assert_eq!(out.trajectory.records[1].x_virtual, 0.0);
        assert_eq!(out.w_tilde, vec![0.25]);
        assert_eq!(out.trajectory.final_w, vec![0.5]);
        // budget bΦ = 2: first arrival consumes 3 > 2 and is gated off.
        assert_eq!(out.trajectory.records[0].x_actual, 0.0);
    }

    #[test]
    fn ball_limits_accelerated_iterate() {
        let ps = ProjectedStream::from_parts(vec![1.0; 4], vec![vec![5.0]; 4], vec![1.0]).unwrap();
        let cfg = manual(2, 2, 10.0, 0.1, 0.01, 4);
        let out = run_accelerate(&ps, &cfg).unwrap();
        assert!(out.epoch_points[0][0] <= 0.1 + 1e-12);
        assert!((out.epoch_points[1][0] - out.epoch_points[0][0]).abs() <= 0.05 + 1e-12);
    }

    #[test]
    fn unbounded_budget_never_gates() {
        let f = fixtures::tight(20, 6, 300, 21);
        let cfg = manual(3, 50, 0.1, 5.0, 1.0 / 300f64.ln(), 300);
        let out = run_accelerate_with_budget(&f.ps, &cfg, vec![f64::INFINITY; 6]).unwrap();
        assert!(out.trajectory.records.iter().all(|r| r.x_actual == r.x_virtual));
    }

    #[test]
    fn refine_hand_step() {
        let ps = ProjectedStream::from_parts(vec![0.5], vec![vec![1.0]], vec![2.0]).unwrap();
        let out = run_refine(&ps, 0, &[1.0], 1.0, &[2.0]).unwrap();
        assert_eq!(out.records[0].x_virtual, 0.0);
        assert_eq!(out.final_w, vec![(1.0_f64 - 2.0).max(0.0)]);
        let ps = ProjectedStream::from_parts(vec![0.5; 4], vec![vec![1.0]; 4], vec![0.25]).unwrap();
        let out = run_refine(&ps, 0, &[1.0], 0.25, &[1.0]).unwrap();
        assert_eq!(out.records[1].w, vec![1.0 - 0.25 * 0.25]);
    }

    #[test]
    fn refine_rejects_negative_budget() {
        let ps = ProjectedStream::from_parts(vec![0.5], vec![vec![1.0]], vec![2.0]).unwrap();
        assert!(matches!(run_refine(&ps, 0, &[1.0], 1.0, &[-1.0]), Err(Error::Config(_))));
    }

    #[test]
    fn huge_prices_reject_everything() {
        let f = fixtures::uniform(20, 6, 200, 22);
        let bounds = compute_bounds(&f.stream, &f.instance, &f.basis).unwrap();
        let min_load = f.ps.a_phi.iter().map(|a| a.iter().sum::<f64>()).fold(f64::INFINITY, f64::min);
        let big = (10.0 * bounds.r_bar / bounds.d_phi_lo * 6f64.sqrt()).max(2.0 * bounds.r_bar / min_load)
            + bounds.d_phi_hi;
        let w_hat = vec![big; 6];
        let tr = run_refine(&f.ps, 0, &w_hat, 1.0 / 200.0, &f.ps.b_phi).unwrap();
        assert!(tr.records.iter().all(|r| r.x_virtual == 0.0));
        for pair in tr.records.windows(2) {
            assert!(pair[1].w.iter().zip(&pair[0].w).all(|(b, a)| b <= a));
        }
    }

    #[test]
    fn gated_runs_stay_feasible() {
        let f = fixtures::tight(20, 6, 600, 23);
        let bounds = compute_bounds(&f.stream, &f.instance, &f.basis).unwrap();
        let p = TwoStageParams {
            j_rule: JRule::Fixed(20),
            ..TwoStageParams::default()
        };
        let cfg = TwoStageConfig::derive(p, &bounds, 600).unwrap();
        let tr = run_two_stage(&f.ps, &cfg).unwrap();
        assert_eq!(tr.len(), 600);
        assert_eq!(tr.t_fast, Some(cfg.t_fast));
        assert!(tr.records.iter().all(|r| r.budget.iter().all(|b| *b >= 0.0)));
        assert!(tr.records.iter().all(|r| r.x_actual == 0.0 || r.x_actual == r.x_virtual));
    }

    #[test]
    fn full_accelerate_equals_two_stage() {
        let f = fixtures::tight(20, 6, 100, 24);
        let cfg = manual(4, 25, 0.1, 5.0, 1.0 / 100f64.ln(), 100);
        let acc = run_accelerate(&f.ps, &cfg).unwrap();
        assert_eq!(run_two_stage(&f.ps, &cfg).unwrap(), acc.trajectory);
    }

    #[test]
    fn t_fast_beyond_horizon() {
        let f = fixtures::tight(20, 6, 100, 25);
        let cfg = manual(4, 30, 0.1, 5.0, 0.2, 100);
        assert!(matches!(run_accelerate(&f.ps, &cfg), Err(Error::Config(_))));
    }
}
