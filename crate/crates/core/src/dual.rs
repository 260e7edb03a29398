//! Dual-weight updates on the `q`-dimensional non-negative orthant.
//!
//! Holds the linear subgradient, projected gradient steps, separable mirror
//! steps with their Bregman divergences, and the Euclidean projection onto
//! the orthant intersected with a ball.

use crate::error::{Error, Result};
use crate::linalg::norm2;

/// Subgradient of the per-arrival dual term: `dᵀΦ - x·aᵀΦ`.
pub fn subgrad_linear(d_phi: &[f64], a_phi: &[f64], x: f64) -> Vec<f64> {
    d_phi.iter().zip(a_phi).map(|(d, a)| d - x * a).collect()
}

/// Projected gradient step `max(w - γ g, 0)`.
pub fn gd_step(w: &[f64], g: &[f64], gamma: f64) -> Result<Vec<f64>> {
    Error::check_len(w.len(), g.len())?;
    if !(gamma > 0.0) {
        return Err(Error::Precondition(format!("step size must be positive, got {gamma}")));
    }
    Ok(w.iter().zip(g).map(|(wi, gi)| (wi - gamma * gi).max(0.0)).collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PotentialDomain {
    /// `u >= 0`
    Orthant,
    /// `u > 0`
    StrictlyPositive,
}

/// A coordinate-separable mirror map `ψ(u) = Σ_j ψ_j(u_j)` with every
/// coordinate sharing the same `ψ_j`.
pub trait Potential: Send + Sync {
    fn name(&self) -> &'static str;

    fn value(&self, u: f64) -> f64;

    fn deriv(&self, u: f64) -> f64;

    fn domain(&self) -> PotentialDomain;

    /// Strong-convexity modulus with respect to the Euclidean norm on the
    /// region the potential is used over.
    fn strong_convexity(&self) -> f64;

    /// `(ψ')⁻¹(v)`, restricted to the domain. The default is a safeguarded
    /// bisection; for orthant potentials any `v <= ψ'(0)` maps to 0.
    fn inv_deriv(&self, v: f64) -> f64 {
        bisect_inverse(|u| self.deriv(u), v, self.domain())
    }

    /// One coordinate of the mirror step: the minimizer of
    /// `step·u + D_ψ(u‖w)` over the domain.
    fn mirror_coord(&self, w: f64, step: f64) -> f64 {
        self.inv_deriv(self.deriv(w) - step).max(0.0)
    }

    /// Starting point for algorithms that nominally start at zero.
    fn initial_weight(&self) -> f64 {
        match self.domain() {
            PotentialDomain::Orthant => 0.0,
            PotentialDomain::StrictlyPositive => ENTROPY_INIT,
        }
    }

    fn in_domain(&self, u: f64) -> bool {
        match self.domain() {
            PotentialDomain::Orthant => u >= 0.0 && u.is_finite(),
            PotentialDomain::StrictlyPositive => u > 0.0 && u.is_finite(),
        }
    }
}

/// Initial weight used by potentials whose domain excludes zero.
pub const ENTROPY_INIT: f64 = 1e-6;

const BISECTION_TOL: f64 = 1e-12;

fn bisect_inverse(deriv: impl Fn(f64) -> f64, v: f64, domain: PotentialDomain) -> f64 {
    let mut lo = match domain {
        PotentialDomain::Orthant => {
            if v <= deriv(0.0) {
                return 0.0;
            }
            0.0
        }
        PotentialDomain::StrictlyPositive => f64::MIN_POSITIVE,
    };
    let mut hi = 1.0_f64;
    while deriv(hi) < v {
        lo = hi;
        hi *= 2.0;
        if !hi.is_finite() {
            return f64::INFINITY;
        }
    }
    if domain == PotentialDomain::StrictlyPositive {
        while lo > f64::MIN_POSITIVE && deriv(lo) > v {
            lo *= 0.5;
        }
    }
    while hi - lo > BISECTION_TOL * hi.max(1.0) {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if deriv(mid) < v {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// `ψ(u) = u²/2`. Mirror descent with this map is projected gradient descent.
#[derive(Clone, Copy, Debug, Default)]
pub struct Quadratic;

impl Potential for Quadratic {
    fn name(&self) -> &'static str {
        "quadratic"
    }
    fn value(&self, u: f64) -> f64 {
        0.5 * u * u
    }
    fn deriv(&self, u: f64) -> f64 {
        u
    }
    fn domain(&self) -> PotentialDomain {
        PotentialDomain::Orthant
    }
    fn strong_convexity(&self) -> f64 {
        1.0
    }
    fn inv_deriv(&self, v: f64) -> f64 {
        v.max(0.0)
    }
    fn mirror_coord(&self, w: f64, step: f64) -> f64 {
        (w - step).max(0.0)
    }
}

/// Negative entropy `ψ(u) = u ln u`, giving multiplicative updates.
/// Strongly convex with modulus `1/upper` on `(0, upper]`.
#[derive(Clone, Copy, Debug)]
pub struct Entropy {
    pub upper: f64,
}

impl Default for Entropy {
    fn default() -> Self {
        Self { upper: 1.0 }
    }
}

impl Potential for Entropy {
    fn name(&self) -> &'static str {
        "entropy"
    }
    fn value(&self, u: f64) -> f64 {
        if u == 0.0 {
            0.0
        } else {
            u * u.ln()
        }
    }
    fn deriv(&self, u: f64) -> f64 {
        u.ln() + 1.0
    }
    fn domain(&self) -> PotentialDomain {
        PotentialDomain::StrictlyPositive
    }
    fn strong_convexity(&self) -> f64 {
        1.0 / self.upper
    }
    fn inv_deriv(&self, v: f64) -> f64 {
        (v - 1.0).exp()
    }
    fn mirror_coord(&self, w: f64, step: f64) -> f64 {
        (w * (-step).exp()).max(f64::MIN_POSITIVE)
    }
}

/// `ψ(u) = u²/2 + κu⁴/4`; its gradient has no convenient inverse, so the
/// mirror step goes through the bisection fallback.
#[derive(Clone, Copy, Debug)]
pub struct QuarticRegularized {
    pub kappa: f64,
}

impl Potential for QuarticRegularized {
    fn name(&self) -> &'static str {
        "quartic"
    }
    fn value(&self, u: f64) -> f64 {
        0.5 * u * u + 0.25 * self.kappa * u.powi(4)
    }
    fn deriv(&self, u: f64) -> f64 {
        u + self.kappa * u.powi(3)
    }
    fn domain(&self) -> PotentialDomain {
        PotentialDomain::Orthant
    }
    fn strong_convexity(&self) -> f64 {
        1.0
    }
}

/// Named potential, for configuration.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PotentialKind {
    Quadratic,
    Entropy,
}

impl PotentialKind {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "quadratic" => Ok(Self::Quadratic),
            "entropy" => Ok(Self::Entropy),
            other => Err(Error::Config(format!(
                "unknown potential '{other}' (expected quadratic or entropy)"
            ))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Quadratic => "quadratic",
            Self::Entropy => "entropy",
        }
    }

    pub fn build(&self) -> Box<dyn Potential> {
        match self {
            Self::Quadratic => Box::new(Quadratic),
            Self::Entropy => Box::new(Entropy::default()),
        }
    }
}

fn check_domain(psi: &dyn Potential, u: &[f64], what: &str) -> Result<()> {
    match u.iter().position(|x| !psi.in_domain(*x)) {
        Some(j) => Err(Error::Domain(format!(
            "{what}[{j}] = {} outside the domain of the {} potential",
            u[j],
            psi.name()
        ))),
        None => Ok(()),
    }
}

/// `argmin_{w ≥ 0} ⟨γ g, w⟩ + D_ψ(w‖w_t)`, solved coordinatewise.
pub fn mirror_step(w: &[f64], g: &[f64], gamma: f64, psi: &dyn Potential) -> Result<Vec<f64>> {
    Error::check_len(w.len(), g.len())?;
    if !(gamma > 0.0) {
        return Err(Error::Precondition(format!("step size must be positive, got {gamma}")));
    }
    check_domain(psi, w, "w")?;
    Ok(w.iter()
        .zip(g)
        .map(|(wi, gi)| psi.mirror_coord(*wi, gamma * gi))
        .collect())
}

/// `D_ψ(u‖v) = ψ(u) - ψ(v) - ⟨∇ψ(v), u - v⟩`.
pub fn bregman(psi: &dyn Potential, u: &[f64], v: &[f64]) -> Result<f64> {
    Error::check_len(u.len(), v.len())?;
    // u may sit on the boundary (0 ln 0 = 0); v must be interior.
    if let Some(j) = u.iter().position(|x| !(*x >= 0.0 && x.is_finite())) {
        return Err(Error::Domain(format!("u[{j}] = {} is not in the orthant", u[j])));
    }
    check_domain(psi, v, "v")?;
    Ok(u.iter()
        .zip(v)
        .map(|(a, b)| psi.value(*a) - psi.value(*b) - psi.deriv(*b) * (a - b))
        .sum::<f64>()
        .max(0.0))
}

pub const DYKSTRA_MAX_ITERS: usize = 10_000;
pub const DYKSTRA_TOL: f64 = 1e-10;

fn clamp_orthant(v: &[f64]) -> Vec<f64> {
    v.iter().map(|x| x.max(0.0)).collect()
}

fn project_ball(v: &[f64], center: &[f64], radius: f64) -> Vec<f64> {
    let diff: Vec<f64> = v.iter().zip(center).map(|(a, c)| a - c).collect();
    let dist = norm2(&diff);
    if dist <= radius {
        v.to_vec()
    } else {
        let s = radius / dist;
        center.iter().zip(&diff).map(|(c, d)| c + s * d).collect()
    }
}

fn in_ball(v: &[f64], center: &[f64], radius: f64) -> bool {
    let d: f64 = v.iter().zip(center).map(|(a, c)| (a - c) * (a - c)).sum();
    d.sqrt() <= radius
}

/// Euclidean projection of `w` onto `{v ≥ 0} ∩ {‖v - center‖₂ ≤ radius}`
/// via Dykstra's alternating projections.
pub fn project_ball_nonneg(w: &[f64], center: &[f64], radius: f64, tol: f64) -> Result<Vec<f64>> {
    Error::check_len(w.len(), center.len())?;
    if !(radius > 0.0) {
        return Err(Error::Precondition(format!("ball radius must be positive, got {radius}")));
    }
    if center.iter().any(|c| !(*c >= 0.0)) {
        return Err(Error::Precondition("ball center must be non-negative".into()));
    }
    let clamped = clamp_orthant(w);
    if in_ball(&clamped, center, radius) {
        return Ok(clamped);
    }
    let radial = project_ball(w, center, radius);
    if radial.iter().all(|x| *x >= 0.0) {
        return Ok(radial);
    }

    let n = w.len();
    let mut x = w.to_vec();
    let mut p = vec![0.0; n];
    let mut q = vec![0.0; n];
    let mut last_step = f64::INFINITY;
    for _ in 0..DYKSTRA_MAX_ITERS {
        let xp: Vec<f64> = x.iter().zip(&p).map(|(a, b)| a + b).collect();
        let y = clamp_orthant(&xp);
        for i in 0..n {
            p[i] = xp[i] - y[i];
        }
        let yq: Vec<f64> = y.iter().zip(&q).map(|(a, b)| a + b).collect();
        let x_new = project_ball(&yq, center, radius);
        for i in 0..n {
            q[i] = yq[i] - x_new[i];
        }
        let step: f64 = x_new.iter().zip(&x).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let gap: f64 = x_new.iter().zip(&y).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        x = x_new;
        last_step = step.max(gap);
        if step <= 0.1 * tol && gap <= 0.1 * tol {
            // Clamping a point of the ball toward a non-negative center stays
            // in the ball, so the result is exactly feasible.
            return Ok(clamp_orthant(&x));
        }
    }
    Err(Error::numerical(
        "Dykstra projection did not converge",
        format!("iterations = {DYKSTRA_MAX_ITERS}, last change = {last_step:e}, tol = {tol:e}"),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn subgradient_examples() {
        assert_eq!(subgrad_linear(&[2.0, 3.0], &[1.0, 1.0], 0.0), vec![2.0, 3.0]);
        assert_eq!(subgrad_linear(&[2.0], &[1.0], 1.0), vec![1.0]);
    }

    #[test]
    fn gd_step_examples() {
        assert_eq!(gd_step(&[1.0, 2.0], &[0.0, 0.0], 0.3).unwrap(), vec![1.0, 2.0]);
        assert_eq!(gd_step(&[0.0], &[2.0], 1.0).unwrap(), vec![0.0]);
        assert_eq!(gd_step(&[1.0], &[-3.0], 0.5).unwrap(), vec![2.5]);
        assert!(gd_step(&[1.0], &[1.0], 0.0).is_err());
    }

    #[test]
    fn entropy_closed_form_step() {
        let w = mirror_step(&[1.0], &[std::f64::consts::LN_2], 1.0, &Entropy::default()).unwrap();
        assert!((w[0] - 0.5).abs() < 1e-15);
        assert!(matches!(
            mirror_step(&[0.0], &[1.0], 1.0, &Entropy::default()),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn zero_gradient_is_fixed_point() {
        let w = [0.3, 1.7, 0.0];
        assert_eq!(mirror_step(&w, &[0.0; 3], 0.7, &Quadratic).unwrap(), w.to_vec());
        let w = [0.3, 1.7, 2.0];
        assert_eq!(mirror_step(&w, &[0.0; 3], 0.7, &Entropy::default()).unwrap(), w.to_vec());
        let quartic = QuarticRegularized { kappa: 0.5 };
        let got = mirror_step(&w, &[0.0; 3], 0.7, &quartic).unwrap();
        for (a, b) in got.iter().zip(w) {
            assert!((a - b).abs() < 1e-11);
        }
    }

    #[test]
    fn bregman_examples() {
        assert_eq!(bregman(&Quadratic, &[2.0], &[0.0]).unwrap(), 2.0);
        assert_eq!(bregman(&Quadratic, &[1.5, 0.2], &[1.5, 0.2]).unwrap(), 0.0);
        assert!(bregman(&Entropy::default(), &[1.0], &[0.0]).is_err());
        assert!(bregman(&Entropy::default(), &[0.0], &[0.5]).unwrap() >= 0.0);
    }

    #[test]
    fn inverse_derivative_round_trips() {
        let psis: Vec<Box<dyn Potential>> = vec![
            Box::new(Quadratic),
            Box::new(Entropy::default()),
            Box::new(QuarticRegularized { kappa: 2.0 }),
        ];
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for psi in &psis {
            for _ in 0..200 {
                let u: f64 = rng.random_range(1e-3..50.0);
                let back = psi.inv_deriv(psi.deriv(u));
                assert!((back - u).abs() <= 1e-10 * u.max(1.0), "{}: {u} -> {back}", psi.name());
            }
        }
    }

    #[test]
    fn quadratic_mirror_matches_gd_on_random_inputs() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..1000 {
            let q = rng.random_range(1..12);
            let w: Vec<f64> = (0..q).map(|_| rng.random_range(0.0..5.0)).collect();
            let g: Vec<f64> = (0..q).map(|_| rng.random_range(-5.0..5.0)).collect();
            let gamma = rng.random_range(1e-3..2.0);
            let a = mirror_step(&w, &g, gamma, &Quadratic).unwrap();
            let b = gd_step(&w, &g, gamma).unwrap();
            for (x, y) in a.iter().zip(&b) {
                assert!((x - y).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn ball_projection_examples() {
        let p = project_ball_nonneg(&[0.2, 0.3], &[0.0, 0.0], 1.0, DYKSTRA_TOL).unwrap();
        assert_eq!(p, vec![0.2, 0.3]);
        let p = project_ball_nonneg(&[2.0, 0.0], &[0.0, 0.0], 1.0, DYKSTRA_TOL).unwrap();
        assert!((p[0] - 1.0).abs() < 1e-12 && p[1].abs() < 1e-12);
        let p = project_ball_nonneg(&[-1.0, -1.0], &[1.0, 1.0], 5.0, DYKSTRA_TOL).unwrap();
        assert_eq!(p, vec![0.0, 0.0]);
        assert!(project_ball_nonneg(&[1.0], &[0.0], 0.0, DYKSTRA_TOL).is_err());
    }

    #[test]
    fn ball_projection_needs_dykstra() {
        // Neither single projection is feasible here.
        let w = [3.0, -2.0];
        let c = [0.5, 0.2];
        let p = project_ball_nonneg(&w, &c, 1.0, DYKSTRA_TOL).unwrap();
        assert!(p.iter().all(|x| *x >= 0.0));
        assert!(in_ball(&p, &c, 1.0 + 1e-12));
        // Optimum lies on the boundary of the ball with p_2 = 0.
        let expected = [0.5 + (1.0f64 - 0.04).sqrt(), 0.0];
        assert!((p[0] - expected[0]).abs() < 1e-8, "{p:?}");
        assert!(p[1].abs() < 1e-8);
    }

    fn feasible_probe(rng: &mut ChaCha8Rng, c: &[f64], r: f64) -> Vec<f64> {
        loop {
            let z: Vec<f64> = c.iter().map(|ci| ci + rng.random_range(-r..r)).collect();
            if z.iter().all(|x| *x >= 0.0) && in_ball(&z, c, r) {
                return z;
            }
        }
    }

    #[test]
    fn ball_projection_variational() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let q = rng.random_range(1..6);
            let c: Vec<f64> = (0..q).map(|_| rng.random_range(0.0..2.0)).collect();
            let w: Vec<f64> = (0..q).map(|_| rng.random_range(-4.0..6.0)).collect();
            let r = rng.random_range(0.1..3.0);
            let p = project_ball_nonneg(&w, &c, r, DYKSTRA_TOL).unwrap();
            assert!(p.iter().all(|x| *x >= 0.0));
            assert!(in_ball(&p, &c, r * (1.0 + 1e-12)));
            let dp = norm2(&w.iter().zip(&p).map(|(a, b)| a - b).collect::<Vec<_>>());
            for _ in 0..100 {
                let z = feasible_probe(&mut rng, &c, r);
                let dz = norm2(&w.iter().zip(&z).map(|(a, b)| a - b).collect::<Vec<_>>());
                assert!(dp <= dz + 1e-8, "{dp} > {dz}");
            }
        }
    }

    proptest! {
        #[test]
        fn bregman_nonneg_and_strongly_convex(
            u in proptest::collection::vec(1e-3f64..1.0, 1..8),
            seed in any::<u64>(),
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let v: Vec<f64> = u.iter().map(|_| rng.random_range(1e-3..1.0)).collect();
            let sq: f64 = u.iter().zip(&v).map(|(a, b)| (a - b).powi(2)).sum();
            for psi in [&Quadratic as &dyn Potential, &Entropy::default(), &QuarticRegularized { kappa: 1.0 }] {
                let d = bregman(psi, &u, &v).unwrap();
                prop_assert!(d >= 0.0);
                prop_assert!(d + 1e-12 >= 0.5 * psi.strong_convexity() * sq);
            }
        }

        #[test]
        fn steps_stay_in_orthant(
            w in proptest::collection::vec(1e-6f64..10.0, 1..8),
            gs in proptest::collection::vec(-10.0f64..10.0, 8),
            gamma in 1e-4f64..3.0,
        ) {
            let g = &gs[..w.len()];
            prop_assert!(gd_step(&w, g, gamma).unwrap().iter().all(|x| *x >= 0.0));
            let quartic = QuarticRegularized { kappa: 0.3 };
            let next = mirror_step(&w, g, gamma, &quartic).unwrap();
            prop_assert!(next.iter().all(|x| *x >= 0.0));
            prop_assert!(mirror_step(&w, g, gamma, &Entropy::default()).unwrap().iter().all(|x| *x > 0.0));
        }
    }
}
