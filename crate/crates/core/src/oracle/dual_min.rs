//! Minimization of the piecewise-linear dual objective
//! `f(w) = hᵀw + Σ_k ω_k (r_k - p_kᵀw)⁺` over `w ≥ 0`.
//!
//! A projected subgradient run with iterate averaging produces a warm start.
//! An active-set vertex descent then finishes the job exactly: the iterate is
//! moved to a vertex of the arrangement formed by the kinks
//! `{p_kᵀw = r_k}` and the bounds `{w_j = 0}` without increasing `f`, after
//! which edges are followed with exact line searches until the multipliers
//! of the active planes certify optimality (`θ_k ∈ [0, ω_k]` on kinks,
//! `μ_j ≥ 0` on bounds).

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::linalg::{dot, norm2, norm_inf, Square};

/// A group of identical arrivals.
#[derive(Clone, Debug, PartialEq)]
pub struct Atom {
    pub r: f64,
    /// `aᵀΦ`
    pub p: Vec<f64>,
    pub weight: f64,
    /// Positions of the grouped arrivals in the source sequence.
    pub members: Vec<usize>,
}

/// Group identical `(r, p)` pairs, keeping first-seen order.
pub(crate) fn aggregate(rewards: &[f64], cols: &[Vec<f64>], weights: &[f64]) -> Vec<Atom> {
    let mut index: HashMap<Vec<u64>, usize> = HashMap::new();
    let mut atoms: Vec<Atom> = Vec::new();
    for (t, ((r, p), wt)) in rewards.iter().zip(cols).zip(weights).enumerate() {
        let mut key = Vec::with_capacity(p.len() + 1);
        key.push(r.to_bits());
        key.extend(p.iter().map(|v| v.to_bits()));
        match index.get(&key) {
            Some(&k) => {
                atoms[k].weight += wt;
                atoms[k].members.push(t);
            }
            None => {
                index.insert(key, atoms.len());
                atoms.push(Atom {
                    r: *r,
                    p: p.clone(),
                    weight: *wt,
                    members: vec![t],
                });
            }
        }
    }
    atoms
}

#[derive(Clone, Debug, PartialEq)]
pub struct DualObjective {
    /// Linear coefficient, `dᵀΦ`.
    pub h: Vec<f64>,
    pub atoms: Vec<Atom>,
}

impl DualObjective {
    pub fn new(h: Vec<f64>, rewards: &[f64], cols: &[Vec<f64>], weights: &[f64]) -> Result<Self> {
        Error::check_len(rewards.len(), cols.len())?;
        Error::check_len(rewards.len(), weights.len())?;
        for c in cols {
            Error::check_len(h.len(), c.len())?;
        }
        if let Some(j) = h.iter().position(|v| !(*v > 0.0)) {
            return Err(Error::Precondition(format!("dual cost entry {j} = {} must be positive", h[j])));
        }
        if let Some(k) = weights.iter().position(|v| !(*v >= 0.0)) {
            return Err(Error::Precondition(format!("weight {k} = {} is negative", weights[k])));
        }
        Ok(Self {
            h,
            atoms: aggregate(rewards, cols, weights),
        })
    }

    pub fn q(&self) -> usize {
        self.h.len()
    }

    pub fn value(&self, w: &[f64]) -> f64 {
        let mut v = dot(&self.h, w);
        for a in &self.atoms {
            let s = a.r - dot(&a.p, w);
            if s > 0.0 {
                v += a.weight * s;
            }
        }
        v
    }

    /// One subgradient; an atom sitting exactly on its kink contributes 0.
    pub fn subgradient(&self, w: &[f64]) -> Vec<f64> {
        let mut g = self.h.clone();
        for a in &self.atoms {
            if a.r > dot(&a.p, w) {
                for (gj, pj) in g.iter_mut().zip(&a.p) {
                    *gj -= a.weight * pj;
                }
            }
        }
        g
    }

    /// `max_k r_k` over atoms with positive weight.
    pub fn r_bar(&self) -> f64 {
        self.atoms
            .iter()
            .filter(|a| a.weight > 0.0)
            .map(|a| a.r)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Side of the box known to contain every minimizer: `r̄⁺ / min_j h_j`.
    pub fn box_side(&self) -> f64 {
        let lo = self.h.iter().copied().fold(f64::INFINITY, f64::min);
        self.r_bar().max(0.0) / lo
    }

    fn is_finite(&self) -> bool {
        self.h.iter().all(|v| v.is_finite())
            && self
                .atoms
                .iter()
                .all(|a| a.r.is_finite() && a.weight.is_finite() && a.p.iter().all(|v| v.is_finite()))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DualStatus {
    /// Optimality certified by non-negative multipliers.
    Certified,
    /// Best point found without a certificate.
    Approximate,
    /// The objective is not finite; the value is best effort.
    NonFinite,
}

impl DualStatus {
    pub fn name(&self) -> &'static str {
        match self {
            DualStatus::Certified => "certified",
            DualStatus::Approximate => "approximate",
            DualStatus::NonFinite => "non-finite",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DualSolution {
    pub w: Vec<f64>,
    pub value: f64,
    pub status: DualStatus,
    pub subgradient_iters: usize,
    pub polish_steps: usize,
}

pub const DEFAULT_SUBGRADIENT_ITERS: usize = 200_000;

/// Minimize the dual objective: `iters` averaged projected-subgradient
/// steps on `[0, r̄/D_lo]^q`, then an exact vertex-descent polish whose
/// multiplier tolerance is `tol` (relative to atom weights and `‖h‖_∞`).
pub fn minimize(obj: &DualObjective, iters: usize, tol: f64) -> Result<DualSolution> {
    if iters == 0 {
        return Err(Error::Precondition("at least one subgradient iteration is required".into()));
    }
    let q = obj.q();
    let zero = vec![0.0; q];
    if !obj.is_finite() {
        return Ok(DualSolution {
            value: obj.value(&zero),
            w: zero,
            status: DualStatus::NonFinite,
            subgradient_iters: 0,
            polish_steps: 0,
        });
    }
    if obj.r_bar() <= 0.0 || obj.atoms.is_empty() {
        return Ok(DualSolution {
            value: obj.value(&zero),
            w: zero,
            status: DualStatus::Certified,
            subgradient_iters: 0,
            polish_steps: 0,
        });
    }
    let side = obj.box_side();
    let mut w = zero.clone();
    let mut avg = zero;
    let mut done = 0;
    for k in 1..=iters {
        let g = obj.subgradient(&w);
        let ng = norm2(&g);
        done = k;
        if ng == 0.0 {
            avg.clone_from(&w);
            break;
        }
        let step = side / (k as f64).sqrt() / ng;
        for (wj, gj) in w.iter_mut().zip(&g) {
            *wj = (*wj - step * gj).clamp(0.0, side);
        }
        let kf = k as f64;
        for (aj, wj) in avg.iter_mut().zip(&w) {
            *aj += (wj - *aj) / kf;
        }
    }
    let start = if obj.value(&avg) <= obj.value(&w) { avg } else { w };
    let start_value = obj.value(&start);

    let mut polisher = Polisher::new(obj, tol);
    match polisher.run(start.clone()) {
        Ok((wp, certified)) => {
            let vp = obj.value(&wp);
            if vp <= start_value + 1e-12 * (1.0 + start_value.abs()) {
                return Ok(DualSolution {
                    w: wp,
                    value: vp,
                    status: if certified { DualStatus::Certified } else { DualStatus::Approximate },
                    subgradient_iters: done,
                    polish_steps: polisher.steps,
                });
            }
            log::warn!("vertex polish ended above its start ({vp} > {start_value}); keeping the start");
        }
        Err(e) => log::warn!("vertex polish failed: {e}"),
    }
    Ok(DualSolution {
        w: start,
        value: start_value,
        status: DualStatus::Approximate,
        subgradient_iters: done,
        polish_steps: polisher.steps,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Plane {
    Kink(usize),
    Bound(usize),
}

struct Polisher<'a> {
    obj: &'a DualObjective,
    tol: f64,
    h_scale: f64,
    steps: usize,
}

impl<'a> Polisher<'a> {
    fn new(obj: &'a DualObjective, tol: f64) -> Self {
        Self {
            obj,
            tol,
            h_scale: norm_inf(&obj.h).max(f64::MIN_POSITIVE),
            steps: 0,
        }
    }

    fn normal(&self, plane: Plane) -> Vec<f64> {
        match plane {
            Plane::Kink(k) => self.obj.atoms[k].p.clone(),
            Plane::Bound(j) => {
                let mut e = vec![0.0; self.obj.q()];
                e[j] = 1.0;
                e
            }
        }
    }

    fn residual(&self, k: usize, w: &[f64]) -> f64 {
        let a = &self.obj.atoms[k];
        a.r - dot(&a.p, w)
    }

    fn eps(&self, k: usize, w: &[f64]) -> f64 {
        let a = &self.obj.atoms[k];
        let mag: f64 = a.p.iter().zip(w).map(|(p, x)| (p * x).abs()).sum();
        1e-11 * (1.0 + a.r.abs() + mag)
    }

    /// `h - Σ ω_k p_k` over atoms strictly on their positive side and not
    /// in `skip`.
    fn face_gradient(&self, w: &[f64], skip: &[Plane]) -> Vec<f64> {
        let mut g = self.obj.h.clone();
        for (k, a) in self.obj.atoms.iter().enumerate() {
            if skip.contains(&Plane::Kink(k)) {
                continue;
            }
            if self.residual(k, w) > self.eps(k, w) {
                for (gj, pj) in g.iter_mut().zip(&a.p) {
                    *gj -= a.weight * pj;
                }
            }
        }
        g
    }

    /// Project `v` onto the null space of the normals of `planes`.
    fn project_null(&self, planes: &[Plane], v: &[f64]) -> Option<Vec<f64>> {
        if planes.is_empty() {
            return Some(v.to_vec());
        }
        let normals: Vec<Vec<f64>> = planes.iter().map(|p| self.normal(*p)).collect();
        let s = normals.len();
        let mut gram = Square::zeros(s);
        for i in 0..s {
            for j in 0..s {
                gram.set(i, j, dot(&normals[i], &normals[j]));
            }
        }
        let rhs: Vec<f64> = normals.iter().map(|n| dot(n, v)).collect();
        let z = gram.solve(&rhs, 1e-13)?;
        let mut out = v.to_vec();
        for (n, zi) in normals.iter().zip(z) {
            for (o, nj) in out.iter_mut().zip(n) {
                *o -= zi * nj;
            }
        }
        Some(out)
    }

    /// First plane outside `active` crossed when moving from `w` along `d`.
    fn first_hit(&self, w: &[f64], d: &[f64], active: &[Plane]) -> Option<(f64, Plane)> {
        let nd = norm2(d);
        let mut best: Option<(f64, Plane)> = None;
        let mut consider = |theta: f64, plane: Plane| {
            if best.is_none_or(|(b, _)| theta < b) {
                best = Some((theta, plane));
            }
        };
        for (k, a) in self.obj.atoms.iter().enumerate() {
            if active.contains(&Plane::Kink(k)) {
                continue;
            }
            let pd = dot(&a.p, d);
            if pd.abs() <= 1e-12 * norm2(&a.p) * nd {
                continue;
            }
            let s = self.residual(k, w);
            if s.abs() <= self.eps(k, w) {
                consider(0.0, Plane::Kink(k));
            } else if (s > 0.0 && pd > 0.0) || (s < 0.0 && pd < 0.0) {
                consider(s / pd, Plane::Kink(k));
            }
        }
        for j in 0..w.len() {
            if active.contains(&Plane::Bound(j)) {
                continue;
            }
            if d[j] < -1e-12 * nd {
                consider(w[j].max(0.0) / -d[j], Plane::Bound(j));
            }
        }
        best
    }

    fn settle(&self, w: &mut [f64], active: &[Plane]) {
        for x in w.iter_mut() {
            if *x < 0.0 {
                *x = 0.0;
            }
        }
        for p in active {
            if let Plane::Bound(j) = p {
                w[*j] = 0.0;
            }
        }
    }

    /// Move to a vertex without increasing the objective.
    fn purify(&mut self, mut w: Vec<f64>) -> Result<(Vec<f64>, Vec<Plane>)> {
        let q = self.obj.q();
        let mut active: Vec<Plane> = Vec::with_capacity(q);
        while active.len() < q {
            let grad = self.face_gradient(&w, &active);
            let neg: Vec<f64> = grad.iter().map(|g| -g).collect();
            let mut d = self
                .project_null(&active, &neg)
                .ok_or_else(|| Error::numerical("active normals became dependent", format!("{active:?}")))?;
            let flat = norm2(&d) <= 1e-12 * (1.0 + norm2(&grad));
            if flat {
                let mut found = None;
                for j in 0..q {
                    let mut e = vec![0.0; q];
                    e[j] = 1.0;
                    if let Some(p) = self.project_null(&active, &e) {
                        if norm2(&p) > 1e-6 {
                            found = Some(p);
                            break;
                        }
                    }
                }
                d = found.ok_or_else(|| Error::numerical("no direction left in the face", format!("{active:?}")))?;
            }
            let hit = match self.first_hit(&w, &d, &active) {
                Some(h) => Some(h),
                None if flat => {
                    d.iter_mut().for_each(|x| *x = -*x);
                    self.first_hit(&w, &d, &active)
                }
                None => None,
            };
            let (theta, plane) = hit.ok_or_else(|| {
                Error::numerical("descent direction crosses no plane", format!("active = {}", active.len()))
            })?;
            for (wj, dj) in w.iter_mut().zip(&d) {
                *wj += theta * dj;
            }
            active.push(plane);
            self.settle(&mut w, &active);
        }
        Ok((w, active))
    }

    fn run(&mut self, start: Vec<f64>) -> Result<(Vec<f64>, bool)> {
        let q = self.obj.q();
        if q == 0 {
            return Ok((start, true));
        }
        let (mut w, mut active) = self.purify(start)?;
        let k_atoms = self.obj.atoms.len();
        let max_steps = 50 * (k_atoms + q) + 200;
        let mut degenerate_run = 0usize;
        let mut bland = false;
        loop {
            if self.steps >= max_steps {
                return Ok((w, false));
            }
            let rows: Vec<Vec<f64>> = active.iter().map(|p| self.normal(*p)).collect();
            let n = Square::from_rows(&rows);
            let g0 = self.face_gradient(&w, &active);
            let y = n
                .solve_transposed(&g0, 1e-14)
                .ok_or_else(|| Error::numerical("vertex normals are singular", format!("{active:?}")))?;

            let mut candidates: Vec<(usize, f64, f64)> = Vec::new();
            for (i, plane) in active.iter().enumerate() {
                match *plane {
                    Plane::Kink(k) => {
                        let wt = self.obj.atoms[k].weight.max(f64::MIN_POSITIVE);
                        if y[i] < -self.tol * wt {
                            candidates.push((i, 1.0, -y[i] / wt));
                        } else if y[i] > wt * (1.0 + self.tol) {
                            candidates.push((i, -1.0, (y[i] - wt) / wt));
                        }
                    }
                    Plane::Bound(_) => {
                        if y[i] < -self.tol * self.h_scale {
                            candidates.push((i, 1.0, -y[i] / self.h_scale));
                        }
                    }
                }
            }
            if candidates.is_empty() {
                return Ok((w, true));
            }
            if bland {
                candidates.sort_by_key(|c| c.0);
            } else {
                candidates.sort_by(|a, b| b.2.total_cmp(&a.2));
            }

            let mut moved = None;
            for &(i, sign, _) in &candidates {
                let mut e = vec![0.0; q];
                e[i] = sign;
                let Some(d) = n.solve(&e, 1e-14) else {
                    continue;
                };
                if let Some(step) = self.line_search(&w, &d, &active, i)? {
                    moved = Some((i, d, step));
                    break;
                }
            }
            let Some((i, d, (theta, entering))) = moved else {
                return Ok((w, false));
            };
            for (wj, dj) in w.iter_mut().zip(&d) {
                *wj += theta * dj;
            }
            active[i] = entering;
            self.settle(&mut w, &active);
            self.steps += 1;
            if theta <= 1e-15 * (1.0 + norm_inf(&w)) {
                degenerate_run += 1;
                if degenerate_run > 2 * (k_atoms + q) {
                    bland = true;
                }
            } else {
                degenerate_run = 0;
            }
        }
    }

    /// Exact line search along an edge leaving `active[leaving]`. Returns
    /// `None` when the edge is not a descent direction.
    fn line_search(
        &self,
        w: &[f64],
        d: &[f64],
        active: &[Plane],
        leaving: usize,
    ) -> Result<Option<(f64, Plane)>> {
        let keep = |p: &Plane| active.iter().enumerate().any(|(i, a)| i != leaving && a == p);
        let mut slope = dot(&self.obj.h, d);
        let mut breaks: Vec<(f64, f64, usize)> = Vec::new();
        for (k, a) in self.obj.atoms.iter().enumerate() {
            if keep(&Plane::Kink(k)) {
                continue;
            }
            let pd = dot(&a.p, d);
            let s = self.residual(k, w);
            let eps = self.eps(k, w);
            let on_kink = s.abs() <= eps || active[leaving] == Plane::Kink(k);
            let is_active = if on_kink { pd < 0.0 } else { s > 0.0 };
            if is_active {
                slope -= a.weight * pd;
            }
            if on_kink {
                continue;
            }
            if (s > 0.0 && pd > 0.0) || (s < 0.0 && pd < 0.0) {
                breaks.push((s / pd, a.weight * pd.abs(), k));
            }
        }
        let scale = self.h_scale * norm_inf(d).max(1.0);
        if slope >= -1e-13 * scale {
            return Ok(None);
        }
        let mut bound: Option<(f64, usize)> = None;
        for j in 0..w.len() {
            if keep(&Plane::Bound(j)) || active[leaving] == Plane::Bound(j) {
                continue;
            }
            if d[j] < 0.0 {
                let theta = w[j].max(0.0) / -d[j];
                if bound.is_none_or(|(b, _)| theta < b) {
                    bound = Some((theta, j));
                }
            }
        }
        breaks.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.2.cmp(&b.2)));
        for (theta, inc, k) in breaks {
            if let Some((tb, _)) = bound {
                if theta > tb {
                    break;
                }
            }
            slope += inc;
            if slope >= 0.0 {
                return Ok(Some((theta, Plane::Kink(k))));
            }
        }
        match bound {
            Some((tb, j)) => Ok(Some((tb, Plane::Bound(j)))),
            None => Err(Error::numerical("dual objective unbounded along an edge", format!("slope = {slope}"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn obj(h: Vec<f64>, rows: &[(f64, Vec<f64>)], weight: f64) -> DualObjective {
        let r: Vec<f64> = rows.iter().map(|x| x.0).collect();
        let p: Vec<Vec<f64>> = rows.iter().map(|x| x.1.clone()).collect();
        let w = vec![weight; rows.len()];
        DualObjective::new(h, &r, &p, &w).unwrap()
    }

    #[test]
    fn one_arrival_by_hand() {
        let o = obj(vec![0.5], &[(1.0, vec![1.0])], 1.0);
        let s = minimize(&o, 100, 1e-9).unwrap();
        assert_eq!(s.status, DualStatus::Certified);
        assert!((s.w[0] - 1.0).abs() < 1e-12);
        assert!((s.value - 0.5).abs() < 1e-12);
    }

    #[test]
    fn two_atom_breakpoint_scan() {
        // f(w) = 0.5 w + 0.5 (2 - w)⁺ + 0.5 (1 - 2w)⁺
        // slopes: [0, 0.5): 0.5 - 0.5 - 1 = -1; [0.5, 2): 0; beyond: 0.5
        // minimum value on [0.5, 2]: 0.25 + 0.75 = 1.0
        let o = DualObjective::new(
            vec![0.5],
            &[2.0, 1.0],
            &[vec![1.0], vec![2.0]],
            &[0.5, 0.5],
        )
        .unwrap();
        let s = minimize(&o, 50, 1e-9).unwrap();
        assert!((s.value - 1.0).abs() < 1e-12, "{s:?}");
        assert!(s.w[0] >= 0.5 - 1e-12 && s.w[0] <= 2.0 + 1e-12);
    }

    #[test]
    fn nonpositive_rewards_give_zero() {
        let o = obj(vec![1.0, 2.0], &[(-1.0, vec![1.0, 1.0]), (0.0, vec![0.5, 0.1])], 0.5);
        let s = minimize(&o, 10, 1e-9).unwrap();
        assert_eq!(s.w, vec![0.0, 0.0]);
        assert_eq!(s.value, 0.0);
    }

    #[test]
    fn value_at_zero() {
        let o = obj(vec![1.0], &[(2.0, vec![1.0]), (-1.0, vec![1.0]), (0.5, vec![3.0])], 0.25);
        assert_eq!(o.value(&[0.0]), 0.25 * 2.5);
    }

    #[test]
    fn duplicates_are_grouped() {
        let o = obj(vec![1.0], &[(1.0, vec![1.0]), (1.0, vec![1.0]), (2.0, vec![1.0])], 0.5);
        assert_eq!(o.atoms.len(), 2);
        assert_eq!(o.atoms[0].weight, 1.0);
        assert_eq!(o.atoms[0].members, vec![0, 1]);
    }

    fn random_obj(seed: u64, k: usize, q: usize) -> DualObjective {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let h: Vec<f64> = (0..q).map(|_| rng.random_range(0.5..2.0)).collect();
        let r: Vec<f64> = (0..k).map(|_| rng.random_range(-0.5..2.0)).collect();
        let p: Vec<Vec<f64>> = (0..k).map(|_| (0..q).map(|_| rng.random_range(0.0..3.0)).collect()).collect();
        let w = vec![1.0 / k as f64; k];
        DualObjective::new(h, &r, &p, &w).unwrap()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(40))]

        #[test]
        fn certified_minimum_beats_probes(seed in 0u64..10_000, k in 1usize..30, q in 1usize..5) {
            let o = random_obj(seed, k, q);
            let s = minimize(&o, 500, 1e-9).unwrap();
            prop_assert_eq!(s.status, DualStatus::Certified);
            prop_assert!(s.w.iter().all(|x| *x >= 0.0));
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
            let side = o.box_side();
            for _ in 0..200 {
                let probe: Vec<f64> = (0..q).map(|_| rng.random_range(0.0..=side)).collect();
                prop_assert!(s.value <= o.value(&probe) + 1e-10);
            }
            // small perturbations of the minimizer
            for j in 0..q {
                for delta in [-1e-4, 1e-4] {
                    let mut v = s.w.clone();
                    v[j] = (v[j] + delta).max(0.0);
                    prop_assert!(s.value <= o.value(&v) + 1e-12);
                }
            }
        }

        #[test]
        fn subgradient_matches_finite_differences(seed in 0u64..10_000, q in 1usize..5) {
            let o = random_obj(seed, 15, q);
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let w: Vec<f64> = (0..q).map(|_| rng.random_range(0.1..1.0)).collect();
            let near_kink = o.atoms.iter().any(|a| (a.r - dot(&a.p, &w)).abs() < 1e-4);
            prop_assume!(!near_kink);
            let g = o.subgradient(&w);
            let dir: Vec<f64> = (0..q).map(|_| rng.random_range(-1.0..1.0)).collect();
            let eps = 1e-7;
            let wp: Vec<f64> = w.iter().zip(&dir).map(|(a, b)| a + eps * b).collect();
            let fd = (o.value(&wp) - o.value(&w)) / eps;
            prop_assert!((fd - dot(&g, &dir)).abs() < 1e-6);
        }
    }
}
