//! Dual-resolution Gaussian RBF basis over embedded constraint indices.
//!
//! Constraint row `i` (1-based) is embedded at `u_i = (i - 0.5) / m` on the
//! unit interval. The `q` columns split into a coarse layer of
//! `K_c = ceil(alpha * q)` evenly spaced centers and a fine layer of
//! `K_f = q - K_c` centers offset by half a spacing and wrapped into `[0, 1)`.
//! Every entry of the resulting matrix is strictly positive, so any
//! non-negative weight vector `w` yields a non-negative dual `Φw`.

use crate::error::{Error, Result};

/// Shape parameters of the RBF basis.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BasisSpec {
    pub m: usize,
    pub q: usize,
    /// Share of columns in the coarse layer.
    pub alpha: f64,
    pub rho_coarse: f64,
    pub rho_fine: f64,
}

impl BasisSpec {
    /// The experimental defaults: `alpha = 0.6`, `rho_coarse = 0.6`, `rho_fine = 0.3`.
    pub fn with_defaults(m: usize, q: usize) -> Self {
        Self {
            m,
            q,
            alpha: 0.6,
            rho_coarse: 0.6,
            rho_fine: 0.3,
        }
    }

    pub fn coarse_count(&self) -> usize {
        (self.alpha * self.q as f64).ceil() as usize
    }

    pub fn fine_count(&self) -> usize {
        self.q.saturating_sub(self.coarse_count())
    }

    /// Center spacing `Δ = 1 / (K_c - 1)`.
    pub fn spacing(&self) -> f64 {
        1.0 / (self.coarse_count() as f64 - 1.0)
    }

    pub fn validate(&self) -> Result<()> {
        if self.m < 1 {
            return Err(Error::Config("basis needs m >= 1".into()));
        }
        if self.q < 1 {
            return Err(Error::Config("basis needs q >= 1".into()));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Config(format!("alpha must lie in (0,1), got {}", self.alpha)));
        }
        for (name, rho) in [("rho_coarse", self.rho_coarse), ("rho_fine", self.rho_fine)] {
            if !(rho > 0.0 && rho < 1.0) {
                return Err(Error::Config(format!("{name} must lie in (0,1), got {rho}")));
            }
        }
        let kc = self.coarse_count();
        if kc < 2 {
            return Err(Error::Config(format!(
                "coarse layer needs at least 2 centers, ceil(alpha*q) = {kc}"
            )));
        }
        if kc > self.q {
            return Err(Error::Config(format!("coarse count {kc} exceeds q = {}", self.q)));
        }
        Ok(())
    }
}

/// Bandwidth for overlap degree `rho` at center spacing `delta`.
pub fn bandwidth(delta: f64, rho: f64) -> f64 {
    delta / (2.0 * (1.0 / rho).ln())
}

pub fn gaussian(u: f64, center: f64, sigma: f64) -> f64 {
    let z = u - center;
    (-(z * z) / (2.0 * sigma * sigma)).exp()
}

/// Non-negative `m × q` feature matrix with its centers and bandwidths.
#[derive(Clone, Debug, PartialEq)]
pub struct Basis {
    m: usize,
    q: usize,
    /// Row-major `m × q`.
    phi: Vec<f64>,
    centers: Vec<f64>,
    bandwidths: Vec<f64>,
    embed: Vec<f64>,
    coarse: usize,
}

impl Basis {
    /// Build the dual-resolution RBF basis described by `spec`.
    pub fn rbf(spec: &BasisSpec) -> Result<Self> {
        spec.validate()?;
        let kc = spec.coarse_count();
        let kf = spec.fine_count();
        let delta = spec.spacing();
        let sigma_c = bandwidth(delta, spec.rho_coarse);
        let sigma_f = bandwidth(delta, spec.rho_fine);

        let mut centers = Vec::with_capacity(spec.q);
        let mut bandwidths = Vec::with_capacity(spec.q);
        for k in 0..kc {
            centers.push(k as f64 / (kc as f64 - 1.0));
            bandwidths.push(sigma_c);
        }
        for l in 0..kf {
            let raw = delta / 2.0 + l as f64 * delta;
            centers.push(raw - raw.floor());
            bandwidths.push(sigma_f);
        }

        let embed: Vec<f64> = (1..=spec.m)
            .map(|i| (i as f64 - 0.5) / spec.m as f64)
            .collect();
        Ok(Self::from_parts(embed, centers, bandwidths, kc))
    }

    fn from_parts(embed: Vec<f64>, centers: Vec<f64>, bandwidths: Vec<f64>, coarse: usize) -> Self {
        let m = embed.len();
        let q = centers.len();
        let mut phi = Vec::with_capacity(m * q);
        for &u in &embed {
            for (c, s) in centers.iter().zip(&bandwidths) {
                phi.push(gaussian(u, *c, *s));
            }
        }
        Self {
            m,
            q,
            phi,
            centers,
            bandwidths,
            embed,
            coarse,
        }
    }

    /// Wrap an explicit non-negative matrix given as rows. Centers and
    /// bandwidths are left empty; used for hand-built test fixtures and
    /// tiny brute-force instances.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let m = rows.len();
        if m == 0 {
            return Err(Error::Config("basis needs m >= 1".into()));
        }
        let q = rows[0].len();
        if q == 0 {
            return Err(Error::Config("basis needs q >= 1".into()));
        }
        let mut phi = Vec::with_capacity(m * q);
        for r in rows {
            Error::check_len(q, r.len())?;
            if r.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
                return Err(Error::Config("basis entries must be finite and non-negative".into()));
            }
            phi.extend_from_slice(r);
        }
        Ok(Self {
            m,
            q,
            phi,
            centers: Vec::new(),
            bandwidths: Vec::new(),
            embed: Vec::new(),
            coarse: q,
        })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn coarse_count(&self) -> usize {
        self.coarse
    }

    pub fn centers(&self) -> &[f64] {
        &self.centers
    }

    pub fn bandwidths(&self) -> &[f64] {
        &self.bandwidths
    }

    pub fn embedding(&self) -> &[f64] {
        &self.embed
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.phi[i * self.q + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.phi[i * self.q..(i + 1) * self.q]
    }

    pub fn column(&self, j: usize) -> impl Iterator<Item = f64> + '_ {
        (0..self.m).map(move |i| self.get(i, j))
    }

    pub fn column_norms(&self) -> Vec<f64> {
        (0..self.q)
            .map(|j| self.column(j).map(|v| v * v).sum::<f64>().sqrt())
            .collect()
    }

    pub fn min_entry(&self) -> f64 {
        self.phi.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// `aᵀΦ`, a length-`q` vector.
    pub fn project_columns(&self, a: &[f64]) -> Result<Vec<f64>> {
        Error::check_len(self.m, a.len())?;
        Ok(self.project_unchecked(a))
    }

    pub(crate) fn project_unchecked(&self, a: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.q];
        for (i, &ai) in a.iter().enumerate() {
            if ai == 0.0 {
                continue;
            }
            for (o, p) in out.iter_mut().zip(self.row(i)) {
                *o += ai * p;
            }
        }
        out
    }

    /// `Φw`, the approximated dual over all `m` constraints.
    pub fn eval_dual(&self, w: &[f64]) -> Result<Vec<f64>> {
        Error::check_len(self.q, w.len())?;
        if let Some(j) = w.iter().position(|v| !(*v >= 0.0)) {
            return Err(Error::Precondition(format!(
                "dual weights must be non-negative, w[{j}] = {}",
                w[j]
            )));
        }
        Ok((0..self.m)
            .map(|i| self.row(i).iter().zip(w).map(|(p, x)| p * x).sum())
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn full_spec(m: usize) -> BasisSpec {
        BasisSpec::with_defaults(m, 10)
    }

    #[test]
    fn layer_counts() {
        let s = full_spec(2000);
        assert_eq!(s.coarse_count(), 6);
        assert_eq!(s.fine_count(), 4);
    }

    #[test]
    fn coarse_centers_and_spacing() {
        let b = Basis::rbf(&full_spec(50)).unwrap();
        let expected = [0.0, 0.2, 0.4, 0.6, 0.8, 1.0];
        for (c, e) in b.centers()[..6].iter().zip(expected) {
            assert!((c - e).abs() < 1e-15, "{c} vs {e}");
        }
        // fine layer: frac(0.1 + l*0.2)
        let fine = [0.1, 0.3, 0.5, 0.7];
        for (c, e) in b.centers()[6..].iter().zip(fine) {
            assert!((c - e).abs() < 1e-12, "{c} vs {e}");
        }
    }

    #[test]
    fn bandwidth_value() {
        // 0.2 / (2 * ln(1/0.6))
        let s = bandwidth(0.2, 0.6);
        assert!((s - 0.195_761_5).abs() < 1e-6, "{s}");
        let b = Basis::rbf(&full_spec(10)).unwrap();
        assert!((b.bandwidths()[0] - s).abs() < 1e-15);
        assert!((b.bandwidths()[9] - bandwidth(0.2, 0.3)).abs() < 1e-15);
    }

    #[test]
    fn entries_match_kernel_and_are_positive() {
        let b = Basis::rbf(&full_spec(200)).unwrap();
        assert!(b.min_entry() > 0.0);
        for i in [0, 57, 199] {
            let u = (i as f64 + 0.5) / 200.0;
            assert_eq!(b.embedding()[i], u);
            for j in 0..10 {
                let e = gaussian(u, b.centers()[j], b.bandwidths()[j]);
                assert_eq!(b.get(i, j), e);
            }
        }
    }

    #[test]
    fn wraparound_duplicates_are_kept() {
        // K_c = 2 → Δ = 1; fine centers frac(0.5 + l) all equal 0.5
        let spec = BasisSpec {
            m: 5,
            q: 5,
            alpha: 0.3,
            rho_coarse: 0.5,
            rho_fine: 0.5,
        };
        let b = Basis::rbf(&spec).unwrap();
        assert_eq!(b.q(), 5);
        assert_eq!(&b.centers()[2..], &[0.5, 0.5, 0.5]);
    }

    #[test]
    fn coarse_only_when_fine_layer_empty() {
        let spec = BasisSpec {
            m: 4,
            q: 2,
            ..BasisSpec::with_defaults(4, 2)
        };
        let b = Basis::rbf(&spec).unwrap();
        assert_eq!(b.q(), 2);
        assert_eq!(b.coarse_count(), 2);
    }

    #[test]
    fn config_errors() {
        assert!(Basis::rbf(&BasisSpec::with_defaults(10, 1)).is_err());
        assert!(Basis::rbf(&BasisSpec::with_defaults(0, 10)).is_err());
        assert!(Basis::rbf(&BasisSpec { rho_fine: 1.0, ..BasisSpec::with_defaults(10, 10) }).is_err());
    }

    #[test]
    fn projection_examples() {
        let b = Basis::from_rows(&[vec![0.5, 0.25]]).unwrap();
        assert_eq!(b.project_columns(&[2.0]).unwrap(), vec![1.0, 0.5]);
        assert_eq!(b.project_columns(&[0.0]).unwrap(), vec![0.0, 0.0]);
        assert!(matches!(b.project_columns(&[1.0, 2.0]), Err(Error::Dimension { .. })));
    }

    #[test]
    fn eval_dual_examples() {
        let b = Basis::from_rows(&[vec![1.0], vec![1.0], vec![1.0]]).unwrap();
        assert_eq!(b.eval_dual(&[3.0]).unwrap(), vec![3.0; 3]);
        assert_eq!(b.eval_dual(&[0.0]).unwrap(), vec![0.0; 3]);
        assert!(matches!(b.eval_dual(&[-1.0]), Err(Error::Precondition(_))));
    }

    #[test]
    fn rebuild_is_identical() {
        let a = Basis::rbf(&full_spec(300)).unwrap();
        let b = Basis::rbf(&full_spec(300)).unwrap();
        assert_eq!(a, b);
    }
}
