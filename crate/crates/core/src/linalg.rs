//! Small dense helpers shared by the solvers. Everything here works on plain
//! slices; the systems involved are at most a few dozen rows.

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    a.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn norm_inf(a: &[f64]) -> f64 {
    a.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

/// `y += alpha * x`
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn positive_part_norm2(a: &[f64]) -> f64 {
    a.iter().map(|x| x.max(0.0).powi(2)).sum::<f64>().sqrt()
}

/// Dense square matrix in row-major order.
#[derive(Clone, Debug, PartialEq)]
pub struct Square {
    n: usize,
    data: Vec<f64>,
}

impl Square {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![0.0; n * n],
        }
    }

    /// Build from rows; every row must have length `rows.len()`.
    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let n = rows.len();
        let mut data = Vec::with_capacity(n * n);
        for r in rows {
            assert_eq!(r.len(), n, "non-square row");
            data.extend_from_slice(r);
        }
        Self { n, data }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n + j] = v;
    }

    /// Solve `A x = rhs` by Gaussian elimination with partial pivoting.
    /// Returns `None` when a pivot falls below `pivot_tol` relative to the
    /// largest entry of the matrix.
    pub fn solve(&self, rhs: &[f64], pivot_tol: f64) -> Option<Vec<f64>> {
        let n = self.n;
        assert_eq!(rhs.len(), n);
        if n == 0 {
            return Some(Vec::new());
        }
        let scale = self.data.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
        if scale == 0.0 {
            return None;
        }
        let mut a = self.data.clone();
        let mut b = rhs.to_vec();
        for col in 0..n {
            let (piv, pval) = (col..n)
                .map(|r| (r, a[r * n + col].abs()))
                .fold((col, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
            if pval <= pivot_tol * scale {
                return None;
            }
            if piv != col {
                for k in 0..n {
                    a.swap(col * n + k, piv * n + k);
                }
                b.swap(col, piv);
            }
            let d = a[col * n + col];
            for r in (col + 1)..n {
                let f = a[r * n + col] / d;
                if f == 0.0 {
                    continue;
                }
                for k in col..n {
                    a[r * n + k] -= f * a[col * n + k];
                }
                b[r] -= f * b[col];
            }
        }
        let mut x = vec![0.0; n];
        for i in (0..n).rev() {
            let mut s = b[i];
            for k in (i + 1)..n {
                s -= a[i * n + k] * x[k];
            }
            x[i] = s / a[i * n + i];
        }
        Some(x)
    }

    /// Solve `Aᵀ y = rhs`.
    pub fn solve_transposed(&self, rhs: &[f64], pivot_tol: f64) -> Option<Vec<f64>> {
        self.transpose().solve(rhs, pivot_tol)
    }

    pub fn inverse(&self, pivot_tol: f64) -> Option<Self> {
        let n = self.n;
        let mut inv = Self::zeros(n);
        let mut e = vec![0.0; n];
        for j in 0..n {
            e[j] = 1.0;
            let col = self.solve(&e, pivot_tol)?;
            e[j] = 0.0;
            for (i, v) in col.into_iter().enumerate() {
                inv.set(i, j, v);
            }
        }
        Some(inv)
    }

    pub fn transpose(&self) -> Self {
        let n = self.n;
        let mut t = Self::zeros(n);
        for i in 0..n {
            for j in 0..n {
                t.set(j, i, self.get(i, j));
            }
        }
        t
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_small_system() {
        let a = Square::from_rows(&[vec![2.0, 1.0], vec![1.0, 3.0]]);
        let x = a.solve(&[3.0, 5.0], 1e-14).unwrap();
        assert!((x[0] - 0.8).abs() < 1e-14);
        assert!((x[1] - 1.4).abs() < 1e-14);
        let y = a.solve_transposed(&[3.0, 5.0], 1e-14).unwrap();
        assert!((y[0] - 0.8).abs() < 1e-14);
    }

    #[test]
    fn inverse_round_trip() {
        let a = Square::from_rows(&[vec![4.0, 1.0, 0.0], vec![1.0, 3.0, 1.0], vec![0.0, 2.0, 5.0]]);
        let inv = a.inverse(1e-14).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let s: f64 = (0..3).map(|k| a.get(i, k) * inv.get(k, j)).sum();
                assert!((s - if i == j { 1.0 } else { 0.0 }).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn singular_is_rejected() {
        let a = Square::from_rows(&[vec![1.0, 2.0], vec![2.0, 4.0]]);
        assert!(a.solve(&[1.0, 2.0], 1e-12).is_none());
    }

    #[test]
    fn positive_part_norm() {
        assert_eq!(positive_part_norm2(&[1.0, -2.0]), 1.0);
        assert_eq!(positive_part_norm2(&[3.0, 4.0]), 5.0);
    }
}
