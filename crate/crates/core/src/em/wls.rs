//! Weighted least squares via Householder QR of the `√w`-scaled system.
//!
//! Full-rank problems are solved with column-pivoted Householder QR. When the
//! pivoted diagonal reveals rank deficiency the minimum-norm solution is
//! recovered from an SVD instead.

use nalgebra::{DMatrix, DVector};

use crate::error::{contract, domain, Result};

/// Relative pivot threshold below which a column counts as dependent.
const RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct WlsSolution {
    pub beta: Vec<f64>,
    pub rank_deficient: bool,
}

/// Solves `argmin_β Σ w_i (y_i − x_i·β)²` for a row-major `n × p` design.
pub fn wls_solve(x: &[f64], p: usize, y: &[f64], w: &[f64]) -> Result<WlsSolution> {
    let n = y.len();
    if p == 0 || x.len() != n * p || w.len() != n {
        return Err(contract(format!(
            "wls shapes disagree: x has {} entries, y {}, w {}, p {}",
            x.len(),
            n,
            w.len(),
            p
        )));
    }
    if w.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
        return Err(domain("weights must be finite and non-negative"));
    }
    let mut ws = WlsWorkspace::new(n, p);
    let mut beta = vec![0.0; p];
    let rank_deficient = ws.solve(x, y, w, &mut beta)?;
    Ok(WlsSolution { beta, rank_deficient })
}

/// Reusable buffers so the EM inner loop does not allocate.
pub(crate) struct WlsWorkspace {
    n: usize,
    p: usize,
    // column-major n × p
    a: Vec<f64>,
    b: Vec<f64>,
    perm: Vec<usize>,
    z: Vec<f64>,
    /// Weighted residual sum of squares of the last full-rank solve.
    pub(crate) rss: Option<f64>,
}

impl WlsWorkspace {
    pub(crate) fn new(n: usize, p: usize) -> Self {
        Self {
            n,
            p,
            a: vec![0.0; n * p],
            b: vec![0.0; n],
            perm: (0..p).collect(),
            z: vec![0.0; p],
            rss: None,
        }
    }

    /// Writes the solution into `beta`; returns whether the weighted design was
    /// rank deficient.
    pub(crate) fn solve(&mut self, x: &[f64], y: &[f64], w: &[f64], beta: &mut [f64]) -> Result<bool> {
        let (n, p) = (self.n, self.p);
        debug_assert_eq!(x.len(), n * p);
        let total: f64 = w.iter().sum();
        if !(total > 0.0) {
            return Err(domain("weighted least squares needs a positive total weight"));
        }
        for (b, &wi) in self.b.iter_mut().zip(w) {
            *b = wi.sqrt();
        }
        for (j, col) in self.a.chunks_exact_mut(n).enumerate() {
            for ((a, row), s) in col.iter_mut().zip(x.chunks_exact(p)).zip(&self.b) {
                *a = s * row[j];
            }
        }
        for (b, yi) in self.b.iter_mut().zip(y) {
            *b *= yi;
        }
        for (j, v) in self.perm.iter_mut().enumerate() {
            *v = j;
        }

        let mut rank = p;
        let mut r00 = 0.0;
        for k in 0..p.min(n) {
            // pivot on the largest remaining column norm
            let mut best = k;
            let mut best_norm = -1.0;
            for j in k..p {
                let col = &self.a[j * n + k..(j + 1) * n];
                let s = dot(col, col);
                if s > best_norm {
                    best_norm = s;
                    best = j;
                }
            }
            if best != k {
                for i in 0..n {
                    self.a.swap(k * n + i, best * n + i);
                }
                self.perm.swap(k, best);
            }
            let norm = best_norm.sqrt();
            if k == 0 {
                r00 = norm;
            }
            if norm <= RANK_TOL * r00 || norm == 0.0 {
                rank = k;
                break;
            }
            // Householder vector stored in place of column k below the diagonal
            let akk = self.a[k * n + k];
            let alpha = if akk > 0.0 { -norm } else { norm };
            let v0 = akk - alpha;
            self.a[k * n + k] = v0;
            let vnorm2 = v0 * v0 + (best_norm - akk * akk);
            if vnorm2 > 0.0 {
                let (head, tail) = self.a.split_at_mut((k + 1) * n);
                let v = &head[k * n + k..(k + 1) * n];
                for j in 0..(p - k - 1) {
                    let col = &mut tail[j * n + k..(j + 1) * n];
                    let tau = 2.0 * dot(v, col) / vnorm2;
                    for (c, vi) in col.iter_mut().zip(v) {
                        *c -= tau * vi;
                    }
                }
                let bk = &mut self.b[k..];
                let tau = 2.0 * dot(v, bk) / vnorm2;
                for (c, vi) in bk.iter_mut().zip(v) {
                    *c -= tau * vi;
                }
            }
            // R_kk
            self.a[k * n + k] = alpha;
        }
        if n < p {
            rank = rank.min(n);
        }

        if rank < p {
            self.rss = None;
            self.min_norm(x, y, w, beta);
            return Ok(true);
        }
        // the part of Qᵀb below the triangle is the weighted residual
        self.rss = Some(self.b[p..].iter().map(|v| v * v).sum());

        // back substitution on R z = Qᵀ b
        for k in (0..p).rev() {
            let mut s = self.b[k];
            for j in (k + 1)..p {
                s -= self.a[j * n + k] * self.z[j];
            }
            self.z[k] = s / self.a[k * n + k];
        }
        for (k, &j) in self.perm.iter().enumerate() {
            beta[j] = self.z[k];
        }
        Ok(false)
    }

    fn min_norm(&self, x: &[f64], y: &[f64], w: &[f64], beta: &mut [f64]) {
        let (n, p) = (self.n, self.p);
        let a = DMatrix::from_fn(n, p, |i, j| w[i].sqrt() * x[i * p + j]);
        let b = DVector::from_fn(n, |i, _| w[i].sqrt() * y[i]);
        let svd = a.svd(true, true);
        let smax = svd.singular_values.iter().copied().fold(0.0, f64::max);
        let sol = svd
            .solve(&b, RANK_TOL * smax)
            .expect("both singular vector sets were requested");
        beta.copy_from_slice(sol.as_slice());
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| u * v).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn intercept_only_gives_mean() {
        let y = [1.0, 2.0, 6.0, -1.0];
        let x = [1.0; 4];
        let sol = wls_solve(&x, 1, &y, &[1.0; 4]).unwrap();
        assert!((sol.beta[0] - 2.0).abs() < 1e-14);
        assert!(!sol.rank_deficient);
    }

    #[test]
    fn exact_linear_data_recovered() {
        let beta_true = [0.7, -1.3, 2.1];
        let rows: Vec<[f64; 3]> = (0..9)
            .map(|i| {
                let t = i as f64;
                [1.0, t.sin() * 2.0, (0.3 * t).cos() - t * 0.1]
            })
            .collect();
        let x: Vec<f64> = rows.iter().flatten().copied().collect();
        let y: Vec<f64> = rows.iter().map(|r| dot(r, &beta_true)).collect();
        let w: Vec<f64> = (0..9).map(|i| 0.1 + i as f64 * 0.37).collect();
        let sol = wls_solve(&x, 3, &y, &w).unwrap();
        for (a, b) in sol.beta.iter().zip(&beta_true) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn zero_weights_rejected() {
        assert!(matches!(
            wls_solve(&[1.0, 1.0], 1, &[1.0, 2.0], &[0.0, 0.0]),
            Err(crate::Error::Domain(_))
        ));
    }

    #[test]
    fn zero_weight_rows_are_ignored() {
        let x = [1.0, 0.0, 1.0, 1.0, 1.0, 2.0, 1.0, 3.0];
        let y = [1.0, 3.0, 5.0, 100.0];
        let sol = wls_solve(&x, 2, &y, &[1.0, 1.0, 1.0, 0.0]).unwrap();
        assert!((sol.beta[0] - 1.0).abs() < 1e-12);
        assert!((sol.beta[1] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn duplicated_column_gives_min_norm() {
        // columns 1 and 2 identical: minimum-norm solution splits the slope
        let x = [1.0, 0.0, 0.0, 1.0, 1.0, 1.0, 1.0, 2.0, 2.0, 1.0, 3.0, 3.0];
        let y = [1.0, 3.0, 5.0, 7.0];
        let sol = wls_solve(&x, 3, &y, &[1.0; 4]).unwrap();
        assert!(sol.rank_deficient);
        assert!((sol.beta[0] - 1.0).abs() < 1e-9);
        assert!((sol.beta[1] - 1.0).abs() < 1e-9);
        assert!((sol.beta[2] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn fewer_weighted_rows_than_columns() {
        let x = [1.0, 0.5, 1.0, 2.0, 1.0, 4.0];
        let y = [1.0, 2.0, 3.0];
        let sol = wls_solve(&x, 2, &y, &[1.0, 0.0, 0.0]).unwrap();
        assert!(sol.rank_deficient);
        // min-norm interpolant of the single row (1, 0.5)
        let r = sol.beta[0] + 0.5 * sol.beta[1];
        assert!((r - 1.0).abs() < 1e-10);
        assert!((sol.beta[0] - 0.8).abs() < 1e-10 && (sol.beta[1] - 0.4).abs() < 1e-10);
    }
}
