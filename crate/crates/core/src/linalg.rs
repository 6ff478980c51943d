//! Cholesky factorization with the jitter fallback used for every kernel
//! solve, plus in-place row/column append and removal.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative jitter levels, multiplied by the prior variance scale.
const JITTER_LEVELS: [f64; 3] = [0.0, 1e-8, 1e-6];

/// Lower Cholesky factor `L` with `L Lᵀ = A + jitter·I`.
#[derive(Clone, Debug)]
pub struct Factor {
    l: DMatrix<f64>,
    jitter: f64,
    scale: f64,
}

impl Factor {
    /// Factors `a`, escalating the diagonal jitter through `0, 1e-8·scale,
    /// 1e-6·scale` and never going below `min_jitter`.
    pub fn new(a: &DMatrix<f64>, scale: f64, min_jitter: f64) -> Result<Factor> {
        debug_assert!(a.is_square());
        for rel in JITTER_LEVELS {
            let jitter = rel * scale;
            if jitter < min_jitter {
                continue;
            }
            if let Some(l) = cholesky(a, jitter) {
                return Ok(Factor { l, jitter, scale });
            }
        }
        if min_jitter > JITTER_LEVELS[2] * scale {
            if let Some(l) = cholesky(a, min_jitter) {
                return Ok(Factor {
                    l,
                    jitter: min_jitter,
                    scale,
                });
            }
        }
        Err(Error::Numerical(format!(
            "{n}x{n} matrix not positive definite after jitter {:e}",
            JITTER_LEVELS[2] * scale,
            n = a.nrows()
        )))
    }

    pub fn dim(&self) -> usize {
        self.l.nrows()
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn lower(&self) -> &DMatrix<f64> {
        &self.l
    }

    /// `L⁻¹ b`
    pub fn solve_lower(&self, b: &DVector<f64>) -> DVector<f64> {
        let mut x = b.clone();
        forward_subst(&self.l, x.as_mut_slice());
        x
    }

    /// `L⁻ᵀ b`
    pub fn solve_upper(&self, b: &DVector<f64>) -> DVector<f64> {
        let mut x = b.clone();
        backward_subst_t(&self.l, x.as_mut_slice());
        x
    }

    /// `L⁻ᵀ B` column by column.
    pub fn solve_upper_mat(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        let mut x = b.clone();
        for mut col in x.column_iter_mut() {
            backward_subst_t(&self.l, col.as_mut_slice());
        }
        x
    }

    /// `A⁻¹ b`
    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        let mut x = b.clone();
        forward_subst(&self.l, x.as_mut_slice());
        backward_subst_t(&self.l, x.as_mut_slice());
        x
    }

    /// `A⁻¹ B` column by column.
    pub fn solve_mat(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        let mut x = b.clone();
        for mut col in x.column_iter_mut() {
            let s = col.as_mut_slice();
            forward_subst(&self.l, s);
            backward_subst_t(&self.l, s);
        }
        x
    }

    /// `L⁻¹ B` column by column.
    pub fn solve_lower_mat(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        let mut x = b.clone();
        for mut col in x.column_iter_mut() {
            forward_subst(&self.l, col.as_mut_slice());
        }
        x
    }

    pub fn inverse(&self) -> DMatrix<f64> {
        self.solve_mat(&DMatrix::identity(self.dim(), self.dim()))
    }

    /// Extends the factor by one trailing row/column of `A`.
    ///
    /// `col` holds the new off-diagonal entries, `diag` the new diagonal entry
    /// (without jitter). Returns `false`, leaving the factor untouched, when
    /// the extended matrix is not numerically positive definite.
    pub fn push(&mut self, col: &DVector<f64>, diag: f64) -> bool {
        let n = self.dim();
        debug_assert_eq!(col.len(), n);
        let l_row = self.solve_lower(col);
        let d2 = diag + self.jitter - l_row.norm_squared();
        if !(d2 > 0.0 && d2.is_finite()) {
            return false;
        }
        let mut l = self.l.clone().resize(n + 1, n + 1, 0.0);
        for j in 0..n {
            l[(n, j)] = l_row[j];
        }
        l[(n, n)] = d2.sqrt();
        self.l = l;
        true
    }

    /// Drops row/column `idx` of `A`, repairing the trailing block with a
    /// rank-1 update.
    pub fn remove(&mut self, idx: usize) {
        let n = self.dim();
        assert!(idx < n);
        let mut x: Vec<f64> = ((idx + 1)..n).map(|i| self.l[(i, idx)]).collect();
        let mut l = self.l.clone().remove_row(idx).remove_column(idx);
        // trailing block now starts at (idx, idx)
        let m = n - 1;
        for k in idx..m {
            let xk = x[k - idx];
            let lkk = l[(k, k)];
            let r = lkk.hypot(xk);
            let c = r / lkk;
            let s = xk / lkk;
            l[(k, k)] = r;
            for i in (k + 1)..m {
                let lik = (l[(i, k)] + s * x[i - idx]) / c;
                x[i - idx] = c * x[i - idx] - s * lik;
                l[(i, k)] = lik;
            }
        }
        self.l = l;
    }

    /// Scale used for the jitter levels.
    pub fn scale(&self) -> f64 {
        self.scale
    }
}

fn cholesky(a: &DMatrix<f64>, jitter: f64) -> Option<DMatrix<f64>> {
    let n = a.nrows();
    let mut l = DMatrix::zeros(n, n);
    for j in 0..n {
        let mut d = a[(j, j)] + jitter;
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if !(d > 0.0 && d.is_finite()) {
            return None;
        }
        let d = d.sqrt();
        l[(j, j)] = d;
        for i in (j + 1)..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / d;
        }
    }
    Some(l)
}

fn forward_subst(l: &DMatrix<f64>, x: &mut [f64]) {
    let n = l.nrows();
    for j in 0..n {
        x[j] /= l[(j, j)];
        let xj = x[j];
        if xj != 0.0 {
            let col = l.column(j);
            for i in (j + 1)..n {
                x[i] -= col[i] * xj;
            }
        }
    }
}

fn backward_subst_t(l: &DMatrix<f64>, x: &mut [f64]) {
    let n = l.nrows();
    for i in (0..n).rev() {
        let col = l.column(i);
        let mut s = x[i];
        for k in (i + 1)..n {
            s -= col[k] * x[k];
        }
        x[i] = s / l[(i, i)];
    }
}

/// `(A + Aᵀ) / 2` in place and negative diagonal entries clamped to zero.
pub fn symmetrize_clamp(a: &mut DMatrix<f64>) {
    let n = a.nrows();
    for j in 0..n {
        for i in (j + 1)..n {
            let v = 0.5 * (a[(i, j)] + a[(j, i)]);
            a[(i, j)] = v;
            a[(j, i)] = v;
        }
        if a[(j, j)] < 0.0 {
            a[(j, j)] = 0.0;
        }
    }
}
