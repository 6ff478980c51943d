//! Thin-plate covariance used as the GP prior over signed distance.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::geometry::{dist2, Point};

/// Thin-plate kernel `2 r² ln r - (1 + 2 ln R) r² + R²`.
///
/// `range` is the largest distance expected in the environment. The kernel is
/// a valid covariance for `r <= range` and reaches zero at `r = range`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ThinPlate {
    range: f64,
    // cached 1 + 2 ln R
    slope: f64,
}

impl ThinPlate {
    pub fn new(range: f64) -> Result<Self> {
        if !(range > 0.0 && range.is_finite()) {
            return Err(Error::Precondition(format!(
                "kernel range must be positive, got {range}"
            )));
        }
        Ok(ThinPlate {
            range,
            slope: 1.0 + 2.0 * range.ln(),
        })
    }

    pub fn range(&self) -> f64 {
        self.range
    }

    /// Prior variance `k(x, x) = R²`.
    pub fn variance(&self) -> f64 {
        self.range * self.range
    }

    #[inline]
    pub fn eval(&self, a: &Point, b: &Point) -> f64 {
        self.eval_sq(dist2(a, b))
    }

    /// Kernel as a function of the squared distance. Uses `2 r² ln r = r² ln r²`
    /// so the expression is symmetric and needs no square root.
    #[inline]
    pub fn eval_sq(&self, r2: f64) -> f64 {
        let log_term = if r2 > 0.0 { r2 * r2.ln() } else { 0.0 };
        log_term - self.slope * r2 + self.range * self.range
    }

    pub fn matrix(&self, rows: &[Point], cols: &[Point]) -> DMatrix<f64> {
        DMatrix::from_fn(rows.len(), cols.len(), |i, j| self.eval(&rows[i], &cols[j]))
    }

    /// Symmetric Gram matrix, filling only one triangle.
    pub fn gram(&self, points: &[Point]) -> DMatrix<f64> {
        let n = points.len();
        let mut k = DMatrix::zeros(n, n);
        for j in 0..n {
            for i in j..n {
                let v = self.eval(&points[i], &points[j]);
                k[(i, j)] = v;
                k[(j, i)] = v;
            }
        }
        k
    }

    pub fn column(&self, points: &[Point], x: &Point) -> DVector<f64> {
        DVector::from_iterator(points.len(), points.iter().map(|p| self.eval(p, x)))
    }
}

/// Kernel matrix between two point lists.
pub fn kernel_matrix(rows: &[Point], cols: &[Point], kernel: &ThinPlate) -> DMatrix<f64> {
    kernel.matrix(rows, cols)
}
