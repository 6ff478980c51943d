//! Full GP regression over every measurement. Cubic in the batch size; used as
//! the reference the sparse model is checked against.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::geometry::Point;
use crate::kernel::ThinPlate;
use crate::linalg::Factor;

/// Posterior mean and covariance at a set of trial points.
#[derive(Clone, Debug)]
pub struct Posterior {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

/// Merges exactly coincident training locations by averaging their targets.
pub fn merge_duplicates(locations: &[Point], values: &[f64]) -> (Vec<Point>, Vec<f64>) {
    let mut out_pts: Vec<Point> = Vec::with_capacity(locations.len());
    let mut sums: Vec<(f64, usize)> = Vec::with_capacity(locations.len());
    for (p, &y) in locations.iter().zip(values) {
        match out_pts.iter().position(|q| q == p) {
            Some(i) => {
                sums[i].0 += y;
                sums[i].1 += 1;
            }
            None => {
                out_pts.push(*p);
                sums.push((y, 1));
            }
        }
    }
    let vals = sums.into_iter().map(|(s, n)| s / n as f64).collect();
    (out_pts, vals)
}

pub fn exact_gp_predict(
    locations: &[Point],
    values: &[f64],
    noise_var: f64,
    kernel: &ThinPlate,
    trial: &[Point],
) -> Result<Posterior> {
    if locations.is_empty() || locations.len() != values.len() {
        return Err(Error::Precondition(format!(
            "exact GP needs matching nonempty inputs, got {} locations and {} values",
            locations.len(),
            values.len()
        )));
    }
    let (xm, y) = merge_duplicates(locations, values);
    let mut kmm = kernel.gram(&xm);
    for i in 0..xm.len() {
        kmm[(i, i)] += noise_var;
    }
    let factor = Factor::new(&kmm, kernel.variance(), 0.0)
        .map_err(|e| e.context(format!("exact GP batch of {} points", xm.len())))?;
    let y = DVector::from_vec(y);
    let alpha = factor.solve(&y);
    let ksm = kernel.matrix(trial, &xm);
    let mean = &ksm * alpha;
    // K** - V^T V with V = L^-1 K_m*
    let v = factor.solve_lower_mat(&ksm.transpose());
    let cov = kernel.gram(trial) - v.transpose() * v;
    Ok(Posterior { mean, cov })
}
