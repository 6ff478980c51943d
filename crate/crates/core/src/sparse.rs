//! FITC sparse pseudo-input GP.
//!
//! The model is the Gaussian posterior `N(mean, cov)` over the latent values at
//! the pseudo-inputs. Besides batch fitting and prediction it supports the
//! streaming operations the experts are built from: a rank-1 measurement
//! update, insertion of a new pseudo-input without changing any prediction,
//! and marginalizing one pseudo-input out.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::exact::Posterior;
use crate::geometry::{dist, Point};
use crate::kernel::ThinPlate;
use crate::linalg::{symmetrize_clamp, Factor};
use crate::measurement::MeasurementBatch;

/// Pseudo-inputs closer than this are treated as the same location.
pub const DUPLICATE_TOL: f64 = 1e-9;

#[derive(Clone, Debug)]
pub struct SparseGp {
    kernel: ThinPlate,
    noise_var: f64,
    pis: Vec<Point>,
    mean: DVector<f64>,
    cov: DMatrix<f64>,
    // Cholesky factor of K_uu, kept in sync with `pis`
    kuu: Factor,
}

fn check_noise(noise_var: f64) -> Result<()> {
    if noise_var > 0.0 && noise_var.is_finite() {
        Ok(())
    } else {
        Err(Error::Precondition(format!(
            "noise variance must be positive, got {noise_var}"
        )))
    }
}

impl SparseGp {
    /// Model before any data: zero mean and the prior covariance `K_uu`.
    pub fn prior(pis: Vec<Point>, kernel: ThinPlate, noise_var: f64) -> Result<Self> {
        check_noise(noise_var)?;
        if pis.is_empty() {
            return Err(Error::Precondition("a sparse GP needs at least one pseudo-input".into()));
        }
        let kuu = kernel.gram(&pis);
        let factor = Factor::new(&kuu, kernel.variance(), 0.0)?;
        Ok(SparseGp {
            kernel,
            noise_var,
            mean: DVector::zeros(pis.len()),
            cov: kuu,
            pis,
            kuu: factor,
        })
    }

    /// Rebuilds a model from stored posterior moments.
    pub fn from_parts(
        pis: Vec<Point>,
        mean: DVector<f64>,
        mut cov: DMatrix<f64>,
        kernel: ThinPlate,
        noise_var: f64,
        min_jitter: f64,
    ) -> Result<Self> {
        check_noise(noise_var)?;
        let n = pis.len();
        if n == 0 || mean.len() != n || cov.shape() != (n, n) {
            return Err(Error::Precondition(format!(
                "inconsistent model dimensions: {n} pseudo-inputs, mean {}, cov {:?}",
                mean.len(),
                cov.shape()
            )));
        }
        symmetrize_clamp(&mut cov);
        let kuu = Factor::new(&kernel.gram(&pis), kernel.variance(), min_jitter)?;
        Ok(SparseGp {
            kernel,
            noise_var,
            pis,
            mean,
            cov,
            kuu,
        })
    }

    /// Batch FITC posterior over the pseudo-inputs given a batch of data.
    ///
    /// `Λ = diag(K_mm - K_mu K_uu⁻¹ K_um)`, `D = Λ + σ²I`,
    /// `Δ = K_uu + K_um D⁻¹ K_mu`, then `mean = K_uu Δ⁻¹ K_um D⁻¹ y` and
    /// `cov = K_uu Δ⁻¹ K_uu`.
    pub fn fit(
        pis: Vec<Point>,
        batch: &MeasurementBatch,
        kernel: ThinPlate,
        noise_var: f64,
    ) -> Result<Self> {
        check_noise(noise_var)?;
        if pis.is_empty() || batch.is_empty() {
            return Err(Error::Precondition(format!(
                "FITC fit needs pseudo-inputs and data, got {} and {}",
                pis.len(),
                batch.len()
            )));
        }
        let kuu = kernel.gram(&pis);
        let factor = Factor::new(&kuu, kernel.variance(), 0.0)?;
        let kum = kernel.matrix(&pis, batch.locations());
        let v = factor.solve_lower_mat(&kum);
        let prior_var = kernel.variance();

        let mut scaled = kum.clone();
        for (i, mut col) in scaled.column_iter_mut().enumerate() {
            let lambda = (prior_var - v.column(i).norm_squared()).max(0.0);
            col /= lambda + noise_var;
        }
        let mut delta = &kuu + &scaled * kum.transpose();
        symmetrize_clamp(&mut delta);
        let delta_factor = Factor::new(&delta, prior_var, 0.0)
            .map_err(|e| e.context("FITC fit: Δ factorization"))?;

        let y = DVector::from_column_slice(batch.values());
        let b = &scaled * y;
        let mean = &kuu * delta_factor.solve(&b);
        let mut cov = &kuu * delta_factor.solve_mat(&kuu);
        symmetrize_clamp(&mut cov);
        Ok(SparseGp {
            kernel,
            noise_var,
            pis,
            mean,
            cov,
            kuu: factor,
        })
    }

    pub fn len(&self) -> usize {
        self.pis.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pis.is_empty()
    }

    pub fn pis(&self) -> &[Point] {
        &self.pis
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }

    pub fn kernel(&self) -> &ThinPlate {
        &self.kernel
    }

    pub fn noise_var(&self) -> f64 {
        self.noise_var
    }

    /// Diagonal jitter currently folded into the `K_uu` factor.
    pub fn jitter(&self) -> f64 {
        self.kuu.jitter()
    }

    pub(crate) fn kuu_factor(&self) -> &Factor {
        &self.kuu
    }

    /// Mean predictor with `K_uu⁻¹ μ_u` solved once.
    pub fn mean_field(&self) -> MeanField<'_> {
        MeanField {
            pis: &self.pis,
            kernel: &self.kernel,
            weights: self.kuu.solve(&self.mean),
        }
    }

    pub fn predict_mean(&self, xs: &[Point]) -> Vec<f64> {
        let field = self.mean_field();
        xs.iter().map(|x| field.at(x)).collect()
    }

    /// `μ* = K*u K_uu⁻¹ μ_u`, `Σ** = K** - K*u K_uu⁻¹ (K_uu - Σ_uu) K_uu⁻¹ K_u*`.
    pub fn predict(&self, xs: &[Point]) -> Posterior {
        let kus = self.kernel.matrix(&self.pis, xs);
        let v = self.kuu.solve_lower_mat(&kus);
        let w = self.kuu.solve_upper_mat(&v);
        let mean = w.transpose() * &self.mean;
        let mut cov = self.kernel.gram(xs) - v.transpose() * &v + w.transpose() * &self.cov * &w;
        let n = cov.nrows();
        for j in 0..n {
            for i in (j + 1)..n {
                let s = 0.5 * (cov[(i, j)] + cov[(j, i)]);
                cov[(i, j)] = s;
                cov[(j, i)] = s;
            }
        }
        Posterior { mean, cov }
    }

    /// Predictive mean and variance at one location (variance not clamped).
    pub fn predict_point(&self, x: &Point) -> (f64, f64) {
        let k = self.kernel.column(&self.pis, x);
        let l = self.kuu.solve_lower(&k);
        let v = self.back_solve(&l);
        let mean = v.dot(&self.mean);
        let var = self.kernel.variance() - l.norm_squared() + v.dot(&(&self.cov * &v));
        (mean, var)
    }

    fn back_solve(&self, l: &DVector<f64>) -> DVector<f64> {
        self.kuu.solve_upper(l)
    }

    /// Prior moments of a new location given the pseudo-inputs:
    /// returns `(K_uu⁻¹ k, mean, cross = Σ_uu K_uu⁻¹ k, variance)`.
    fn conditional(&self, x: &Point) -> (DVector<f64>, f64, DVector<f64>, f64) {
        let k = self.kernel.column(&self.pis, x);
        let l = self.kuu.solve_lower(&k);
        let v = self.back_solve(&l);
        let mean = v.dot(&self.mean);
        let cross = &self.cov * &v;
        let lambda = (self.kernel.variance() - l.norm_squared()).max(0.0);
        let var = (lambda + v.dot(&cross)).max(0.0);
        (v, mean, cross, var)
    }

    /// Rank-1 posterior update with the measurement `(x, y)`.
    pub fn update(&mut self, x: &Point, y: f64) -> Result<()> {
        let (_, prior_mean, cross, var) = self.conditional(x);
        let s = var + self.noise_var;
        if !(s > 0.0 && s.is_finite()) {
            return Err(Error::Numerical(format!(
                "innovation variance {s} at ({}, {})",
                x.x, x.y
            )));
        }
        let gain = &cross / s;
        self.mean.axpy(y - prior_mean, &gain, 1.0);
        self.cov.ger(-1.0, &gain, &cross, 1.0);
        symmetrize_clamp(&mut self.cov);
        Ok(())
    }

    /// Adds a pseudo-input at `x` with its conditional prior moments. The
    /// predictive distribution at every location is unchanged.
    pub fn insert(&mut self, x: Point) -> Result<()> {
        if let Some(i) = self.pis.iter().position(|p| dist(p, &x) <= DUPLICATE_TOL) {
            return Err(Error::Precondition(format!(
                "pseudo-input ({}, {}) duplicates existing index {i}",
                x.x, x.y
            )));
        }
        let (_, mean, cross, var) = self.conditional(&x);
        let n = self.pis.len();
        let kcol = self.kernel.column(&self.pis, &x);

        let mut cov = std::mem::replace(&mut self.cov, DMatrix::zeros(0, 0)).resize(n + 1, n + 1, 0.0);
        for i in 0..n {
            cov[(i, n)] = cross[i];
            cov[(n, i)] = cross[i];
        }
        cov[(n, n)] = var;
        self.cov = cov;
        self.mean = std::mem::replace(&mut self.mean, DVector::zeros(0)).push(mean);
        self.pis.push(x);

        if !self.kuu.push(&kcol, self.kernel.variance()) {
            let gram = self.kernel.gram(&self.pis);
            self.kuu = Factor::new(&gram, self.kernel.variance(), self.kuu.jitter())
                .map_err(|e| e.context("pseudo-input insertion"))?;
        }
        symmetrize_clamp(&mut self.cov);
        Ok(())
    }

    /// Marginalizes pseudo-input `index` out of the posterior.
    pub fn remove(&mut self, index: usize) -> Result<()> {
        let n = self.pis.len();
        if index >= n {
            return Err(Error::Precondition(format!(
                "pseudo-input index {index} out of range for {n}"
            )));
        }
        if n < 2 {
            return Err(Error::Precondition(
                "cannot remove the last pseudo-input".into(),
            ));
        }
        self.pis.remove(index);
        self.mean = std::mem::replace(&mut self.mean, DVector::zeros(0)).remove_row(index);
        self.cov = std::mem::replace(&mut self.cov, DMatrix::zeros(0, 0))
            .remove_row(index)
            .remove_column(index);
        self.kuu.remove(index);
        Ok(())
    }

    /// Keeps only the pseudo-inputs at `indices` (in that order), taking the
    /// matching sub-vector and sub-block of the posterior.
    pub fn select(&self, indices: &[usize]) -> Result<SparseGp> {
        let pis = indices.iter().map(|&i| self.pis[i]).collect();
        let mean = DVector::from_iterator(indices.len(), indices.iter().map(|&i| self.mean[i]));
        let cov = DMatrix::from_fn(indices.len(), indices.len(), |a, b| {
            self.cov[(indices[a], indices[b])]
        });
        SparseGp::from_parts(pis, mean, cov, self.kernel, self.noise_var, 0.0)
    }
}

/// Posterior mean as a function of location.
pub struct MeanField<'a> {
    pis: &'a [Point],
    kernel: &'a ThinPlate,
    weights: DVector<f64>,
}

impl MeanField<'_> {
    #[inline]
    pub fn at(&self, x: &Point) -> f64 {
        self.pis
            .iter()
            .zip(self.weights.iter())
            .map(|(p, w)| self.kernel.eval(p, x) * w)
            .sum()
    }

    /// `K_uu⁻¹ μ_u`
    pub fn weights(&self) -> &DVector<f64> {
        &self.weights
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::exact_gp_predict;
    use crate::geometry::point;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn k20() -> ThinPlate {
        ThinPlate::new(20.0).unwrap()
    }

    fn max_abs<'a>(m: impl IntoIterator<Item = &'a f64>) -> f64 {
        m.into_iter().fold(0.0, |a, v| a.max(v.abs()))
    }

    fn random_points(rng: &mut ChaCha8Rng, n: usize, half: f64) -> Vec<Point> {
        (0..n)
            .map(|_| point(rng.random_range(-half..half), rng.random_range(-half..half)))
            .collect()
    }

    fn random_batch(rng: &mut ChaCha8Rng, n: usize) -> MeasurementBatch {
        let pts = random_points(rng, n, 5.0);
        MeasurementBatch::from_pairs(pts.into_iter().map(|p| (p, (p.x * 0.3).sin() + 0.1 * p.y)))
    }

    fn check_invariants(gp: &SparseGp) {
        let c = gp.cov();
        assert!(max_abs(&(c - c.transpose())) < 1e-9);
        for i in 0..gp.len() {
            assert!(c[(i, i)] >= 0.0);
        }
        assert_eq!(gp.mean().len(), gp.len());
    }

    #[test]
    fn single_colocated_measurement() {
        let batch = MeasurementBatch::from_pairs([(point(0.0, 0.0), 1.0)]);
        let gp = SparseGp::fit(vec![point(0.0, 0.0)], &batch, k20(), 0.01).unwrap();
        assert!((gp.mean()[0] - 400.0 / 400.01).abs() < 1e-9);
    }

    #[test]
    fn zero_targets_give_zero_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let pts = random_points(&mut rng, 15, 4.0);
        let batch = MeasurementBatch::from_pairs(pts.iter().map(|p| (*p, 0.0)));
        let gp = SparseGp::fit(pts[..5].to_vec(), &batch, k20(), 0.01).unwrap();
        assert_eq!(max_abs(gp.mean().iter()), 0.0);
        assert!(gp.predict_mean(&pts).iter().all(|&m| m == 0.0));
    }

    #[test]
    fn exact_when_pseudo_inputs_are_data() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let batch = random_batch(&mut rng, 30);
        let trial = random_points(&mut rng, 12, 6.0);
        let gp = SparseGp::fit(batch.locations().to_vec(), &batch, k20(), 0.01).unwrap();
        let sparse = gp.predict(&trial);
        let exact = exact_gp_predict(batch.locations(), batch.values(), 0.01, &k20(), &trial).unwrap();
        assert!(max_abs(&(&sparse.mean - &exact.mean)) < 1e-6);
        assert!(max_abs(&(&sparse.cov - &exact.cov)) < 1e-6);
        check_invariants(&gp);
    }

    #[test]
    fn predicts_stored_mean_at_pseudo_inputs() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let batch = random_batch(&mut rng, 20);
        let pis = random_points(&mut rng, 6, 5.0);
        let gp = SparseGp::fit(pis.clone(), &batch, k20(), 0.01).unwrap();
        let at = gp.predict(&pis);
        assert!(max_abs(&(&at.mean - gp.mean())) < 1e-8);
        assert!(max_abs(&(&at.cov - gp.cov())) < 1e-6);
        let fast = gp.predict_mean(&pis);
        for (a, b) in fast.iter().zip(at.mean.iter()) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn sequential_updates_match_batch_fit() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let batch = random_batch(&mut rng, 25);
        let pis = random_points(&mut rng, 8, 5.0);
        let fitted = SparseGp::fit(pis.clone(), &batch, k20(), 0.01).unwrap();
        let mut seq = SparseGp::prior(pis, k20(), 0.01).unwrap();
        for i in 0..batch.len() {
            let (x, y, _) = batch.get(i);
            seq.update(&x, y).unwrap();
            check_invariants(&seq);
        }
        assert!(max_abs(&(seq.mean() - fitted.mean())) < 1e-6);
        assert!(max_abs(&(seq.cov() - fitted.cov())) < 1e-6);
    }

    #[test]
    fn zero_innovation_keeps_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let batch = random_batch(&mut rng, 10);
        let mut gp = SparseGp::fit(random_points(&mut rng, 5, 5.0), &batch, k20(), 0.01).unwrap();
        let x = point(0.3, -0.7);
        let before = gp.mean().clone();
        let (m, var_before) = gp.predict_point(&x);
        gp.update(&x, m).unwrap();
        assert!(max_abs(&(gp.mean() - before)) < 1e-12);
        let (_, var_after) = gp.predict_point(&x);
        assert!(var_after < var_before);
    }

    #[test]
    fn insertion_keeps_predictions() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let batch = random_batch(&mut rng, 20);
        let mut gp = SparseGp::fit(random_points(&mut rng, 6, 5.0), &batch, k20(), 0.01).unwrap();
        let trial = random_points(&mut rng, 20, 6.0);
        let before = gp.predict(&trial);
        let n = gp.len();
        gp.insert(point(1.234, -2.5)).unwrap();
        assert_eq!(gp.len(), n + 1);
        let after = gp.predict(&trial);
        assert!(max_abs(&(&after.mean - &before.mean)) < 1e-8);
        assert!(max_abs(&(&after.cov - &before.cov)) < 1e-8);
        check_invariants(&gp);
    }

    #[test]
    fn insert_into_prior_has_zero_mean() {
        let mut gp = SparseGp::prior(vec![point(0.0, 0.0), point(1.0, 1.0)], k20(), 0.01).unwrap();
        gp.insert(point(0.5, 2.0)).unwrap();
        assert_eq!(gp.mean()[2], 0.0);
    }

    #[test]
    fn insert_then_remove_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let batch = random_batch(&mut rng, 15);
        let gp = SparseGp::fit(random_points(&mut rng, 5, 5.0), &batch, k20(), 0.01).unwrap();
        let mut g2 = gp.clone();
        g2.insert(point(-3.0, 3.0)).unwrap();
        g2.remove(g2.len() - 1).unwrap();
        assert_eq!(g2.pis(), gp.pis());
        assert!(max_abs(&(g2.mean() - gp.mean())) <= 1e-12);
        assert!(max_abs(&(g2.cov() - gp.cov())) <= 1e-12);
    }

    #[test]
    fn remove_selects_submatrix() {
        let batch = MeasurementBatch::from_pairs([(point(0.0, 0.0), 0.1), (point(1.0, 0.0), -0.2)]);
        let gp = SparseGp::fit(vec![point(0.0, 0.0), point(1.0, 0.0)], &batch, k20(), 0.01).unwrap();
        let mut g = gp.clone();
        g.remove(0).unwrap();
        assert_eq!(g.len(), 1);
        assert_eq!(g.mean()[0], gp.mean()[1]);
        assert_eq!(g.cov()[(0, 0)], gp.cov()[(1, 1)]);
        assert!(g.remove(0).is_err());
        assert!(g.remove(5).is_err());
    }

    #[test]
    fn duplicate_insert_rejected() {
        let mut gp = SparseGp::prior(vec![point(0.0, 0.0)], k20(), 0.01).unwrap();
        let err = gp.insert(point(0.0, 1e-12)).unwrap_err();
        assert!(matches!(err, Error::Precondition(_)));
    }

    #[test]
    fn factor_tracks_pseudo_inputs() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut gp = SparseGp::prior(random_points(&mut rng, 4, 3.0), k20(), 0.01).unwrap();
        for p in random_points(&mut rng, 6, 3.0) {
            gp.insert(p).unwrap();
        }
        gp.remove(2).unwrap();
        gp.remove(0).unwrap();
        let fresh = Factor::new(&k20().gram(gp.pis()), 400.0, 0.0).unwrap();
        assert!(max_abs(&(gp.kuu_factor().lower() - fresh.lower())) < 1e-9);
    }
}
