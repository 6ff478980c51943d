//! Small synthetic data sets shared by tests and benchmarks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::geometry::{point, Point};
use crate::measurement::MeasurementBatch;

/// Straight wall along `y = 0` seen from `+y`: one surface measurement every
/// `spacing` meters in `[x0, x1]` (with Gaussian noise on its `y`), each
/// followed by an auxiliary measurement `aux_offset` in front of it.
pub fn wall_batch(
    x0: f64,
    x1: f64,
    spacing: f64,
    noise_sigma: f64,
    aux_offset: f64,
    seed: u64,
) -> MeasurementBatch {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, noise_sigma.max(0.0)).expect("finite sigma");
    let mut batch = MeasurementBatch::new();
    let n = ((x1 - x0) / spacing).floor() as usize;
    for i in 0..=n {
        let x = x0 + i as f64 * spacing;
        let y = if noise_sigma > 0.0 { noise.sample(&mut rng) } else { 0.0 };
        batch.push_surface(point(x, y));
        batch.push_auxiliary(point(x, y + aux_offset), aux_offset);
    }
    batch
}

/// `per_blob` Gaussian samples around each center.
pub fn blobs(centers: &[Point], per_blob: usize, spread: f64, seed: u64) -> Vec<Point> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, spread).expect("finite spread");
    centers
        .iter()
        .flat_map(|c| {
            (0..per_blob)
                .map(|_| point(c.x + normal.sample(&mut rng), c.y + normal.sample(&mut rng)))
                .collect::<Vec<_>>()
        })
        .collect()
}

/// Uniform points in `[0, extent]²` with pairwise distance at least
/// `min_dist` (rejection sampling, may return fewer than `n`).
pub fn spread_points(n: usize, extent: f64, min_dist: f64, seed: u64) -> Vec<Point> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pts: Vec<Point> = Vec::with_capacity(n);
    let mut tries = 0;
    while pts.len() < n && tries < 100 * n {
        tries += 1;
        let p = point(rng.random_range(0.0..extent), rng.random_range(0.0..extent));
        if pts.iter().all(|q| (p - q).norm() >= min_dist) {
            pts.push(p);
        }
    }
    pts
}

/// Random scalar targets in `[-amp, amp]` at the given locations.
pub fn random_values(locations: &[Point], amp: f64, seed: u64) -> MeasurementBatch {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    MeasurementBatch::from_pairs(locations.iter().map(|p| (*p, rng.random_range(-amp..amp))))
}
