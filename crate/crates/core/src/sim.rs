//! Polygon worlds, simulated laser scans and exact ground-truth SDF grids.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{dist, point, ray_segment, segment_distance, segments_intersect, Point, Vector};
use crate::grid::{GridSpec, SdfGrid};
use crate::ingest::Scan;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    /// Boundary enclosing free space, counterclockwise.
    Outer,
    Obstacle,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Polygon {
    pub role: Role,
    pub points: Vec<[f64; 2]>,
}

impl Polygon {
    fn vertices(&self) -> Vec<Point> {
        self.points.iter().map(|p| point(p[0], p[1])).collect()
    }

    fn signed_area(&self) -> f64 {
        let v = self.vertices();
        let n = v.len();
        (0..n).map(|i| v[i].x * v[(i + 1) % n].y - v[(i + 1) % n].x * v[i].y).sum::<f64>() / 2.0
    }

    /// Even-odd point containment.
    fn contains(&self, p: &Point) -> bool {
        let v = self.vertices();
        let n = v.len();
        let mut inside = false;
        for i in 0..n {
            let (a, b) = (v[i], v[(i + 1) % n]);
            if (a.y > p.y) != (b.y > p.y) {
                let x = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
                if p.x < x {
                    inside = !inside;
                }
            }
        }
        inside
    }

    fn is_simple(&self) -> bool {
        let v = self.vertices();
        let n = v.len();
        for i in 0..n {
            for j in (i + 1)..n {
                let adjacent = j == i + 1 || (i == 0 && j == n - 1);
                if adjacent {
                    continue;
                }
                if segments_intersect(&v[i], &v[(i + 1) % n], &v[j], &v[(j + 1) % n]) {
                    return false;
                }
            }
        }
        true
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct World {
    pub polygons: Vec<Polygon>,
}

impl World {
    /// Axis-aligned square room of side `side` centered at the origin.
    pub fn square_room(side: f64) -> World {
        let h = side / 2.0;
        World {
            polygons: vec![Polygon {
                role: Role::Outer,
                points: vec![[-h, -h], [h, -h], [h, h], [-h, h]],
            }],
        }
    }

    pub fn validate(&self) -> Result<()> {
        let outers = self.polygons.iter().filter(|p| p.role == Role::Outer).count();
        if outers > 1 {
            return Err(Error::Precondition(format!("world has {outers} outer boundaries")));
        }
        for (k, poly) in self.polygons.iter().enumerate() {
            if poly.points.len() < 3 {
                return Err(Error::Precondition(format!("polygon {k} has fewer than 3 vertices")));
            }
            if poly.points.iter().flatten().any(|v| !v.is_finite()) {
                return Err(Error::Precondition(format!("polygon {k} has a non-finite vertex")));
            }
            if !poly.is_simple() {
                return Err(Error::Precondition(format!("polygon {k} is not simple")));
            }
            if poly.role == Role::Outer && poly.signed_area() <= 0.0 {
                return Err(Error::Precondition(format!("outer polygon {k} is not counterclockwise")));
            }
        }
        Ok(())
    }

    pub fn read(path: &Path) -> Result<World> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let w: World = serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: e.line(),
            message: e.to_string(),
        })?;
        w.validate()?;
        Ok(w)
    }

    pub fn segments(&self) -> Vec<(Point, Point)> {
        self.polygons
            .iter()
            .flat_map(|poly| {
                let v = poly.vertices();
                let n = v.len();
                (0..n).map(move |i| (v[i], v[(i + 1) % n]))
            })
            .collect()
    }

    /// Inside the outer boundary (if any) and outside every obstacle.
    pub fn is_free(&self, p: &Point) -> bool {
        self.polygons.iter().all(|poly| match poly.role {
            Role::Outer => poly.contains(p),
            Role::Obstacle => !poly.contains(p),
        })
    }

    /// Exact signed Euclidean distance, positive in free space.
    pub fn signed_distance(&self, p: &Point) -> f64 {
        let d = self
            .segments()
            .iter()
            .map(|(a, b)| segment_distance(p, a, b))
            .fold(f64::INFINITY, f64::min);
        if self.is_free(p) {
            d
        } else {
            -d
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScanParams {
    pub angle_min: f64,
    pub angle_max: f64,
    pub angle_increment: f64,
    pub range_max: f64,
}

impl Default for ScanParams {
    fn default() -> Self {
        ScanParams {
            angle_min: (-135.0f64).to_radians(),
            angle_max: 135.0f64.to_radians(),
            angle_increment: 1.0f64.to_radians(),
            range_max: 30.0,
        }
    }
}

impl ScanParams {
    pub fn ray_count(&self) -> usize {
        ((self.angle_max - self.angle_min) / self.angle_increment + 1e-9).floor() as usize + 1
    }
}

/// Simulated scan from `pose = [x, y, heading]`. Range noise for ray `r` of
/// scan `scan_index` is drawn from its own ChaCha stream, so every range
/// depends only on `(seed, scan_index, r)`.
pub fn raycast(
    world: &World,
    pose: [f64; 3],
    params: &ScanParams,
    noise_sigma: f64,
    seed: u64,
    scan_index: u32,
) -> Result<Scan> {
    let origin = point(pose[0], pose[1]);
    if !world.is_free(&origin) {
        return Err(Error::Precondition(format!(
            "pose ({}, {}) is not in free space",
            pose[0], pose[1]
        )));
    }
    let noise = Normal::new(0.0, noise_sigma)
        .map_err(|e| Error::Precondition(format!("noise sigma {noise_sigma}: {e}")))?;
    let segments = world.segments();
    let ranges = (0..params.ray_count())
        .map(|r| {
            let a = pose[2] + params.angle_min + r as f64 * params.angle_increment;
            let dir = Vector::new(a.cos(), a.sin());
            let hit = segments
                .iter()
                .filter_map(|(p, q)| ray_segment(&origin, &dir, p, q))
                .fold(f64::INFINITY, f64::min);
            if hit > params.range_max {
                return params.range_max;
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(((scan_index as u64) << 32) | r as u64);
            let eps = if noise_sigma > 0.0 { noise.sample(&mut rng) } else { 0.0 };
            (hit + eps).clamp(f64::MIN_POSITIVE, params.range_max)
        })
        .collect();
    Ok(Scan {
        t: 0.0,
        pose,
        angle_min: params.angle_min,
        angle_increment: params.angle_increment,
        range_max: params.range_max,
        ranges,
    })
}

pub fn ground_truth_sdf(world: &World, spec: &GridSpec) -> Result<SdfGrid> {
    let values = spec.centers().par_iter().map(|c| world.signed_distance(c)).collect();
    SdfGrid::new(*spec, values)
}

/// Poses every `speed / scan_rate` meters along the waypoint polyline,
/// heading along the direction of travel.
pub fn trajectory(waypoints: &[[f64; 2]], speed: f64, scan_rate: f64) -> Result<Vec<(f64, [f64; 3])>> {
    if waypoints.is_empty() {
        return Err(Error::Precondition("trajectory needs at least one waypoint".into()));
    }
    if !(speed > 0.0 && scan_rate > 0.0) {
        return Err(Error::Precondition("speed and scan rate must be positive".into()));
    }
    let pts: Vec<Point> = waypoints.iter().map(|w| point(w[0], w[1])).collect();
    let segs: Vec<(Point, Point, f64)> = pts
        .windows(2)
        .map(|w| (w[0], w[1], dist(&w[0], &w[1])))
        .filter(|s| s.2 > 0.0)
        .collect();
    if segs.is_empty() {
        return Ok(vec![(0.0, [pts[0].x, pts[0].y, 0.0])]);
    }
    let total: f64 = segs.iter().map(|s| s.2).sum();
    let step = speed / scan_rate;
    let n = (total / step + 1e-9).floor() as usize + 1;
    let mut poses = Vec::with_capacity(n);
    let mut k = 0;
    let mut start = 0.0;
    for i in 0..n {
        let s = (i as f64 * step).min(total);
        while k + 1 < segs.len() && s >= start + segs[k].2 {
            start += segs[k].2;
            k += 1;
        }
        let (a, b, len) = segs[k];
        let u = ((s - start) / len).clamp(0.0, 1.0);
        let p = a + (b - a) * u;
        let heading = (b.y - a.y).atan2(b.x - a.x);
        poses.push((i as f64 / scan_rate, [p.x, p.y, heading]));
    }
    Ok(poses)
}

/// Scans along a waypoint path. Fails if a waypoint lies outside free space
/// or a path segment crosses a wall.
pub fn generate_dataset(
    world: &World,
    waypoints: &[[f64; 2]],
    speed: f64,
    scan_rate: f64,
    params: &ScanParams,
    noise_sigma: f64,
    seed: u64,
) -> Result<Vec<Scan>> {
    world.validate()?;
    let pts: Vec<Point> = waypoints.iter().map(|w| point(w[0], w[1])).collect();
    if let Some(k) = pts.iter().position(|p| !world.is_free(p)) {
        return Err(Error::Precondition(format!("waypoint {k} is not in free space")));
    }
    let walls = world.segments();
    for (k, w) in pts.windows(2).enumerate() {
        if walls.iter().any(|(a, b)| segments_intersect(&w[0], &w[1], a, b)) {
            return Err(Error::Precondition(format!(
                "path segment {k} ({}, {}) -> ({}, {}) leaves free space",
                w[0].x, w[0].y, w[1].x, w[1].y
            )));
        }
    }
    let poses = trajectory(waypoints, speed, scan_rate)?;
    poses
        .par_iter()
        .enumerate()
        .map(|(i, (t, pose))| {
            let mut s = raycast(world, *pose, params, noise_sigma, seed, i as u32)?;
            s.t = *t;
            Ok(s)
        })
        .collect()
}
