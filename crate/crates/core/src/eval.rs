//! Map prediction on grids, surface metrics and PPM rendering.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::ensemble::Ensemble;
use crate::error::{Error, Result};
use crate::geometry::{dist2, Point};
use crate::grid::{GridSpec, SdfGrid};
use crate::partition::ExpertId;

/// Cells whose predicted value lies within this band count as surface.
pub const SURFACE_BAND: f64 = 0.02;

/// Renders are clamped to `[-RENDER_TRUNCATION, RENDER_TRUNCATION]`.
pub const RENDER_TRUNCATION: f64 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PredictMode {
    Individual,
    Mixture,
}

pub fn predict_grid(ens: &Ensemble, spec: &GridSpec, mode: PredictMode) -> Result<SdfGrid> {
    let xs = spec.centers();
    let values = match mode {
        PredictMode::Individual => ens.predict_individual(&xs),
        PredictMode::Mixture => ens.predict_mixture(&xs),
    };
    SdfGrid::new(*spec, values).map_err(|e| Error::Numerical(format!("map prediction: {e}")))
}

fn same_spec(a: &SdfGrid, b: &SdfGrid) -> Result<()> {
    if a.spec() != b.spec() {
        return Err(Error::Precondition(format!(
            "grid specs differ: {:?} vs {:?}",
            a.spec(),
            b.spec()
        )));
    }
    Ok(())
}

/// Root mean square of the ground truth over cells predicted as surface.
/// `None` when no cell is in the surface band.
pub fn rmsd(pred: &SdfGrid, gt: &SdfGrid) -> Result<Option<f64>> {
    same_spec(pred, gt)?;
    let (sum, n) = pred
        .values()
        .iter()
        .zip(gt.values())
        .filter(|(p, _)| p.abs() <= SURFACE_BAND)
        .fold((0.0, 0usize), |(s, n), (_, g)| (s + g * g, n + 1));
    Ok((n > 0).then(|| (sum / n as f64).sqrt()))
}

/// Centers of cells predicted as surface.
pub fn predicted_surface(pred: &SdfGrid) -> Vec<Point> {
    let spec = pred.spec();
    let mut out = Vec::new();
    for j in 0..spec.height {
        for i in 0..spec.width {
            if pred.get(i, j).abs() <= SURFACE_BAND {
                out.push(spec.center(i, j));
            }
        }
    }
    out
}

/// Centers of cells touched by the true surface: the value changes sign
/// against a 4-neighbor, or lies within half a cell of zero.
pub fn true_surface(gt: &SdfGrid) -> Vec<Point> {
    let spec = gt.spec();
    let half = spec.resolution / 2.0;
    let (w, h) = (spec.width, spec.height);
    let mut out = Vec::new();
    for j in 0..h {
        for i in 0..w {
            let v = gt.get(i, j);
            let mut hit = v.abs() <= half;
            let mut check = |a: usize, b: usize| {
                let u = gt.get(a, b);
                if (v > 0.0 && u <= 0.0) || (v < 0.0 && u >= 0.0) || (v == 0.0 && u != 0.0) {
                    hit = true;
                }
            };
            if i > 0 {
                check(i - 1, j);
            }
            if i + 1 < w {
                check(i + 1, j);
            }
            if j > 0 {
                check(i, j - 1);
            }
            if j + 1 < h {
                check(i, j + 1);
            }
            if hit {
                out.push(spec.center(i, j));
            }
        }
    }
    out
}

/// Symmetric Hausdorff distance between two point sets, `None` if either is
/// empty.
pub fn hausdorff_sets(a: &[Point], b: &[Point]) -> Option<f64> {
    if a.is_empty() || b.is_empty() {
        return None;
    }
    let directed = |from: &[Point], to: &[Point]| {
        from.iter()
            .map(|p| to.iter().map(|q| dist2(p, q)).fold(f64::INFINITY, f64::min))
            .fold(0.0, f64::max)
    };
    Some(directed(a, b).max(directed(b, a)).sqrt())
}

pub fn hausdorff(pred: &SdfGrid, gt: &SdfGrid) -> Result<Option<f64>> {
    same_spec(pred, gt)?;
    Ok(hausdorff_sets(&predicted_surface(pred), &true_surface(gt)))
}

/// Blue (negative) to white (zero) to red (positive), clamped at the
/// truncation distance. The surface band is pure white.
pub fn colormap(v: f64) -> [u8; 3] {
    if v.abs() <= SURFACE_BAND {
        return [255, 255, 255];
    }
    let u = (v / RENDER_TRUNCATION).clamp(-1.0, 1.0);
    let fade = (255.0 * (1.0 - u.abs())).round() as u8;
    if u > 0.0 {
        [255, fade, fade]
    } else {
        [fade, fade, 255]
    }
}

/// Deterministic display color for an expert.
pub fn expert_color(id: ExpertId) -> [u8; 3] {
    let mut z = id.0.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^= z >> 31;
    // keep colors away from white so dots stay visible
    let c = |shift: u32| 40 + ((z >> shift) & 0xff) as u8 % 160;
    [c(0), c(8), c(16)]
}

/// RGB image with row 0 at the top (highest `y`).
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<[u8; 3]>,
}

impl Image {
    pub fn from_grid(grid: &SdfGrid) -> Image {
        let spec = grid.spec();
        let mut pixels = Vec::with_capacity(spec.len());
        for row in (0..spec.height).rev() {
            for i in 0..spec.width {
                pixels.push(colormap(grid.get(i, row)));
            }
        }
        Image {
            width: spec.width,
            height: spec.height,
            pixels,
        }
    }

    /// Marks the pixel containing each point. Returns how many points fell
    /// inside the image.
    pub fn overlay(&mut self, spec: &GridSpec, dots: &[(Point, [u8; 3])]) -> usize {
        let mut drawn = 0;
        for (p, color) in dots {
            let fx = (p.x - spec.origin[0]) / spec.resolution;
            let fy = (p.y - spec.origin[1]) / spec.resolution;
            if fx < 0.0 || fy < 0.0 {
                continue;
            }
            let (i, j) = (fx as usize, fy as usize);
            if i >= self.width || j >= self.height {
                continue;
            }
            let row = self.height - 1 - j;
            self.pixels[row * self.width + i] = *color;
            drawn += 1;
        }
        drawn
    }

    pub fn to_ppm(&self) -> Vec<u8> {
        let mut out = format!("P6 {} {} 255\n", self.width, self.height).into_bytes();
        out.reserve(self.pixels.len() * 3);
        for px in &self.pixels {
            out.extend_from_slice(px);
        }
        out
    }

    pub fn write_ppm(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&self.to_ppm()).map_err(|e| Error::io(path, e))
    }
}

/// Primary PIs of every expert, colored per expert.
pub fn pi_dots(ens: &Ensemble) -> Vec<(Point, [u8; 3])> {
    ens.experts()
        .flat_map(|e| {
            let c = expert_color(e.id());
            e.primary_pis().into_iter().map(move |p| (p, c))
        })
        .collect()
}
