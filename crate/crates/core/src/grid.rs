//! Regular grids of signed distance values and their text format.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{point, Point};

/// Cell `(i, j)` (column, row) has its center at
/// `origin + ((i + 0.5) * resolution, (j + 0.5) * resolution)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub origin: [f64; 2],
    #[serde(default = "default_resolution")]
    pub resolution: f64,
    pub width: usize,
    pub height: usize,
}

fn default_resolution() -> f64 {
    0.1
}

impl GridSpec {
    pub fn new(origin: [f64; 2], resolution: f64, width: usize, height: usize) -> Result<Self> {
        let g = GridSpec {
            origin,
            resolution,
            width,
            height,
        };
        g.validate()?;
        Ok(g)
    }

    /// Smallest grid at `resolution` covering `[min, max]`.
    pub fn covering(min: [f64; 2], max: [f64; 2], resolution: f64) -> Result<Self> {
        let w = ((max[0] - min[0]) / resolution - 1e-9).ceil().max(1.0) as usize;
        let h = ((max[1] - min[1]) / resolution - 1e-9).ceil().max(1.0) as usize;
        GridSpec::new(min, resolution, w, h)
    }

    /// Grid covering `[min, max]` whose cell centers lie on integer
    /// multiples of `resolution`, so features at round coordinates fall on
    /// cell centers rather than cell edges.
    pub fn lattice_covering(min: [f64; 2], max: [f64; 2], resolution: f64) -> Result<Self> {
        let first = |v: f64| (v / resolution + 1e-9).floor();
        let last = |v: f64| (v / resolution - 1e-9).ceil();
        let count = |a: f64, b: f64| (last(b) - first(a)).max(0.0) as usize + 1;
        let origin = [
            (first(min[0]) - 0.5) * resolution,
            (first(min[1]) - 0.5) * resolution,
        ];
        GridSpec::new(origin, resolution, count(min[0], max[0]), count(min[1], max[1]))
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.resolution > 0.0 && self.resolution.is_finite()) {
            return Err(Error::Precondition(format!(
                "grid resolution must be positive, got {}",
                self.resolution
            )));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::Precondition("grid must have at least one cell".into()));
        }
        if !self.origin.iter().all(|v| v.is_finite()) {
            return Err(Error::Precondition("grid origin must be finite".into()));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.width * self.height
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn center(&self, i: usize, j: usize) -> Point {
        point(
            self.origin[0] + (i as f64 + 0.5) * self.resolution,
            self.origin[1] + (j as f64 + 0.5) * self.resolution,
        )
    }

    /// All cell centers, row-major with row 0 at the lowest `y`.
    pub fn centers(&self) -> Vec<Point> {
        (0..self.height)
            .flat_map(|j| (0..self.width).map(move |i| (i, j)))
            .map(|(i, j)| self.center(i, j))
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SdfGrid {
    spec: GridSpec,
    values: Vec<f64>,
}

impl SdfGrid {
    pub fn new(spec: GridSpec, values: Vec<f64>) -> Result<Self> {
        spec.validate()?;
        if values.len() != spec.len() {
            return Err(Error::Precondition(format!(
                "grid needs {} values, got {}",
                spec.len(),
                values.len()
            )));
        }
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Precondition(format!("grid value {k} is not finite")));
        }
        Ok(SdfGrid { spec, values })
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[j * self.spec.width + i]
    }

    pub fn to_text(&self) -> String {
        let g = &self.spec;
        let mut s = format!(
            "{} {} {} {} {}\n",
            g.origin[0], g.origin[1], g.resolution, g.width, g.height
        );
        for row in self.values.chunks(g.width) {
            for (k, v) in row.iter().enumerate() {
                if k > 0 {
                    s.push(' ');
                }
                write!(s, "{v}").expect("writing to a string");
            }
            s.push('\n');
        }
        s
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let err = |line: usize, message: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            message,
        };
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (n0, header) = lines.next().ok_or_else(|| err(1, "empty grid file".into()))?;
        let h: Vec<&str> = header.split_whitespace().collect();
        if h.len() != 5 {
            return Err(err(n0 + 1, format!("expected 5 header fields, got {}", h.len())));
        }
        let num = |s: &str| s.parse::<f64>().map_err(|e| err(n0 + 1, format!("{s:?}: {e}")));
        let count = |s: &str| s.parse::<usize>().map_err(|e| err(n0 + 1, format!("{s:?}: {e}")));
        let spec = GridSpec {
            origin: [num(h[0])?, num(h[1])?],
            resolution: num(h[2])?,
            width: count(h[3])?,
            height: count(h[4])?,
        };
        spec.validate().map_err(|e| err(n0 + 1, e.to_string()))?;
        let mut values = Vec::with_capacity(spec.len());
        let mut rows = 0;
        for (n, line) in lines {
            let before = values.len();
            for tok in line.split_whitespace() {
                values.push(tok.parse::<f64>().map_err(|e| err(n + 1, format!("{tok:?}: {e}")))?);
            }
            if values.len() - before != spec.width {
                return Err(err(
                    n + 1,
                    format!("expected {} values, got {}", spec.width, values.len() - before),
                ));
            }
            rows += 1;
        }
        if rows != spec.height {
            return Err(err(n0 + 1, format!("expected {} rows, got {rows}", spec.height)));
        }
        SdfGrid::new(spec, values).map_err(|e| err(n0 + 1, e.to_string()))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        SdfGrid::parse(&text, path)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }
}
