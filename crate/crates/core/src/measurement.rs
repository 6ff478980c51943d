//! Signed-distance training data extracted from range scans.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Point;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MeasurementKind {
    /// A range return, target value 0.
    Surface,
    /// A point placed in front of a return along the ray, positive target.
    Auxiliary,
}

/// Locations and signed-distance targets from one scan.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct MeasurementBatch {
    locations: Vec<Point>,
    values: Vec<f64>,
    kinds: Vec<MeasurementKind>,
}

impl MeasurementBatch {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_parts(
        locations: Vec<Point>,
        values: Vec<f64>,
        kinds: Vec<MeasurementKind>,
    ) -> Result<Self> {
        if locations.len() != values.len() || locations.len() != kinds.len() {
            return Err(Error::Precondition(format!(
                "batch length mismatch: {} locations, {} values, {} kinds",
                locations.len(),
                values.len(),
                kinds.len()
            )));
        }
        Ok(MeasurementBatch {
            locations,
            values,
            kinds,
        })
    }

    /// Batch of arbitrary (location, value) pairs, all tagged as surface data.
    /// Mostly useful for fixtures and oracle comparisons.
    pub fn from_pairs(pairs: impl IntoIterator<Item = (Point, f64)>) -> Self {
        let mut b = Self::new();
        for (p, v) in pairs {
            b.push(p, v, MeasurementKind::Surface);
        }
        b
    }

    pub fn push(&mut self, location: Point, value: f64, kind: MeasurementKind) {
        self.locations.push(location);
        self.values.push(value);
        self.kinds.push(kind);
    }

    pub fn push_surface(&mut self, location: Point) {
        self.push(location, 0.0, MeasurementKind::Surface);
    }

    pub fn push_auxiliary(&mut self, location: Point, offset: f64) {
        self.push(location, offset, MeasurementKind::Auxiliary);
    }

    pub fn len(&self) -> usize {
        self.locations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.locations.is_empty()
    }

    pub fn locations(&self) -> &[Point] {
        &self.locations
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn kinds(&self) -> &[MeasurementKind] {
        &self.kinds
    }

    pub fn get(&self, i: usize) -> (Point, f64, MeasurementKind) {
        (self.locations[i], self.values[i], self.kinds[i])
    }

    /// Sub-batch with the given entry indices, in that order.
    pub fn select(&self, indices: &[usize]) -> MeasurementBatch {
        MeasurementBatch {
            locations: indices.iter().map(|&i| self.locations[i]).collect(),
            values: indices.iter().map(|&i| self.values[i]).collect(),
            kinds: indices.iter().map(|&i| self.kinds[i]).collect(),
        }
    }

    pub fn extend_from(&mut self, other: &MeasurementBatch) {
        self.locations.extend_from_slice(&other.locations);
        self.values.extend_from_slice(&other.values);
        self.kinds.extend_from_slice(&other.kinds);
    }
}
