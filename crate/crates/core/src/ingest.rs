//! Posed range scans and their conversion to SDF measurements.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::geometry::point;
use crate::measurement::MeasurementBatch;

/// Rays with a range at or above `range_max - MAX_RANGE_EPS` are treated as
/// max-range returns.
pub const MAX_RANGE_EPS: f64 = 1e-6;

/// One posed laser scan. `pose` is `[x, y, heading]`; ray `i` points along
/// `heading + angle_min + i * angle_increment`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scan {
    pub t: f64,
    pub pose: [f64; 3],
    pub angle_min: f64,
    pub angle_increment: f64,
    pub range_max: f64,
    #[serde(serialize_with = "ser_ranges", deserialize_with = "de_ranges")]
    pub ranges: Vec<f64>,
}

// JSON has no NaN, so non-finite ranges travel as null.
fn ser_ranges<S: Serializer>(ranges: &[f64], s: S) -> std::result::Result<S::Ok, S::Error> {
    s.collect_seq(ranges.iter().map(|r| r.is_finite().then_some(*r)))
}

fn de_ranges<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Vec<f64>, D::Error> {
    let raw: Vec<Option<f64>> = Vec::deserialize(d)?;
    Ok(raw.into_iter().map(|r| r.unwrap_or(f64::NAN)).collect())
}

impl Scan {
    pub fn validate(&self) -> Result<()> {
        if self.ranges.is_empty() {
            return Err(Error::Precondition("scan has no rays".into()));
        }
        if self.angle_increment.is_nan() || self.angle_increment <= 0.0 {
            return Err(Error::Precondition(format!(
                "angle_increment must be positive, got {}",
                self.angle_increment
            )));
        }
        Ok(())
    }
}

/// Measurements from one scan plus the number of rays skipped for a
/// non-finite range.
#[derive(Clone, Debug, Default)]
pub struct Converted {
    pub batch: MeasurementBatch,
    pub skipped: usize,
}

/// Each valid return yields a surface point with value 0 and an auxiliary
/// point `aux_offset` before it along the ray with value `aux_offset`.
pub fn scan_to_measurements(scan: &Scan, aux_offset: f64) -> Converted {
    let [px, py, heading] = scan.pose;
    let mut out = Converted::default();
    for (i, &r) in scan.ranges.iter().enumerate() {
        if !r.is_finite() {
            out.skipped += 1;
            continue;
        }
        if r >= scan.range_max - MAX_RANGE_EPS || r <= 0.0 {
            continue;
        }
        let a = heading + scan.angle_min + i as f64 * scan.angle_increment;
        let (s, c) = a.sin_cos();
        out.batch.push_surface(point(px + r * c, py + r * s));
        let ra = r - aux_offset;
        out.batch.push_auxiliary(point(px + ra * c, py + ra * s), aux_offset);
    }
    out
}

/// Reads a JSON-lines scan log, keeping every `stride`-th scan starting with
/// the first. Blank lines are ignored.
pub fn read_scan_log(path: &Path, stride: usize) -> Result<Vec<Scan>> {
    let stride = stride.max(1);
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut scans = Vec::new();
    let mut index = 0usize;
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line: n + 1,
            message,
        };
        let scan: Scan = serde_json::from_str(&line).map_err(|e| parse_err(e.to_string()))?;
        scan.validate().map_err(|e| parse_err(e.to_string()))?;
        if index.is_multiple_of(stride) {
            scans.push(scan);
        }
        index += 1;
    }
    Ok(scans)
}

pub fn write_scan_log(path: &Path, scans: &[Scan]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for s in scans {
        serde_json::to_writer(&mut w, s)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::dist;
    use crate::measurement::MeasurementKind;
    use proptest::prelude::*;

    fn scan(pose: [f64; 3], ranges: Vec<f64>) -> Scan {
        Scan {
            t: 0.0,
            pose,
            angle_min: 0.0,
            angle_increment: 0.1,
            range_max: 30.0,
            ranges,
        }
    }

    #[test]
    fn single_ray_at_origin() {
        let c = scan_to_measurements(&scan([0.0, 0.0, 0.0], vec![2.0]), 0.1);
        let b = c.batch;
        assert_eq!(b.len(), 2);
        let (s, v, k) = b.get(0);
        assert_eq!((s.x, s.y, v, k), (2.0, 0.0, 0.0, MeasurementKind::Surface));
        let (a, v, k) = b.get(1);
        assert!((a.x - 1.9).abs() < 1e-12 && a.y == 0.0);
        assert_eq!((v, k), (0.1, MeasurementKind::Auxiliary));
    }

    #[test]
    fn max_range_and_nan_dropped() {
        let c = scan_to_measurements(&scan([0.0, 0.0, 0.0], vec![30.0, f64::NAN]), 0.1);
        assert!(c.batch.is_empty());
        assert_eq!(c.skipped, 1);
    }

    #[test]
    fn rigid_transform() {
        let c = scan_to_measurements(&scan([1.0, 1.0, std::f64::consts::FRAC_PI_2], vec![1.0]), 0.1);
        let p = c.batch.locations()[0];
        assert!((p.x - 1.0).abs() < 1e-12 && (p.y - 2.0).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn aux_points_on_ray(x in -5.0..5.0f64, y in -5.0..5.0f64, h in -3.2..3.2f64,
                             ranges in proptest::collection::vec(0.2..29.0f64, 1..20)) {
            let s = Scan { angle_min: -2.0, angle_increment: 0.05, ..scan([x, y, h], ranges) };
            let b = scan_to_measurements(&s, 0.1).batch;
            let o = point(x, y);
            for k in (0..b.len()).step_by(2) {
                let (sp, ap) = (b.locations()[k], b.locations()[k + 1]);
                prop_assert!((dist(&sp, &ap) - 0.1).abs() < 1e-9);
                prop_assert!((dist(&o, &ap) + dist(&ap, &sp) - dist(&o, &sp)).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn log_round_trip_and_stride() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("scans.jsonl");
        let scans: Vec<Scan> = (0..250)
            .map(|i| Scan { t: i as f64 * 0.1, ..scan([0.1 * i as f64, -0.3, 0.01], vec![1.0 / 3.0, f64::NAN, 2.5]) })
            .collect();
        write_scan_log(&path, &scans).unwrap();
        let back = read_scan_log(&path, 1).unwrap();
        assert_eq!(back.len(), 250);
        for (a, b) in scans.iter().zip(&back) {
            assert_eq!(a.pose, b.pose);
            assert_eq!(a.ranges[0], b.ranges[0]);
            assert!(b.ranges[1].is_nan());
        }
        let strided = read_scan_log(&path, 100).unwrap();
        let ts: Vec<f64> = strided.iter().map(|s| s.t).collect();
        assert_eq!(ts, vec![0.0, 10.0, 20.0]);
    }

    #[test]
    fn empty_and_malformed_logs() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.jsonl");
        std::fs::write(&path, "").unwrap();
        assert!(read_scan_log(&path, 1).unwrap().is_empty());
        let good = serde_json::to_string(&scan([0.0, 0.0, 0.0], vec![1.0])).unwrap();
        std::fs::write(&path, format!("{good}\n{good}\n{{\"t\": 1}}\n")).unwrap();
        match read_scan_log(&path, 1) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected a parse error, got {other:?}"),
        }
        std::fs::write(&path, format!("{good}\n{good}\n{good}\n")).unwrap();
        assert_eq!(read_scan_log(&path, 1).unwrap().len(), 3);
    }
}
