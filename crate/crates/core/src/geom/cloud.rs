//! Point cloud container, ASCII XYZ I/O and voxel-grid downsampling.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geom::transform::{RigidTransform, Vec3};

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PointCloud {
    pub points: Vec<Vec3>,
    /// Sensor position, expressed in the same frame as `points`.
    pub sensor_origin: Vec3,
}

impl PointCloud {
    /// Builds a cloud, rejecting non-finite coordinates.
    pub fn new(points: Vec<Vec3>) -> Result<Self> {
        Self::with_origin(points, Vec3::zeros())
    }

    pub fn with_origin(points: Vec<Vec3>, sensor_origin: Vec3) -> Result<Self> {
        if let Some(index) = points
            .iter()
            .position(|p| !p.iter().all(|v| v.is_finite()))
        {
            return Err(Error::NonFinite { index });
        }
        if !sensor_origin.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite sensor origin".into()));
        }
        Ok(Self {
            points,
            sensor_origin,
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Applies `t` to every point and to the sensor origin.
    pub fn transformed(&self, t: &RigidTransform) -> PointCloud {
        PointCloud {
            points: t.apply_all(&self.points),
            sensor_origin: t.apply(&self.sensor_origin),
        }
    }

    pub fn centroid(&self) -> Option<Vec3> {
        if self.points.is_empty() {
            return None;
        }
        let sum: Vec3 = self.points.iter().sum();
        Some(sum / self.points.len() as f64)
    }

    /// Axis-aligned bounding box `(min, max)`.
    pub fn bounds(&self) -> Option<(Vec3, Vec3)> {
        let first = *self.points.first()?;
        Some(self.points.iter().fold((first, first), |(lo, hi), p| {
            (lo.inf(p), hi.sup(p))
        }))
    }

    /// Reads the ASCII XYZ format: one `x y z` triple per line, `#` starts a comment.
    pub fn read_xyz(path: impl AsRef<Path>) -> Result<PointCloud> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_xyz(&text).map_err(|(line, msg)| Error::Parse {
            path: path.to_path_buf(),
            line,
            msg,
        })
    }

    pub fn parse_xyz(text: &str) -> std::result::Result<PointCloud, (usize, String)> {
        let mut points = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let vals: Vec<f64> = line
                .split_whitespace()
                .map(|tok| tok.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| (lineno + 1, e.to_string()))?;
            if vals.len() != 3 {
                return Err((lineno + 1, format!("expected 3 values, got {}", vals.len())));
            }
            let p = Vec3::new(vals[0], vals[1], vals[2]);
            if !p.iter().all(|v| v.is_finite()) {
                return Err((lineno + 1, "non-finite coordinate".into()));
            }
            points.push(p);
        }
        Ok(PointCloud {
            points,
            sensor_origin: Vec3::zeros(),
        })
    }

    pub fn to_xyz_string(&self) -> String {
        let mut out = String::with_capacity(self.points.len() * 40);
        for p in &self.points {
            let _ = writeln!(
                out,
                "{} {} {}",
                sig9(p.x),
                sig9(p.y),
                sig9(p.z)
            );
        }
        out
    }

    pub fn write_xyz(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        crate::io::write_atomic(path, self.to_xyz_string().as_bytes())
    }

    /// Rounds every coordinate to the precision the XYZ writer emits, so that
    /// a write/read cycle reproduces the cloud exactly.
    pub fn quantized(&self) -> PointCloud {
        PointCloud {
            points: self
                .points
                .iter()
                .map(|p| p.map(round_sig9))
                .collect(),
            sensor_origin: self.sensor_origin,
        }
    }

    /// Replaces the points of every occupied voxel by their centroid. Output
    /// order follows the voxel key order, so it is deterministic.
    pub fn voxel_downsample(&self, voxel: f64) -> Result<PointCloud> {
        if !(voxel > 0.0) {
            return Err(Error::InvalidArgument("voxel size must be positive".into()));
        }
        let mut cells: BTreeMap<(i64, i64, i64), (Vec3, usize)> = BTreeMap::new();
        for p in &self.points {
            let key = (
                (p.x / voxel).floor() as i64,
                (p.y / voxel).floor() as i64,
                (p.z / voxel).floor() as i64,
            );
            let e = cells.entry(key).or_insert((Vec3::zeros(), 0));
            e.0 += p;
            e.1 += 1;
        }
        Ok(PointCloud {
            points: cells.values().map(|(s, n)| s / *n as f64).collect(),
            sensor_origin: self.sensor_origin,
        })
    }
}

/// Rounds to 9 significant digits.
pub fn round_sig9(v: f64) -> f64 {
    if v == 0.0 || !v.is_finite() {
        return v;
    }
    format!("{v:.8e}").parse().unwrap_or(v)
}

fn sig9(v: f64) -> String {
    let r = round_sig9(v);
    if r == 0.0 {
        "0".to_string()
    } else {
        format!("{r}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn parse_skips_comments_and_blank_lines() {
        let text = "# header\n1 2 3\n\n  4.5 -6 7e-1 # trailing\n";
        let c = PointCloud::parse_xyz(text).unwrap();
        assert_eq!(c.points, vec![Vec3::new(1.0, 2.0, 3.0), Vec3::new(4.5, -6.0, 0.7)]);
    }

    #[test]
    fn parse_rejects_short_lines() {
        assert_eq!(PointCloud::parse_xyz("1 2\n").unwrap_err().0, 1);
        assert!(PointCloud::parse_xyz("1 2 nan\n").is_err());
    }

    #[test]
    fn rejects_non_finite_points() {
        let err = PointCloud::new(vec![Vec3::zeros(), Vec3::new(f64::INFINITY, 0.0, 0.0)]);
        assert!(matches!(err, Err(Error::NonFinite { index: 1 })));
    }

    #[test]
    fn writer_emits_nine_significant_digits() {
        let c = PointCloud::new(vec![Vec3::new(1.0 / 3.0, -123456.789012, 0.0)]).unwrap();
        assert_eq!(c.to_xyz_string(), "0.333333333 -123456.789 0\n");
    }

    #[test]
    fn voxel_downsample_takes_centroids() {
        let c = PointCloud::new(vec![
            Vec3::new(0.1, 0.1, 0.1),
            Vec3::new(0.3, 0.3, 0.3),
            Vec3::new(1.2, 0.1, 0.1),
        ])
        .unwrap();
        let d = c.voxel_downsample(0.5).unwrap();
        assert_eq!(d.len(), 2);
        assert!((d.points[0] - Vec3::new(0.2, 0.2, 0.2)).norm() < 1e-12);
        assert!((d.points[1] - Vec3::new(1.2, 0.1, 0.1)).norm() < 1e-12);
    }

    proptest! {
        #[test]
        fn quantized_cloud_survives_text_roundtrip(
            pts in prop::collection::vec(prop::array::uniform3(-1e4..1e4f64), 0..50)
        ) {
            let c = PointCloud::new(pts.iter().map(|a| Vec3::new(a[0], a[1], a[2])).collect())
                .unwrap()
                .quantized();
            let back = PointCloud::parse_xyz(&c.to_xyz_string()).unwrap();
            prop_assert_eq!(back.points, c.points);
        }
    }
}
