//! Procedural outdoor worlds and sensor-like surface sampling.

use rand::RngExt;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{PointCloud, RigidTransform, Vec3};

/// Points are accepted with probability `min(1, (FALLOFF_RADIUS / r)²)`
/// in range-falloff mode.
pub const FALLOFF_RADIUS: f64 = 5.0;

const GROUND_SHARE: f64 = 0.35;
const STRUCTURE_SHARE: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DensityMode {
    Uniform,
    RangeFalloff,
}

/// Yawed box standing on the ground plane.
#[derive(Debug, Clone, PartialEq)]
pub struct Cuboid {
    /// Centre of the footprint at `z = 0`.
    pub base: Vec3,
    pub half_extents: Vec3,
    pub yaw: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Blob {
    pub center: Vec3,
    pub sigma: f64,
}

/// Planar patch: `origin + u·a + v·b`, `(u, v) ∈ [0,1]²`, outward `normal`.
#[derive(Debug, Clone, Copy)]
struct Face {
    origin: Vec3,
    a: Vec3,
    b: Vec3,
    normal: Vec3,
    area: f64,
}

impl Cuboid {
    fn local_to_world(&self, p: Vec3) -> Vec3 {
        let (s, c) = self.yaw.sin_cos();
        Vec3::new(c * p.x - s * p.y, s * p.x + c * p.y, p.z) + self.base
    }

    fn contains_xy(&self, p: &Vec3) -> bool {
        let d = p - self.base;
        let (s, c) = self.yaw.sin_cos();
        let lx = c * d.x + s * d.y;
        let ly = -s * d.x + c * d.y;
        lx.abs() <= self.half_extents.x && ly.abs() <= self.half_extents.y
    }

    /// Four sides and the top.
    fn faces(&self) -> Vec<Face> {
        let h = self.half_extents;
        let corner = |x: f64, y: f64, z: f64| self.local_to_world(Vec3::new(x, y, z));
        let rot = |v: Vec3| {
            let (s, c) = self.yaw.sin_cos();
            Vec3::new(c * v.x - s * v.y, s * v.x + c * v.y, v.z)
        };
        let height = 2.0 * h.z;
        let mut out = Vec::with_capacity(5);
        let mut push = |origin: Vec3, a: Vec3, b: Vec3, normal: Vec3| {
            let area = a.cross(&b).norm();
            out.push(Face {
                origin,
                a,
                b,
                normal,
                area,
            });
        };
        let up = Vec3::new(0.0, 0.0, height);
        push(corner(h.x, -h.y, 0.0), rot(Vec3::new(0.0, 2.0 * h.y, 0.0)), up, rot(Vec3::x()));
        push(corner(-h.x, -h.y, 0.0), rot(Vec3::new(0.0, 2.0 * h.y, 0.0)), up, rot(-Vec3::x()));
        push(corner(-h.x, h.y, 0.0), rot(Vec3::new(2.0 * h.x, 0.0, 0.0)), up, rot(Vec3::y()));
        push(corner(-h.x, -h.y, 0.0), rot(Vec3::new(2.0 * h.x, 0.0, 0.0)), up, rot(-Vec3::y()));
        push(
            corner(-h.x, -h.y, height),
            rot(Vec3::new(2.0 * h.x, 0.0, 0.0)),
            rot(Vec3::new(0.0, 2.0 * h.y, 0.0)),
            Vec3::z(),
        );
        out
    }
}

/// One fixed surface sample of the world.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurfacePoint {
    pub position: Vec3,
    /// Outward normal for faces that can be back-facing.
    pub normal: Option<Vec3>,
    /// Lower values are kept first when a scan has more candidates than it needs.
    pub priority: f64,
    /// Uniform variate compared against the range-falloff acceptance.
    pub thinning: f64,
}

/// Ground plane `z = 0` plus boxes, walls and scattered clutter, with a fixed
/// pool of surface samples. Every scan observes a subset of the pool, so
/// scans taken from the same pose see the same surface points.
#[derive(Debug, Clone, PartialEq)]
pub struct World {
    pub cuboids: Vec<Cuboid>,
    pub blobs: Vec<Blob>,
    pub pool: Vec<SurfacePoint>,
}

/// Expected fraction of in-range points kept by the range-falloff thinning
/// for a sensor `height` above flat ground, over a disc of radius `range`.
pub fn falloff_acceptance(range: f64, height: f64) -> f64 {
    let steps = 2000;
    let mut acc = 0.0;
    for i in 0..steps {
        let r = range * (i as f64 + 0.5) / steps as f64;
        let d = (r * r + height * height).sqrt();
        acc += (FALLOFF_RADIUS / d).powi(2).min(1.0) * 2.0 * r;
    }
    acc * (range / steps as f64) / (range * range)
}

/// Sensor model used when sampling a cloud.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensorModel {
    pub range: f64,
    pub range_noise: f64,
    pub density: DensityMode,
}

/// Pool size giving roughly three times `n_points` observable samples from a
/// sensor anywhere inside a region of `area` m².
pub fn pool_size_for(n_points: usize, area: f64, sensor: &SensorModel, height: f64) -> usize {
    let disc = std::f64::consts::PI * sensor.range * sensor.range;
    let accept = match sensor.density {
        DensityMode::Uniform => 1.0,
        DensityMode::RangeFalloff => falloff_acceptance(sensor.range, height),
    };
    // about a quarter of structure samples sit on back faces
    let visible = 0.85;
    (3.0 * n_points as f64 * (area / disc).max(1.0) / (accept * visible)).ceil() as usize
}

impl World {
    /// Random layout of `n_objects` boxes and walls plus clutter inside the
    /// axis-aligned rectangle `[lo, hi]`, with `pool_size` surface samples.
    pub fn generate<R: rand::Rng>(
        rng: &mut R,
        lo: [f64; 2],
        hi: [f64; 2],
        n_objects: usize,
        pool_size: usize,
    ) -> Self {
        let mut cuboids = Vec::with_capacity(n_objects);
        for _ in 0..n_objects {
            let base = Vec3::new(rng.random_range(lo[0]..hi[0]), rng.random_range(lo[1]..hi[1]), 0.0);
            let yaw = rng.random_range(0.0..std::f64::consts::PI);
            let half_extents = if rng.random_bool(0.4) {
                // wall
                Vec3::new(rng.random_range(4.0..10.0), rng.random_range(0.15..0.3), rng.random_range(1.0..2.0))
            } else {
                Vec3::new(rng.random_range(0.5..3.0), rng.random_range(0.5..3.0), rng.random_range(0.5..2.5))
            };
            cuboids.push(Cuboid {
                base,
                half_extents,
                yaw,
            });
        }
        let area = (hi[0] - lo[0]) * (hi[1] - lo[1]);
        let n_blobs = ((area / 400.0).round() as usize).clamp(4, 40);
        let blobs: Vec<Blob> = (0..n_blobs)
            .map(|_| Blob {
                center: Vec3::new(
                    rng.random_range(lo[0]..hi[0]),
                    rng.random_range(lo[1]..hi[1]),
                    rng.random_range(0.5..2.5),
                ),
                sigma: rng.random_range(0.3..1.0),
            })
            .collect();
        let mut world = Self {
            cuboids,
            blobs,
            pool: Vec::with_capacity(pool_size),
        };
        world.fill_pool(rng, lo, hi, pool_size);
        world
    }

    fn fill_pool<R: rand::Rng>(&mut self, rng: &mut R, lo: [f64; 2], hi: [f64; 2], pool_size: usize) {
        let faces: Vec<Face> = self.cuboids.iter().flat_map(|c| c.faces()).collect();
        let face_cdf = cumulative(faces.iter().map(|f| f.area));
        while self.pool.len() < pool_size {
            let u: f64 = rng.random();
            let (position, normal) = if u < STRUCTURE_SHARE && !faces.is_empty() {
                let f = &faces[pick(&face_cdf, rng)];
                (f.origin + f.a * rng.random::<f64>() + f.b * rng.random::<f64>(), Some(f.normal))
            } else if u < 1.0 - GROUND_SHARE && !self.blobs.is_empty() {
                let b = &self.blobs[rng.random_range(0..self.blobs.len())];
                let n = Normal::new(0.0, b.sigma).expect("positive sigma");
                let mut p = b.center + Vec3::new(n.sample(rng), n.sample(rng), n.sample(rng));
                p.z = p.z.max(0.05);
                (p, None)
            } else {
                let p = Vec3::new(rng.random_range(lo[0]..hi[0]), rng.random_range(lo[1]..hi[1]), 0.0);
                if self.inside_any_footprint(&p) {
                    continue;
                }
                (p, Some(Vec3::z()))
            };
            self.pool.push(SurfacePoint {
                position,
                normal,
                priority: rng.random(),
                thinning: rng.random(),
            });
        }
    }

    fn inside_any_footprint(&self, p: &Vec3) -> bool {
        self.cuboids.iter().any(|c| c.contains_xy(p))
    }

    /// Observes `n_points` pool points from `pose` (sensor to world): points
    /// within horizontal range whose surface faces the sensor, thinned by
    /// range in falloff mode, with Gaussian noise along the ray. Returns them
    /// in the sensor frame with the origin at zero.
    pub fn sample_cloud<R: rand::Rng>(
        &self,
        pose: &RigidTransform,
        sensor: &SensorModel,
        n_points: usize,
        rng: &mut R,
    ) -> Result<PointCloud> {
        let origin = pose.translation;
        let mut visible: Vec<(f64, usize)> = Vec::new();
        for (i, sp) in self.pool.iter().enumerate() {
            let ray = sp.position - origin;
            if ray.x * ray.x + ray.y * ray.y > sensor.range * sensor.range {
                continue;
            }
            if let Some(n) = sp.normal {
                if n.dot(&ray) >= 0.0 {
                    continue;
                }
            }
            let r = ray.norm();
            if r < 1e-6 {
                continue;
            }
            if sensor.density == DensityMode::RangeFalloff && sp.thinning >= (FALLOFF_RADIUS / r).powi(2).min(1.0) {
                continue;
            }
            visible.push((sp.priority, i));
        }
        if visible.len() < n_points {
            return Err(Error::DegenerateGeometry(format!(
                "only {} of {n_points} points are observable",
                visible.len()
            )));
        }
        visible.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let noise = Normal::new(0.0, sensor.range_noise.max(0.0))
            .map_err(|e| Error::InvalidArgument(format!("range noise: {e}")))?;
        let mut chosen: Vec<usize> = visible[..n_points].iter().map(|v| v.1).collect();
        chosen.sort_unstable();
        let to_sensor = pose.inverse();
        let points = chosen
            .into_iter()
            .map(|i| {
                let ray = self.pool[i].position - origin;
                let r = ray.norm();
                to_sensor.apply(&(origin + ray * ((r + noise.sample(rng)) / r)))
            })
            .collect();
        PointCloud::with_origin(points, Vec3::zeros())
    }
}

fn cumulative(weights: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut acc = 0.0;
    weights
        .map(|w| {
            acc += w;
            acc
        })
        .collect()
}

fn pick<R: rand::Rng>(cdf: &[f64], rng: &mut R) -> usize {
    let total = *cdf.last().expect("non-empty cdf");
    let x = rng.random::<f64>() * total;
    cdf.partition_point(|&c| c <= x).min(cdf.len() - 1)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sensor(density: DensityMode) -> SensorModel {
        SensorModel {
            range: 30.0,
            range_noise: 0.0,
            density,
        }
    }

    #[test]
    fn sampled_points_lie_on_surfaces_within_range() {
        let mut rng = crate::seed::rng(1, "world-test");
        let w = World::generate(&mut rng, [-40.0, -40.0], [40.0, 40.0], 8, 20_000);
        let pose = RigidTransform::from_yaw_roll_pitch(0.3, 0.0, 0.0, Vec3::new(2.0, -1.0, 1.8));
        let cloud = w.sample_cloud(&pose, &sensor(DensityMode::Uniform), 1500, &mut rng).unwrap();
        assert_eq!(cloud.len(), 1500);
        assert_eq!(cloud.sensor_origin, Vec3::zeros());
        for p in &cloud.points {
            let q = pose.apply(p);
            assert!(((q.x - 2.0).powi(2) + (q.y + 1.0).powi(2)).sqrt() <= 30.0 + 1e-9);
            assert!(q.z >= -1e-9);
        }
    }

    #[test]
    fn cuboid_faces_have_outward_normals() {
        let c = Cuboid {
            base: Vec3::new(1.0, 2.0, 0.0),
            half_extents: Vec3::new(1.0, 0.5, 1.5),
            yaw: 0.7,
        };
        let centre = c.base + Vec3::new(0.0, 0.0, 1.5);
        let faces = c.faces();
        let total: f64 = faces.iter().map(|f| f.area).sum();
        assert!((total - (2.0 * (2.0 * 3.0) + 2.0 * (1.0 * 3.0) + 2.0 * 1.0)).abs() < 1e-12);
        for f in faces {
            let mid = f.origin + 0.5 * (f.a + f.b);
            assert!(f.normal.dot(&(mid - centre)) > 0.0);
        }
    }
}
