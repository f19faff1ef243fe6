//! Synthetic source/reference scans of one scene and labelled pairs.

use rand::RngExt;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{icp_register_detailed, PointCloud, RegisteredPair, RigidTransform, Vec3};
use crate::seed;
use crate::synth::world::{pool_size_for, DensityMode, SensorModel, World};

/// Scenes whose realised overlap falls below this are regenerated.
pub const MIN_OVERLAP: f64 = 0.1;
pub const MAX_SCENE_ATTEMPTS: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub seed: u64,
    pub n_points: usize,
    pub density_mode: DensityMode,
    /// Target fraction of the reference sensor footprint shared with the
    /// source footprint; sets the distance between the two poses.
    pub overlap_fraction: f64,
    pub sensor_range: f64,
    pub sensor_height: f64,
    pub range_noise: f64,
    pub min_objects: usize,
    pub max_objects: usize,
}

impl Default for SceneSpec {
    fn default() -> Self {
        Self {
            seed: 0,
            n_points: 2000,
            density_mode: DensityMode::Uniform,
            overlap_fraction: 0.9,
            sensor_range: 30.0,
            sensor_height: 1.8,
            range_noise: 0.02,
            min_objects: 3,
            max_objects: 10,
        }
    }
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.to_string()));
        if self.n_points < 100 {
            return bad("n_points must be at least 100");
        }
        if !(0.3..=1.0).contains(&self.overlap_fraction) {
            return bad("overlap_fraction must lie in [0.3, 1]");
        }
        if !(self.sensor_range > 0.0) || !(self.sensor_height >= 0.0) || !(self.range_noise >= 0.0) {
            return bad("sensor range must be positive, height and noise non-negative");
        }
        if self.min_objects > self.max_objects {
            return bad("min_objects exceeds max_objects");
        }
        Ok(())
    }

    pub fn sensor(&self) -> SensorModel {
        SensorModel {
            range: self.sensor_range,
            range_noise: self.range_noise,
            density: self.density_mode,
        }
    }
}

/// Fraction of a disc of radius `r` covered by an equal disc whose centre is
/// `m` away.
pub fn disc_overlap(m: f64, r: f64) -> f64 {
    if m >= 2.0 * r {
        return 0.0;
    }
    let lens = 2.0 * r * r * (m / (2.0 * r)).acos() - 0.5 * m * (4.0 * r * r - m * m).sqrt();
    lens / (std::f64::consts::PI * r * r)
}

/// Centre distance giving `disc_overlap = target`, by bisection.
pub fn motion_for_overlap(target: f64, r: f64) -> f64 {
    if target >= 1.0 {
        return 0.0;
    }
    let (mut lo, mut hi) = (0.0, 2.0 * r);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if disc_overlap(mid, r) > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[derive(Debug, Clone)]
pub struct Scene {
    pub spec: SceneSpec,
    pub world: World,
    /// Sensor-to-world poses.
    pub reference_pose: RigidTransform,
    pub source_pose: RigidTransform,
    /// Source clouds are in their own sensor frames; both are rounded to the
    /// precision of the XYZ writer.
    pub source: PointCloud,
    pub reference: PointCloud,
    /// Maps source sensor coordinates into the reference sensor frame.
    pub ground_truth: RigidTransform,
    pub realized_overlap: f64,
    pub attempts: usize,
}

/// Fraction of source points that land inside the reference sensor range.
pub fn realized_overlap(source: &PointCloud, ground_truth: &RigidTransform, range: f64) -> f64 {
    if source.is_empty() {
        return 0.0;
    }
    let inside = source
        .points
        .iter()
        .map(|p| ground_truth.apply(p))
        .filter(|q| (q.x * q.x + q.y * q.y).sqrt() <= range)
        .count();
    inside as f64 / source.len() as f64
}

pub fn generate_scene(spec: &SceneSpec) -> Result<Scene> {
    spec.validate()?;
    let mut last = 0.0;
    for attempt in 0..MAX_SCENE_ATTEMPTS {
        let mut rng = seed::rng_idx(spec.seed, "scene-attempt", attempt as u64);
        let scene = match sample_scene(spec, &mut rng, attempt + 1) {
            Ok(s) => s,
            // too few observable points in this layout
            Err(Error::DegenerateGeometry(msg)) => {
                log::debug!("scene {} attempt {attempt}: {msg}", spec.seed);
                continue;
            }
            Err(e) => return Err(e),
        };
        if scene.realized_overlap >= MIN_OVERLAP {
            return Ok(scene);
        }
        last = scene.realized_overlap;
    }
    Err(Error::LowOverlap {
        attempts: MAX_SCENE_ATTEMPTS,
        overlap: last,
    })
}

fn sample_scene<R: rand::Rng>(spec: &SceneSpec, rng: &mut R, attempts: usize) -> Result<Scene> {
    let r = spec.sensor_range;
    let m = motion_for_overlap(spec.overlap_fraction, r);
    let heading = rng.random_range(0.0..std::f64::consts::TAU);
    let ref_yaw = rng.random_range(0.0..std::f64::consts::TAU);
    let d_yaw = rng.random_range(-5f64..5.0).to_radians();
    let reference_pose = RigidTransform::from_yaw_roll_pitch(ref_yaw, 0.0, 0.0, Vec3::new(0.0, 0.0, spec.sensor_height));
    let step = Vec3::new(m * heading.cos(), m * heading.sin(), 0.0);
    let source_pose = RigidTransform::from_yaw_roll_pitch(ref_yaw + d_yaw, 0.0, 0.0, reference_pose.translation + step);
    let margin = r + 5.0;
    let lo = [step.x.min(0.0) - margin, step.y.min(0.0) - margin];
    let hi = [step.x.max(0.0) + margin, step.y.max(0.0) + margin];
    let n_objects = rng.random_range(spec.min_objects..=spec.max_objects);
    let sensor = spec.sensor();
    let area = (hi[0] - lo[0]) * (hi[1] - lo[1]);
    let pool = pool_size_for(spec.n_points, area, &sensor, spec.sensor_height);
    let world = World::generate(rng, lo, hi, n_objects, pool);
    let reference = world.sample_cloud(&reference_pose, &sensor, spec.n_points, rng)?.quantized();
    let source = world.sample_cloud(&source_pose, &sensor, spec.n_points, rng)?.quantized();
    let ground_truth = reference_pose.inverse().compose(&source_pose);
    let realized = realized_overlap(&source, &ground_truth, r);
    Ok(Scene {
        spec: spec.clone(),
        world,
        reference_pose,
        source_pose,
        source,
        reference,
        ground_truth,
        realized_overlap: realized,
        attempts,
    })
}

/// Per-axis Gaussian noise of the initial pose: translation in metres
/// (x, y, z), rotation in degrees (yaw, roll, pitch).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerturbSpec {
    pub translation_sigma: [f64; 3],
    pub rotation_sigma_deg: [f64; 3],
}

impl PerturbSpec {
    pub fn noisy() -> Self {
        Self {
            translation_sigma: [2.0, 2.0, 0.2],
            rotation_sigma_deg: [10.0, 2.0, 2.0],
        }
    }

    pub fn zero() -> Self {
        Self {
            translation_sigma: [0.0; 3],
            rotation_sigma_deg: [0.0; 3],
        }
    }

    /// Multiplies every σ by `k`.
    pub fn scaled(&self, k: f64) -> Self {
        Self {
            translation_sigma: self.translation_sigma.map(|s| s * k),
            rotation_sigma_deg: self.rotation_sigma_deg.map(|s| s * k),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self
            .translation_sigma
            .iter()
            .chain(&self.rotation_sigma_deg)
            .any(|s| !(*s >= 0.0) || !s.is_finite())
        {
            return Err(Error::InvalidArgument("perturbation sigmas must be finite and non-negative".into()));
        }
        Ok(())
    }

    /// Draws a perturbation composed as yaw ∘ roll ∘ pitch.
    pub fn sample<R: rand::Rng>(&self, rng: &mut R) -> RigidTransform {
        let mut g = |s: f64| if s > 0.0 { Normal::new(0.0, s).expect("sigma").sample(rng) } else { 0.0 };
        let t = Vec3::new(g(self.translation_sigma[0]), g(self.translation_sigma[1]), g(self.translation_sigma[2]));
        let [sy, sr, sp] = self.rotation_sigma_deg;
        let (yaw, roll, pitch) = (g(sy).to_radians(), g(sr).to_radians(), g(sp).to_radians());
        RigidTransform::from_yaw_roll_pitch(yaw, roll, pitch, t)
    }
}

impl Default for PerturbSpec {
    fn default() -> Self {
        Self::noisy()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IcpSettings {
    pub max_iters: usize,
    pub tol: f64,
}

impl Default for IcpSettings {
    fn default() -> Self {
        Self { max_iters: 50, tol: 1e-6 }
    }
}

#[derive(Debug, Clone)]
pub struct PairOutcome {
    pub pair: RegisteredPair,
    /// `T* ∘ Δ`: the perturbed initial estimate.
    pub initial: RigidTransform,
    /// Label of the initial estimate before any registration.
    pub initial_error: f64,
    pub icp_iterations: usize,
}

/// Perturbs the ground truth and optionally refines it with ICP.
pub fn make_pair(
    scene: &Scene,
    perturb: &PerturbSpec,
    register_with_icp: bool,
    icp: &IcpSettings,
    perturb_seed: u64,
) -> Result<PairOutcome> {
    perturb.validate()?;
    let mut rng = seed::rng(perturb_seed, "perturbation");
    let delta = perturb.sample(&mut rng);
    make_pair_with(scene, &delta, register_with_icp, icp)
}

/// As [`make_pair`] with an explicit perturbation `Δ`.
pub fn make_pair_with(
    scene: &Scene,
    delta: &RigidTransform,
    register_with_icp: bool,
    icp: &IcpSettings,
) -> Result<PairOutcome> {
    let initial = scene.ground_truth.compose(delta);
    let (estimated, icp_iterations) = if register_with_icp {
        let out = icp_register_detailed(&scene.source, &scene.reference, &initial, icp.max_iters, icp.tol)?;
        (out.transform, out.iterations)
    } else {
        (initial, 0)
    };
    let pair = RegisteredPair::new(scene.source.clone(), scene.reference.clone(), estimated, scene.ground_truth)?;
    let initial_error = crate::geom::mean_displacement(&scene.source.points, &initial, &scene.ground_truth)?;
    Ok(PairOutcome {
        pair,
        initial,
        initial_error,
        icp_iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::icp_register;

    fn small(seed: u64) -> SceneSpec {
        SceneSpec {
            seed,
            n_points: 600,
            ..Default::default()
        }
    }

    #[test]
    fn overlap_geometry() {
        assert_eq!(disc_overlap(0.0, 30.0), 1.0);
        assert_eq!(disc_overlap(60.0, 30.0), 0.0);
        for t in [0.3, 0.5, 0.8, 0.95] {
            let m = motion_for_overlap(t, 30.0);
            assert!((disc_overlap(m, 30.0) - t).abs() < 1e-9);
        }
        assert_eq!(motion_for_overlap(1.0, 30.0), 0.0);
    }

    #[test]
    fn same_seed_gives_identical_clouds() {
        let a = generate_scene(&small(5)).unwrap();
        let b = generate_scene(&small(5)).unwrap();
        assert_eq!(a.source, b.source);
        assert_eq!(a.reference, b.reference);
        assert_eq!(a.ground_truth, b.ground_truth);
        let c = generate_scene(&small(6)).unwrap();
        assert_ne!(a.source, c.source);
    }

    #[test]
    fn ground_truth_is_relative_pose() {
        let s = generate_scene(&small(2)).unwrap();
        let p = Vec3::new(1.0, -2.0, 0.5);
        let via_world = s.reference_pose.inverse().apply(&s.source_pose.apply(&p));
        assert!((s.ground_truth.apply(&p) - via_world).norm() < 1e-12);
        assert!(s.realized_overlap >= MIN_OVERLAP);
    }

    #[test]
    fn full_overlap_without_motion_registers_to_identity() {
        let spec = SceneSpec {
            overlap_fraction: 1.0,
            ..small(11)
        };
        let s = generate_scene(&spec).unwrap();
        let t = icp_register(&s.source, &s.reference, &s.ground_truth, 50, 1e-8).unwrap();
        let err = crate::geom::mean_displacement(&s.source.points, &t, &s.ground_truth).unwrap();
        assert!(err < 1e-2, "ICP drift {err}");
    }

    #[test]
    fn range_falloff_concentrates_points_near_the_sensor() {
        let spec = SceneSpec {
            density_mode: DensityMode::RangeFalloff,
            n_points: 1500,
            ..small(3)
        };
        let s = generate_scene(&spec).unwrap();
        let near = s.reference.points.iter().filter(|p| p.norm() <= 5.0).count();
        // shells of the same volume as the 5 m ball, from twice that radius out
        let vol = 5f64.powi(3);
        let mut inner: f64 = 10.0;
        while inner < 30.0 {
            let outer = (inner.powi(3) + vol).cbrt();
            let far = s.reference.points.iter().filter(|p| p.norm() > inner && p.norm() <= outer).count();
            assert!(near > far, "near {near} vs shell [{inner:.1}, {outer:.1}] {far}");
            inner = outer;
        }
    }

    #[test]
    fn pair_labels_follow_the_perturbation() {
        let s = generate_scene(&small(4)).unwrap();
        let zero = make_pair(&s, &PerturbSpec::zero(), false, &IcpSettings::default(), 1).unwrap();
        assert_eq!(zero.pair.label, 0.0);
        let shift = RigidTransform::from_translation(Vec3::new(1.0, 0.0, 0.0));
        let one = make_pair_with(&s, &shift, false, &IcpSettings::default()).unwrap();
        assert!((one.pair.label - 1.0).abs() < 1e-12);
        assert_eq!(one.initial_error, one.pair.label);
    }

    #[test]
    fn perturbation_sigmas_are_validated() {
        let mut p = PerturbSpec::noisy();
        assert!(p.validate().is_ok());
        p.translation_sigma[1] = -1.0;
        assert!(p.validate().is_err());
        assert!(SceneSpec { n_points: 99, ..Default::default() }.validate().is_err());
    }
}
