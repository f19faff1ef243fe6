//! Map building by chaining pairwise registrations, with flagged links
//! replaced by their ground-truth transforms.

use std::fmt::Write as _;

use rand::seq::index::sample;
use rand::RngExt;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{icp_register_detailed, mean_displacement, PointCloud, RegisteredPair, RigidTransform, Vec3};
use crate::model::Checkpoint;
use crate::seed;
use crate::synth::world::pool_size_for;
use crate::synth::{IcpSettings, PerturbSpec, SceneSpec, World};
use crate::train::trainer::predict_pair;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapSimConfig {
    pub n_frames: usize,
    /// Distance between consecutive kept scans (metres).
    pub frame_spacing: f64,
    /// Standard deviation of the heading change between frames (degrees).
    pub heading_sigma_deg: f64,
    /// Sensor and sampling settings; `seed` and overlap are unused.
    pub scene: SceneSpec,
    pub perturb: PerturbSpec,
    pub icp: IcpSettings,
}

impl Default for MapSimConfig {
    fn default() -> Self {
        Self {
            n_frames: 20,
            frame_spacing: 4.0,
            heading_sigma_deg: 3.0,
            scene: SceneSpec::default(),
            perturb: PerturbSpec::noisy(),
            icp: IcpSettings::default(),
        }
    }
}

/// One registered link between frame `k` (reference) and `k + 1` (source).
#[derive(Debug, Clone)]
pub struct Link {
    pub pair: RegisteredPair,
    /// ICP hit degenerate geometry; the link is always re-registered.
    pub failed: bool,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    /// Ground-truth sensor-to-world poses.
    pub poses: Vec<RigidTransform>,
    pub clouds: Vec<PointCloud>,
    pub links: Vec<Link>,
}

impl Trajectory {
    pub fn labels(&self) -> Vec<f64> {
        self.links.iter().map(|l| l.pair.label).collect()
    }

    pub fn failed(&self) -> Vec<bool> {
        self.links.iter().map(|l| l.failed).collect()
    }
}

/// Drives a sensor through a fresh world and registers consecutive scans
/// with ICP from perturbed initial poses.
pub fn simulate_trajectory(cfg: &MapSimConfig, traj_seed: u64) -> Result<Trajectory> {
    if cfg.n_frames < 10 {
        return Err(Error::InvalidArgument("mapsim needs at least 10 frames".into()));
    }
    cfg.scene.validate()?;
    cfg.perturb.validate()?;
    let mut rng = seed::rng(traj_seed, "trajectory");
    let turn = Normal::new(0.0, cfg.heading_sigma_deg.max(0.0).to_radians() + f64::MIN_POSITIVE)
        .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let mut heading = rng.random_range(0.0..std::f64::consts::TAU);
    let mut pos = Vec3::new(0.0, 0.0, cfg.scene.sensor_height);
    let mut poses = Vec::with_capacity(cfg.n_frames);
    for k in 0..cfg.n_frames {
        if k > 0 {
            heading += turn.sample(&mut rng);
            pos += Vec3::new(heading.cos(), heading.sin(), 0.0) * cfg.frame_spacing;
        }
        poses.push(RigidTransform::from_yaw_roll_pitch(heading, 0.0, 0.0, pos));
    }
    let margin = cfg.scene.sensor_range + 5.0;
    let xs = poses.iter().map(|p| p.translation.x);
    let ys = poses.iter().map(|p| p.translation.y);
    let lo = [xs.clone().fold(f64::INFINITY, f64::min) - margin, ys.clone().fold(f64::INFINITY, f64::min) - margin];
    let hi = [xs.fold(f64::NEG_INFINITY, f64::max) + margin, ys.fold(f64::NEG_INFINITY, f64::max) + margin];
    let area = (hi[0] - lo[0]) * (hi[1] - lo[1]);
    // object density of a single-pair scene
    let per_scene = rng.random_range(cfg.scene.min_objects..=cfg.scene.max_objects) as f64;
    let n_objects = (per_scene * area / (4.0 * margin * margin)).round().max(1.0) as usize;
    let sensor = cfg.scene.sensor();
    let pool = pool_size_for(cfg.scene.n_points, area, &sensor, cfg.scene.sensor_height);
    let world = World::generate(&mut rng, lo, hi, n_objects, pool);
    let clouds = poses
        .iter()
        .map(|p| Ok(world.sample_cloud(p, &sensor, cfg.scene.n_points, &mut rng)?.quantized()))
        .collect::<Result<Vec<_>>>()?;
    let mut links = Vec::with_capacity(cfg.n_frames - 1);
    for k in 0..cfg.n_frames - 1 {
        let gt = poses[k].inverse().compose(&poses[k + 1]);
        let delta = cfg.perturb.sample(&mut seed::rng_idx(traj_seed, "link-perturbation", k as u64));
        let init = gt.compose(&delta);
        let (estimated, failed) = match icp_register_detailed(&clouds[k + 1], &clouds[k], &init, cfg.icp.max_iters, cfg.icp.tol) {
            Ok(o) => (o.transform, false),
            Err(Error::DegenerateGeometry(_)) => (init, true),
            Err(e) => return Err(e),
        };
        let pair = RegisteredPair::new(clouds[k + 1].clone(), clouds[k].clone(), estimated, gt)?;
        links.push(Link { pair, failed });
    }
    Ok(Trajectory { poses, clouds, links })
}

/// How flagged links are chosen from detector scores.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Selection {
    /// Top `round(rate · links)` scores.
    Rate(f64),
    /// Scores strictly above the threshold.
    Threshold(f64),
}

/// Flags links for re-registration; failed links are always flagged.
/// Ties in score go to the lower index.
pub fn flag_links(scores: &[f64], failed: &[bool], selection: Selection) -> Vec<bool> {
    let n = scores.len();
    let mut flags: Vec<bool> = failed.to_vec();
    match selection {
        Selection::Rate(rate) => {
            let k = (rate.clamp(0.0, 1.0) * n as f64).round() as usize;
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
            let mut budget = k.saturating_sub(flags.iter().filter(|&&f| f).count());
            for i in order {
                if budget == 0 {
                    break;
                }
                if !flags[i] {
                    flags[i] = true;
                    budget -= 1;
                }
            }
        }
        Selection::Threshold(t) => {
            for (f, s) in flags.iter_mut().zip(scores) {
                *f |= *s > t;
            }
        }
    }
    flags
}

/// Chained sensor-to-world poses, starting from the true first pose.
/// Each chained pose is stored as `drift ∘ true pose`; a ground-truth link
/// carries the drift over unchanged, so fully re-registered chains are exact.
pub fn chain_poses(traj: &Trajectory, flags: &[bool]) -> Vec<RigidTransform> {
    let mut out = Vec::with_capacity(traj.poses.len());
    out.push(traj.poses[0]);
    let mut drift = RigidTransform::identity();
    for (k, link) in traj.links.iter().enumerate() {
        if !flags[k] {
            let next = out[k].compose(&link.pair.estimated);
            drift = next.compose(&traj.poses[k + 1].inverse()).orthonormalized();
        }
        out.push(drift.compose(&traj.poses[k + 1]));
    }
    out
}

/// Mean displacement of the last frame's points under the chained pose
/// versus the true pose.
pub fn final_frame_error(traj: &Trajectory, flags: &[bool]) -> Result<f64> {
    let chained = chain_poses(traj, flags);
    let last = traj.poses.len() - 1;
    mean_displacement(&traj.clouds[last].points, &chained[last], &traj.poses[last])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapSimReport {
    /// Chained poses, 12 numbers each (row-major rotation, translation).
    pub chained_poses: Vec<[f64; 12]>,
    pub flagged: Vec<usize>,
    pub rate: f64,
    pub final_error: f64,
    /// `(rate, mean final error)` rows when a sweep was run.
    pub sweep: Vec<(f64, f64)>,
}

pub fn run_selection(traj: &Trajectory, scores: &[f64], selection: Selection) -> Result<MapSimReport> {
    let flags = flag_links(scores, &traj.failed(), selection);
    let final_error = final_frame_error(traj, &flags)?;
    let flagged: Vec<usize> = flags.iter().enumerate().filter(|(_, &f)| f).map(|(i, _)| i).collect();
    Ok(MapSimReport {
        chained_poses: chain_poses(traj, &flags).iter().map(|p| p.to_row_major()).collect(),
        rate: flagged.len() as f64 / flags.len() as f64,
        flagged,
        final_error,
        sweep: Vec::new(),
    })
}

/// Where per-link scores come from.
#[derive(Debug, Clone, Copy)]
pub enum Detector<'a> {
    /// True alignment errors.
    Oracle,
    Model(&'a Checkpoint),
}

pub fn detector_scores(traj: &Trajectory, detector: Detector<'_>) -> Result<Vec<f64>> {
    match detector {
        Detector::Oracle => Ok(traj.labels()),
        Detector::Model(ckpt) => {
            let params = ckpt.model_params()?;
            traj.links.iter().map(|l| predict_pair(ckpt, &params, &l.pair)).collect()
        }
    }
}

/// Mean final-frame error over trajectories at each rate.
pub fn sweep(trajs: &[Trajectory], scores: &[Vec<f64>], rates: &[f64]) -> Result<Vec<(f64, f64)>> {
    rates
        .iter()
        .map(|&rate| {
            let mut total = 0.0;
            for (t, s) in trajs.iter().zip(scores) {
                let flags = flag_links(s, &t.failed(), Selection::Rate(rate));
                total += final_frame_error(t, &flags)?;
            }
            Ok((rate, total / trajs.len() as f64))
        })
        .collect()
}

/// Mean final-frame error over `draws` uniformly random selections of
/// `round(rate · links)` links.
pub fn random_selection_error(traj: &Trajectory, rate: f64, draws: usize, draw_seed: u64) -> Result<f64> {
    let n = traj.links.len();
    let k = (rate.clamp(0.0, 1.0) * n as f64).round() as usize;
    let failed = traj.failed();
    let mut total = 0.0;
    for d in 0..draws.max(1) {
        let mut rng = seed::rng_idx(draw_seed, "random-selection", d as u64);
        let mut flags = failed.clone();
        for i in sample(&mut rng, n, k) {
            flags[i] = true;
        }
        total += final_frame_error(traj, &flags)?;
    }
    Ok(total / draws.max(1) as f64)
}

/// Inclusive grid `start, start + step, …, stop`.
pub fn rate_grid(start: f64, stop: f64, step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0) || !(start <= stop) || start < 0.0 || stop > 1.0 + 1e-12 {
        return Err(Error::InvalidArgument(format!("invalid sweep {start}:{stop}:{step}")));
    }
    let n = ((stop - start) / step + 1e-9).floor() as usize;
    Ok((0..=n).map(|i| ((start + i as f64 * step) * 1e12).round() / 1e12).collect())
}

pub fn sweep_csv(rows: &[(f64, f64)]) -> String {
    let mut s = String::from("rate,final_error\n");
    for (r, e) in rows {
        let _ = writeln!(s, "{r},{e}");
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_cfg() -> MapSimConfig {
        MapSimConfig {
            n_frames: 10,
            scene: SceneSpec {
                n_points: 500,
                ..Default::default()
            },
            ..Default::default()
        }
    }

    #[test]
    fn rate_flags_top_scores() {
        let s = [0.1, 0.9, 0.5, 0.9, 0.0];
        let f = [false; 5];
        assert_eq!(flag_links(&s, &f, Selection::Rate(0.4)), [false, true, false, true, false]);
        assert_eq!(flag_links(&s, &f, Selection::Rate(0.0)), [false; 5]);
        assert_eq!(flag_links(&s, &f, Selection::Rate(1.0)), [true; 5]);
        assert_eq!(flag_links(&s, &f, Selection::Threshold(0.4)), [false, true, true, true, false]);
        let failed = [false, false, false, false, true];
        assert_eq!(flag_links(&s, &failed, Selection::Rate(0.2)), [false, false, false, false, true]);
    }

    #[test]
    fn grid_shape() {
        assert_eq!(rate_grid(0.0, 1.0, 0.1).unwrap().len(), 11);
        assert_eq!(rate_grid(0.0, 1.0, 0.1).unwrap()[3], 0.3);
        assert!(rate_grid(0.5, 0.2, 0.1).is_err());
    }

    #[test]
    fn full_reregistration_is_exact_and_none_is_raw_chain() {
        let t = simulate_trajectory(&small_cfg(), 3).unwrap();
        let labels = t.labels();
        assert_eq!(labels.len(), 9);
        let all = run_selection(&t, &labels, Selection::Rate(1.0)).unwrap();
        assert_eq!(all.final_error, 0.0);
        let none = run_selection(&t, &labels, Selection::Rate(0.0)).unwrap();
        let raw = final_frame_error(&t, &[false; 9]).unwrap();
        assert_eq!(none.final_error, raw);
        assert!(raw > 0.0);
    }

    #[test]
    fn too_short_trajectories_are_rejected() {
        let cfg = MapSimConfig {
            n_frames: 9,
            ..small_cfg()
        };
        assert!(simulate_trajectory(&cfg, 0).is_err());
    }
}
