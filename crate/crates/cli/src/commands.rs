use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use pcmr_core::features::{extract_pair_features, features_to_csv, ScaleConfig};
use pcmr_core::io::write_atomic;
use pcmr_core::model::{Checkpoint, FusionMode};
use pcmr_core::parallel::par_map;
use pcmr_core::seed;
use pcmr_core::synth::{
    build_dataset, load_pair, manifest_hash, DatasetManifest, DatasetSpec, DensityMode, PerturbSpec, SceneSpec, Split,
};
use pcmr_core::train::mapsim::{self, detector_scores, rate_grid, run_selection, sweep_csv};
use pcmr_core::train::{
    ablate_radius, ablate_temperature, ablation_csv, constant_rmse, evaluate, evaluate_predictions, simulate_trajectory,
    train, AdamConfig, Detector, FeatureSet, MapSimConfig, Selection, TrainConfig,
};
use rand::RngExt;

use crate::config::{List, Resolver, Sweep};
use crate::{
    AblateArgs, Cli, CliError, Command, EvalArgs, ExtractArgs, FeaturesArgs, GenArgs, MapsimArgs, ModelArgs,
    SceneArgs, TrainArgs,
};

pub const CONFIG_ECHO: &str = "config_echo.txt";

type CliResult<T> = Result<T, CliError>;

pub fn run(cli: Cli) -> CliResult<()> {
    let mut res = Resolver::from_file(cli.config.as_deref())?;
    let seed = res.value("seed", cli.seed, 0u64)?;
    let jobs = res.value("jobs", cli.jobs, 1usize)?;
    if jobs == 0 {
        return Err(CliError::usage("jobs must be at least 1"));
    }
    let common = Common { seed, jobs };
    match &cli.command {
        Command::Gen(a) => gen(res, common, a),
        Command::Features(a) => features(res, a),
        Command::Train(a) => train_cmd(res, common, a),
        Command::Eval(a) => eval(res, common, a),
        Command::Ablate(a) => ablate(res, common, a),
        Command::Mapsim(a) => mapsim_cmd(res, common, a),
    }
}

#[derive(Debug, Clone, Copy)]
struct Common {
    seed: u64,
    jobs: usize,
}

fn write(path: &Path, text: &str) -> CliResult<()> {
    write_atomic(path, text.as_bytes())?;
    Ok(())
}

fn density(text: &str) -> CliResult<DensityMode> {
    match text {
        "uniform" => Ok(DensityMode::Uniform),
        "range-falloff" => Ok(DensityMode::RangeFalloff),
        other => Err(CliError::usage(format!("unknown density {other:?} (uniform | range-falloff)"))),
    }
}

fn perturb(text: &str) -> CliResult<PerturbSpec> {
    match text {
        "noisy" => Ok(PerturbSpec::noisy()),
        "none" => Ok(PerturbSpec::zero()),
        k => match k.parse::<f64>() {
            Ok(k) if k >= 0.0 && k.is_finite() => Ok(PerturbSpec::noisy().scaled(k)),
            _ => Err(CliError::usage(format!("perturb must be noisy, none or a scale factor, got {k:?}"))),
        },
    }
}

fn split(text: &str) -> CliResult<Split> {
    match text {
        "train" => Ok(Split::Train),
        "val" => Ok(Split::Val),
        "test" => Ok(Split::Test),
        other => Err(CliError::usage(format!("unknown split {other:?} (train | val | test)"))),
    }
}

fn scene_spec(res: &mut Resolver, a: &SceneArgs, base: SceneSpec) -> CliResult<SceneSpec> {
    let d = match base.density_mode {
        DensityMode::Uniform => "uniform",
        DensityMode::RangeFalloff => "range-falloff",
    };
    Ok(SceneSpec {
        n_points: res.value("points", a.points, base.n_points)?,
        density_mode: density(&res.value("density", a.density.clone(), d.to_string())?)?,
        sensor_range: res.value("range", a.range, base.sensor_range)?,
        range_noise: res.value("range_noise", a.range_noise, base.range_noise)?,
        ..base
    })
}

fn extract_settings(res: &mut Resolver, a: &ExtractArgs) -> CliResult<(usize, ScaleConfig)> {
    let base = TrainConfig::default();
    let n_anchors = res.value("anchors", a.anchors, base.n_anchors)?;
    let radii = res.value("radii", a.radii.clone(), List(base.scales.radii.clone()))?.0;
    let cap = res.value("cap", a.cap, base.scales.max_neighborhood_points)?;
    let scales = ScaleConfig {
        radii,
        max_neighborhood_points: cap,
        ..base.scales
    };
    scales.validate()?;
    Ok((n_anchors, scales))
}

fn train_config(res: &mut Resolver, a: &ModelArgs, c: Common) -> CliResult<TrainConfig> {
    let base = TrainConfig::default();
    let (n_anchors, scales) = extract_settings(res, &a.extract)?;
    let fusion = match res.value("fusion", a.fusion.clone(), "attention".to_string())?.as_str() {
        "attention" => FusionMode::Attention,
        "average" => FusionMode::Average,
        other => return Err(CliError::usage(format!("unknown fusion {other:?} (attention | average)"))),
    };
    let all: Vec<usize> = (0..scales.radii.len()).collect();
    let cfg = TrainConfig {
        epochs: res.value("epochs", a.epochs, base.epochs)?,
        batch_size: res.value("batch_size", a.batch_size, base.batch_size)?,
        adam: AdamConfig {
            lr: res.value("lr", a.lr, base.adam.lr)?,
            beta1: res.value("beta1", a.beta1, base.adam.beta1)?,
            beta2: res.value("beta2", a.beta2, base.adam.beta2)?,
            eps: res.value("adam_eps", a.adam_eps, base.adam.eps)?,
        },
        seed: c.seed,
        n_anchors,
        scales,
        temperature: res.value("tau", a.tau, base.temperature)?,
        fusion,
        scale_selection: res.value("scales", a.scales.clone(), List(all))?.0,
        patience: res.value("patience", a.patience, base.patience)?,
        encoder_neighbors: res.value("encoder_k", a.encoder_k, base.encoder_neighbors)?,
        jobs: c.jobs,
    };
    cfg.validate()?;
    Ok(cfg)
}

fn load_manifest(dir: &Path) -> CliResult<DatasetManifest> {
    DatasetManifest::load(dir).map_err(|e| match e {
        pcmr_core::Error::Io { .. } => CliError::missing(format!("no dataset manifest in {}: {e}", dir.display())),
        other => other.into(),
    })
}

fn load_checkpoint(path: &Path) -> CliResult<Checkpoint> {
    Checkpoint::load(path).map_err(|e| CliError::missing(format!("cannot load checkpoint {}: {e}", path.display())))
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

fn gen(mut res: Resolver, c: Common, a: &GenArgs) -> CliResult<()> {
    let out: PathBuf = res.path("out", a.out.clone())?;
    let base = DatasetSpec::default();
    let n_pairs = res.value("pairs", a.pairs, base.n_pairs)?;
    let p = res.value("perturb", a.noisy.then(|| "noisy".to_string()).or(a.perturb.clone()), "noisy".to_string())?;
    let icp = res.value("icp", a.no_icp.then_some(false), true)?;
    let overlap = res.value("overlap", a.overlap, base.scene.overlap_fraction)?;
    let scene = scene_spec(&mut res, &a.scene, SceneSpec { overlap_fraction: overlap, ..base.scene.clone() })?;
    let echo = res.finish("gen")?;
    if n_pairs == 0 {
        return Err(CliError::usage("--pairs must be at least 1"));
    }
    let spec = DatasetSpec {
        n_pairs,
        scene,
        perturb: perturb(&p)?,
        register_with_icp: icp,
        ..base
    };
    let manifest = build_dataset(&out, c.seed, &spec, c.jobs)?;
    write(&out.join(CONFIG_ECHO), &echo)?;
    let mut labels: Vec<f64> = manifest.pairs.iter().map(|r| r.label).collect();
    labels.sort_by(f64::total_cmp);
    let above = labels.iter().filter(|&&l| l > 0.5).count() as f64 / labels.len() as f64;
    println!("pairs: {}", manifest.pairs.len());
    println!("manifest sha256: {}", manifest_hash(&manifest)?);
    println!(
        "label quantiles (m): min {:.4} q25 {:.4} median {:.4} q75 {:.4} max {:.4}; above 0.5 m: {:.1}%",
        labels[0],
        quantile(&labels, 0.25),
        quantile(&labels, 0.5),
        quantile(&labels, 0.75),
        labels[labels.len() - 1],
        100.0 * above
    );
    Ok(())
}

fn features(mut res: Resolver, a: &FeaturesArgs) -> CliResult<()> {
    let data: PathBuf = res.path("data", a.data.clone())?;
    let index: usize = res.required("pair", a.pair)?;
    let out: PathBuf = res.path("out", a.out.clone())?;
    let (n_anchors, scales) = extract_settings(&mut res, &a.extract)?;
    let echo = res.finish("features")?;
    let manifest = load_manifest(&data)?;
    let record = manifest
        .pairs
        .iter()
        .find(|r| r.index == index)
        .ok_or_else(|| CliError::usage(format!("pair {index} is not in the manifest")))?;
    let (pair, _) = load_pair(&data, record)?;
    let feats = extract_pair_features(&pair, n_anchors, &scales)?;
    let path = out.join(format!("features_pair_{index:05}.csv"));
    write(&path, &features_to_csv(&feats, &scales.radii))?;
    write(&out.join(CONFIG_ECHO), &echo)?;
    println!("wrote {} ({} anchors, label {:.4} m)", path.display(), feats.len(), pair.label);
    Ok(())
}

fn train_cmd(mut res: Resolver, c: Common, a: &TrainArgs) -> CliResult<()> {
    let data: PathBuf = res.path("data", a.data.clone())?;
    let out: PathBuf = res.path("out", a.out.clone())?;
    let cfg = train_config(&mut res, &a.model, c)?;
    let echo = res.finish("train")?;
    let manifest = load_manifest(&data)?;
    let set = FeatureSet::load_or_extract(&data, &manifest, cfg.n_anchors, &cfg.scales, c.jobs)?;
    let outcome = train(&set, &cfg)?;
    let mut history = String::from("epoch,train_loss,val_rmse\n");
    for h in &outcome.history {
        let _ = writeln!(history, "{},{},{}", h.epoch, h.train_loss, h.val_rmse);
    }
    outcome.checkpoint.save(&out.join("checkpoint.json"))?;
    write(&out.join("history.csv"), &history)?;
    write(&out.join(CONFIG_ECHO), &echo)?;
    let meta = &outcome.checkpoint.meta;
    println!(
        "params: {}; epochs run: {}; best epoch: {}; best val rmse: {:.4}",
        outcome.checkpoint.params.len(),
        meta.epochs_run,
        meta.best_epoch,
        meta.best_val_rmse
    );
    Ok(())
}

fn eval(mut res: Resolver, c: Common, a: &EvalArgs) -> CliResult<()> {
    let data: PathBuf = res.path("data", a.data.clone())?;
    let out: PathBuf = res.path("out", a.out.clone())?;
    let which = split(&res.value("split", a.split.clone(), "test".to_string())?)?;
    let predictor = res.value("predictor", a.predictor.clone(), "model".to_string())?;
    let ckpt_path = match predictor.as_str() {
        "model" => Some(res.path("checkpoint", a.checkpoint.clone())?),
        "oracle" => None,
        other => return Err(CliError::usage(format!("unknown predictor {other:?} (model | oracle)"))),
    };
    let echo = res.finish("eval")?;
    let manifest = load_manifest(&data)?;
    let records = manifest.split(which);
    if records.is_empty() {
        return Err(CliError::usage(format!("split {which:?} is empty")));
    }
    let report = match ckpt_path {
        Some(path) => {
            let ckpt = load_checkpoint(&path)?;
            let set = FeatureSet::load_or_extract(&data, &manifest, ckpt.meta.n_anchors, &ckpt.scales, c.jobs)?;
            evaluate(&ckpt, &set, which, c.jobs)?
        }
        None => {
            let labels: Vec<f64> = records.iter().map(|r| r.label).collect();
            evaluate_predictions(&labels, &labels)
        }
    };
    let train_labels: Vec<f64> = manifest.split(Split::Train).iter().map(|r| r.label).collect();
    let name = format!("{which:?}").to_lowercase();
    write(&out.join(format!("eval_{name}.json")), &report.to_json())?;
    write(&out.join(format!("predictions_{name}.csv")), &report.predictions_csv())?;
    write(&out.join(CONFIG_ECHO), &echo)?;
    println!("{name}: {}", report.summary());
    if !train_labels.is_empty() {
        let mean = train_labels.iter().sum::<f64>() / train_labels.len() as f64;
        let labels: Vec<f64> = report.rows.iter().map(|r| r.0).collect();
        println!("constant train-mean baseline rmse: {:.4}", constant_rmse(&labels, mean));
    }
    Ok(())
}

fn ablate(mut res: Resolver, c: Common, a: &AblateArgs) -> CliResult<()> {
    let kind = res.value("kind", a.kind.clone(), "radius".to_string())?;
    let dirs = res.required::<List<String>>("data", a.data.clone())?.0;
    let out: PathBuf = res.path("out", a.out.clone())?;
    let seeds = res.value("seeds", a.seeds.clone(), List(vec![0u64, 1, 2]))?.0;
    let taus = if kind == "temperature" {
        res.value("taus", a.taus.clone(), List(vec![1.0, 0.8, 0.6, 0.4]))?.0
    } else {
        Vec::new()
    };
    let cfg = train_config(&mut res, &a.model, c)?;
    let echo = res.finish("ablate")?;
    if dirs.is_empty() || seeds.is_empty() {
        return Err(CliError::usage("ablate needs at least one dataset and one seed"));
    }
    let mut sets = Vec::new();
    for d in &dirs {
        let dir = PathBuf::from(d);
        let manifest = load_manifest(&dir)?;
        let name = dir.file_name().map_or(d.clone(), |n| n.to_string_lossy().into_owned());
        sets.push((name, FeatureSet::load_or_extract(&dir, &manifest, cfg.n_anchors, &cfg.scales, c.jobs)?));
    }
    let refs: Vec<(String, &FeatureSet)> = sets.iter().map(|(n, s)| (n.clone(), s)).collect();
    let rows = match kind.as_str() {
        "radius" => ablate_radius(&refs, &cfg, &seeds)?,
        "temperature" => ablate_temperature(&refs, &cfg, &taus, &seeds)?,
        other => return Err(CliError::usage(format!("unknown ablation {other:?} (radius | temperature)"))),
    };
    let csv = ablation_csv(&rows);
    write(&out.join(format!("ablation_{kind}.csv")), &csv)?;
    write(
        &out.join(format!("ablation_{kind}.json")),
        &(serde_json::to_string_pretty(&rows).map_err(pcmr_core::Error::from)? + "\n"),
    )?;
    write(&out.join(CONFIG_ECHO), &echo)?;
    print!("{csv}");
    Ok(())
}

fn mapsim_cmd(mut res: Resolver, c: Common, a: &MapsimArgs) -> CliResult<()> {
    let out: PathBuf = res.path("out", a.out.clone())?;
    let detector = res.value("detector", a.detector.clone(), "oracle".to_string())?;
    let ckpt_path = match detector.as_str() {
        "model" => Some(res.path("checkpoint", a.checkpoint.clone())?),
        "oracle" | "random" => None,
        other => return Err(CliError::usage(format!("unknown detector {other:?} (oracle | model | random)"))),
    };
    let threshold = res.optional("threshold", a.threshold)?;
    let selection = match threshold {
        Some(t) => {
            if a.rate.is_some() {
                return Err(CliError::usage("--rate and --threshold are mutually exclusive"));
            }
            Selection::Threshold(t)
        }
        None => Selection::Rate(res.value("rate", a.rate, 0.4)?),
    };
    let sweep: Option<Sweep> = res.optional("sweep", a.sweep)?;
    let base = MapSimConfig::default();
    let n_traj = res.value("trajectories", a.trajectories, 1usize)?;
    let cfg = MapSimConfig {
        n_frames: res.value("frames", a.frames, base.n_frames)?,
        frame_spacing: res.value("spacing", a.spacing, base.frame_spacing)?,
        perturb: perturb(&res.value("perturb", a.perturb.clone(), "noisy".to_string())?)?,
        scene: scene_spec(&mut res, &a.scene, base.scene.clone())?,
        ..base
    };
    let echo = res.finish("mapsim")?;
    if let Selection::Rate(r) = selection {
        if !(0.0..=1.0).contains(&r) {
            return Err(CliError::usage(format!("rate {r} is outside [0, 1]")));
        }
    }
    if n_traj == 0 {
        return Err(CliError::usage("trajectories must be at least 1"));
    }
    let rates = match sweep {
        Some(s) => Some(rate_grid(s.start, s.stop, s.step)?),
        None => None,
    };
    let ckpt = match ckpt_path {
        Some(p) => Some(load_checkpoint(&p)?),
        None => None,
    };
    let idx: Vec<u64> = (0..n_traj as u64).collect();
    let runs = par_map(&idx, c.jobs, |_, &i| -> pcmr_core::Result<_> {
        let traj = simulate_trajectory(&cfg, seed::derive_idx(c.seed, "trajectory", i))?;
        let scores = match (&ckpt, detector.as_str()) {
            (Some(ck), _) => detector_scores(&traj, Detector::Model(ck))?,
            (None, "random") => {
                let mut rng = seed::rng_idx(c.seed, "random-scores", i);
                traj.links.iter().map(|_| rng.random::<f64>()).collect()
            }
            _ => detector_scores(&traj, Detector::Oracle)?,
        };
        let mut report = run_selection(&traj, &scores, selection)?;
        if let Some(rates) = &rates {
            report.sweep = mapsim::sweep(std::slice::from_ref(&traj), std::slice::from_ref(&scores), rates)?;
        }
        Ok(report)
    });
    let reports = runs.into_iter().collect::<pcmr_core::Result<Vec<_>>>()?;
    write(
        &out.join("mapsim_report.json"),
        &(serde_json::to_string_pretty(&reports).map_err(pcmr_core::Error::from)? + "\n"),
    )?;
    if let Some(rates) = &rates {
        let mean: Vec<(f64, f64)> = rates
            .iter()
            .enumerate()
            .map(|(k, &r)| (r, reports.iter().map(|rep| rep.sweep[k].1).sum::<f64>() / reports.len() as f64))
            .collect();
        let csv = sweep_csv(&mean);
        write(&out.join("mapsim_sweep.csv"), &csv)?;
        print!("{csv}");
    }
    write(&out.join(CONFIG_ECHO), &echo)?;
    let mean_err = reports.iter().map(|r| r.final_error).sum::<f64>() / reports.len() as f64;
    let mean_rate = reports.iter().map(|r| r.rate).sum::<f64>() / reports.len() as f64;
    println!("trajectories: {n_traj}; mean re-registration rate {mean_rate:.3}; mean final-frame error {mean_err:.4} m");
    Ok(())
}
