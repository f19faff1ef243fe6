//! Minibatch training with best-validation checkpoint selection.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::ScaleConfig;
use crate::geom::RegisteredPair;
use crate::model::{forward, forward_cached, loss, Checkpoint, FusionMode, ModelConfig, ModelParams, PairInput, TrainMeta};
use crate::parallel::par_map;
use crate::seed;
use crate::synth::Split;
use crate::train::features::{fit_stats, model_input, pair_features, FeatureSet, PairFeatures};
use crate::train::metrics::{evaluate_predictions, EvalReport};
use crate::train::optim::{Adam, AdamConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub seed: u64,
    /// Anchors per cloud.
    pub n_anchors: usize,
    pub scales: ScaleConfig,
    pub temperature: f64,
    pub fusion: FusionMode,
    /// Indices into `scales.radii` fed to the model.
    pub scale_selection: Vec<usize>,
    /// Stop after this many epochs without a validation improvement.
    pub patience: usize,
    pub encoder_neighbors: usize,
    pub jobs: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 300,
            batch_size: 16,
            adam: AdamConfig::default(),
            seed: 0,
            n_anchors: 16,
            scales: ScaleConfig {
                max_neighborhood_points: 32,
                ..ScaleConfig::default()
            },
            temperature: 0.6,
            fusion: FusionMode::Attention,
            scale_selection: vec![0, 1, 2],
            patience: 50,
            encoder_neighbors: 16,
            jobs: 1,
        }
    }
}

impl TrainConfig {
    pub fn model_config(&self) -> ModelConfig {
        ModelConfig {
            n_scales: self.scale_selection.len(),
            fusion: self.fusion,
            temperature: self.temperature,
            encoder_neighbors: self.encoder_neighbors,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.to_string()));
        if self.epochs == 0 || self.batch_size == 0 || self.n_anchors == 0 {
            return bad("epochs, batch_size and n_anchors must be positive");
        }
        let a = &self.adam;
        if !(a.lr >= 0.0) || !(0.0..1.0).contains(&a.beta1) || !(0.0..1.0).contains(&a.beta2) || !(a.eps > 0.0) {
            return bad("invalid optimiser settings");
        }
        if self.scale_selection.is_empty() || self.scale_selection.iter().any(|&s| s >= self.scales.radii.len()) {
            return bad("scale selection must index the configured radii");
        }
        self.scales.validate()?;
        self.model_config().validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_rmse: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    pub history: Vec<EpochLog>,
}

fn inputs_for(pairs: &[&PairFeatures], set: &FeatureSet, cfg: &TrainConfig, stats: &crate::model::FeatureStats) -> Result<Vec<PairInput>> {
    pairs.iter().map(|p| model_input(p, set.dim, &cfg.scale_selection, stats)).collect()
}

/// Predictions for prepared inputs, in input order.
pub fn predict_inputs(params: &ModelParams, inputs: &[PairInput], jobs: usize) -> Result<Vec<f64>> {
    par_map(inputs, jobs, |_, x| forward(x, params)).into_iter().collect()
}

fn rmse(params: &ModelParams, inputs: &[PairInput], labels: &[f64], jobs: usize) -> Result<f64> {
    let preds = predict_inputs(params, inputs, jobs)?;
    Ok(evaluate_predictions(labels, &preds).rmse)
}

/// Trains on the train split of `set`, selecting the epoch with the lowest
/// validation RMSE (training RMSE when there is no validation split).
pub fn train(set: &FeatureSet, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    if set.scales != cfg.scales || set.n_anchors != cfg.n_anchors {
        return Err(Error::InvalidArgument("feature set was extracted with different settings".into()));
    }
    let train_pairs = set.split(Split::Train);
    if train_pairs.is_empty() {
        return Err(Error::InvalidArgument("training split is empty".into()));
    }
    let val_pairs = {
        let v = set.split(Split::Val);
        if v.is_empty() {
            train_pairs.clone()
        } else {
            v
        }
    };
    let stats = fit_stats(&train_pairs, set.dim, &cfg.scale_selection)?;
    let train_x = inputs_for(&train_pairs, set, cfg, &stats)?;
    let train_y: Vec<f64> = train_pairs.iter().map(|p| p.label).collect();
    let val_x = inputs_for(&val_pairs, set, cfg, &stats)?;
    let val_y: Vec<f64> = val_pairs.iter().map(|p| p.label).collect();

    let mut params = ModelParams::init(&cfg.model_config(), seed::derive(cfg.seed, "init"))?;
    let mut theta = params.to_flat();
    let mut adam = Adam::new(cfg.adam, theta.len());
    let mut best = (rmse(&params, &val_x, &val_y, cfg.jobs)?, 0usize, params.clone());
    let mut history = Vec::new();
    let mut order: Vec<usize> = (0..train_x.len()).collect();
    let mut epochs_run = 0;
    for epoch in 1..=cfg.epochs {
        epochs_run = epoch;
        order.sort_unstable();
        order.shuffle(&mut seed::rng_idx(cfg.seed, "batch-order", epoch as u64));
        let mut epoch_loss = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let (batch_loss, grad) = batch_gradient(&params, &train_x, &train_y, batch, cfg.jobs)?;
            if !batch_loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::Diverged {
                    epoch,
                    detail: format!("batch loss {batch_loss}"),
                });
            }
            epoch_loss += batch_loss * batch.len() as f64;
            adam.step(&mut theta, &grad);
            params.set_flat(&theta)?;
        }
        if !params.is_finite() {
            return Err(Error::Diverged {
                epoch,
                detail: "non-finite parameters".into(),
            });
        }
        let val_rmse = rmse(&params, &val_x, &val_y, cfg.jobs)?;
        if !val_rmse.is_finite() {
            return Err(Error::Diverged {
                epoch,
                detail: format!("validation rmse {val_rmse}"),
            });
        }
        let train_loss = epoch_loss / train_x.len() as f64;
        log::debug!("epoch {epoch}: train loss {train_loss:.5}, val rmse {val_rmse:.5}");
        history.push(EpochLog {
            epoch,
            train_loss,
            val_rmse,
        });
        if val_rmse < best.0 {
            best = (val_rmse, epoch, params.clone());
        }
        if epoch - best.1 >= cfg.patience {
            break;
        }
    }
    let meta = TrainMeta {
        seed: cfg.seed,
        epochs_run,
        best_epoch: best.1,
        best_val_rmse: best.0,
        n_anchors: cfg.n_anchors,
        scale_selection: cfg.scale_selection.clone(),
    };
    Ok(TrainOutcome {
        checkpoint: Checkpoint::new(&best.2, cfg.scales.clone(), stats, meta),
        history,
    })
}

/// Mean squared error over `batch` and its flat gradient. Per-sample
/// gradients are reduced in batch order, so the result does not depend on
/// `jobs`.
fn batch_gradient(params: &ModelParams, xs: &[PairInput], ys: &[f64], batch: &[usize], jobs: usize) -> Result<(f64, Vec<f64>)> {
    let n = batch.len() as f64;
    let per_sample = par_map(batch, jobs, |_, &i| -> Result<(f64, Vec<f64>)> {
        let cache = forward_cached(&xs[i], params)?;
        let mut g = ModelParams::zeros(&params.config);
        crate::model::backward(&xs[i], &cache, 2.0 * (cache.prediction - ys[i]) / n, params, &mut g);
        Ok((loss(cache.prediction, ys[i]), g.to_flat()))
    });
    let mut total = 0.0;
    let mut grad = vec![0.0; params.n_params()];
    for r in per_sample {
        let (l, g) = r?;
        total += l;
        for (a, b) in grad.iter_mut().zip(&g) {
            *a += b;
        }
    }
    Ok((total / n, grad))
}

fn check_compatible(ckpt: &Checkpoint, set: &FeatureSet) -> Result<()> {
    if ckpt.scales != set.scales || ckpt.meta.n_anchors != set.n_anchors {
        return Err(Error::InvalidArgument("feature set does not match the checkpoint's extraction settings".into()));
    }
    Ok(())
}

/// Predictions of a checkpoint on the given pairs.
pub fn predict(ckpt: &Checkpoint, set: &FeatureSet, pairs: &[&PairFeatures], jobs: usize) -> Result<Vec<f64>> {
    check_compatible(ckpt, set)?;
    let params = ckpt.model_params()?;
    let inputs: Vec<PairInput> = pairs
        .iter()
        .map(|p| model_input(p, set.dim, &ckpt.meta.scale_selection, &ckpt.stats))
        .collect::<Result<_>>()?;
    predict_inputs(&params, &inputs, jobs)
}

pub fn evaluate(ckpt: &Checkpoint, set: &FeatureSet, split: Split, jobs: usize) -> Result<EvalReport> {
    let pairs = set.split(split);
    if pairs.is_empty() {
        return Err(Error::InvalidArgument(format!("{split:?} split is empty")));
    }
    let preds = predict(ckpt, set, &pairs, jobs)?;
    let labels: Vec<f64> = pairs.iter().map(|p| p.label).collect();
    Ok(evaluate_predictions(&labels, &preds))
}

/// Predicted alignment error of a single registered pair.
pub fn predict_pair(ckpt: &Checkpoint, params: &ModelParams, pair: &RegisteredPair) -> Result<f64> {
    let (features, positions) = pair_features(pair, ckpt.meta.n_anchors, &ckpt.scales)?;
    let pf = PairFeatures {
        index: 0,
        split: Split::Test,
        label: pair.label,
        features,
        positions,
    };
    let x = model_input(&pf, ckpt.scales.feature_dim(), &ckpt.meta.scale_selection, &ckpt.stats)?;
    forward(&x, params)
}
