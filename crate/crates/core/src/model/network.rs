//! Full regressor: scale attention per anchor, set encoder, regression head.

use crate::error::{Error, Result};
use crate::geom::Vec3;
use crate::model::attention::{scale_attention, scale_attention_backward, AttentionCache};
use crate::model::encoder::{encode, encode_backward, EncoderCache};
use crate::model::linear::{relu_backward, relu_inplace, sigmoid, softplus};
use crate::model::params::{ModelParams, D_MODEL, HEAD_HIDDEN};

/// Standardised features of every anchor of one pair plus anchor positions.
#[derive(Debug, Clone, PartialEq)]
pub struct PairInput {
    pub dim: usize,
    /// Row-major `n_anchors × dim`.
    pub features: Vec<f64>,
    pub positions: Vec<Vec3>,
}

impl PairInput {
    pub fn new(dim: usize, features: Vec<f64>, positions: Vec<Vec3>) -> Result<Self> {
        if dim == 0 || features.len() != dim * positions.len() {
            return Err(Error::InvalidArgument(format!(
                "{} feature values for {} anchors of width {dim}",
                features.len(),
                positions.len()
            )));
        }
        Ok(Self {
            dim,
            features,
            positions,
        })
    }

    pub fn n_anchors(&self) -> usize {
        self.positions.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }
}

#[derive(Debug, Clone)]
pub struct ForwardCache {
    pub attention: Vec<AttentionCache>,
    pub tokens: Vec<[f64; D_MODEL]>,
    pub encoder: EncoderCache,
    pub pre1: Vec<f64>,
    pub act1: Vec<f64>,
    pub pre2: Vec<f64>,
    pub act2: Vec<f64>,
    pub logit: f64,
    pub prediction: f64,
}

fn check_input(input: &PairInput, params: &ModelParams) -> Result<()> {
    if input.n_anchors() < 2 {
        return Err(Error::InvalidArgument(format!(
            "at least 2 anchors required, got {}",
            input.n_anchors()
        )));
    }
    if input.dim != params.config.feature_dim() {
        return Err(Error::InvalidArgument(format!(
            "feature width {} does not match model width {}",
            input.dim,
            params.config.feature_dim()
        )));
    }
    Ok(())
}

pub fn forward_cached(input: &PairInput, params: &ModelParams) -> Result<ForwardCache> {
    check_input(input, params)?;
    let attention: Vec<AttentionCache> =
        (0..input.n_anchors()).map(|i| scale_attention(input.row(i), params)).collect();
    let tokens: Vec<[f64; D_MODEL]> = attention.iter().map(|c| c.output).collect();
    let encoder = encode(&tokens, &input.positions, params.config.encoder_neighbors, &params.encoder);
    let h = &params.head;
    let mut pre1 = vec![0.0; HEAD_HIDDEN[0]];
    h.l1.forward(&encoder.pooled, &mut pre1);
    let mut act1 = pre1.clone();
    relu_inplace(&mut act1);
    let mut pre2 = vec![0.0; HEAD_HIDDEN[1]];
    h.l2.forward(&act1, &mut pre2);
    let mut act2 = pre2.clone();
    relu_inplace(&mut act2);
    let mut logit = [0.0];
    h.l3.forward(&act2, &mut logit);
    Ok(ForwardCache {
        attention,
        tokens,
        encoder,
        pre1,
        act1,
        pre2,
        act2,
        logit: logit[0],
        prediction: softplus(logit[0]),
    })
}

/// Predicted alignment error in metres (non-negative).
pub fn forward(input: &PairInput, params: &ModelParams) -> Result<f64> {
    Ok(forward_cached(input, params)?.prediction)
}

/// Squared error.
pub fn loss(pred: f64, label: f64) -> f64 {
    (pred - label) * (pred - label)
}

/// Mean of [`loss`] over matched slices.
pub fn batch_loss(preds: &[f64], labels: &[f64]) -> f64 {
    assert_eq!(preds.len(), labels.len());
    preds.iter().zip(labels).map(|(p, l)| loss(*p, *l)).sum::<f64>() / preds.len() as f64
}

/// Accumulates `d_pred · ∂prediction/∂θ` into `grad`.
pub fn backward(input: &PairInput, cache: &ForwardCache, d_pred: f64, params: &ModelParams, grad: &mut ModelParams) {
    let h = &params.head;
    let d_logit = [d_pred * sigmoid(cache.logit)];
    let mut d_act2 = vec![0.0; HEAD_HIDDEN[1]];
    h.l3.backward(&cache.act2, &d_logit, &mut grad.head.l3, Some(&mut d_act2));
    relu_backward(&cache.pre2, &mut d_act2);
    let mut d_act1 = vec![0.0; HEAD_HIDDEN[0]];
    h.l2.backward(&cache.act1, &d_act2, &mut grad.head.l2, Some(&mut d_act1));
    relu_backward(&cache.pre1, &mut d_act1);
    let mut d_pooled = vec![0.0; cache.encoder.pooled.len()];
    h.l1.backward(&cache.encoder.pooled, &d_act1, &mut grad.head.l1, Some(&mut d_pooled));
    let d_tokens = encode_backward(&cache.tokens, &cache.encoder, &d_pooled, &params.encoder, &mut grad.encoder);
    for (i, (ac, dt)) in cache.attention.iter().zip(&d_tokens).enumerate() {
        scale_attention_backward(input.row(i), ac, dt, params, &mut grad.attention, params.config.temperature);
    }
}

/// Mean squared-error loss over a batch and its gradient, summed in input
/// order.
pub fn loss_and_gradient(inputs: &[&PairInput], labels: &[f64], params: &ModelParams) -> Result<(f64, ModelParams)> {
    assert_eq!(inputs.len(), labels.len());
    let mut grad = ModelParams::zeros(&params.config);
    let n = inputs.len() as f64;
    let mut total = 0.0;
    for (input, &label) in inputs.iter().zip(labels) {
        let cache = forward_cached(input, params)?;
        total += loss(cache.prediction, label);
        let d_pred = 2.0 * (cache.prediction - label) / n;
        backward(input, &cache, d_pred, params, &mut grad);
    }
    Ok((total / n, grad))
}
