//! Model architecture description and parameter containers with a stable
//! flat view.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::linear::{Linear, Tensor};
use crate::seed;

/// Width of each scale block and of the attended feature.
pub const D_MODEL: usize = 8;
pub const N_HEADS: usize = 4;
pub const HEAD_DIM: usize = 2;
pub const QUERY_HIDDEN: usize = 16;
pub const ENC_HIDDEN: usize = 32;
pub const POS_HIDDEN: usize = 8;
pub const HEAD_HIDDEN: [usize; 2] = [32, 16];
/// Relative anchor positions are divided by this (metres) before encoding.
pub const POSITION_SCALE: f64 = 10.0;

/// How per-scale blocks are fused into one token.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FusionMode {
    /// Learned query, tempered per-head softmax over scales.
    Attention,
    /// Uniform weights `1/S`; no query or key parameters.
    Average,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub n_scales: usize,
    pub fusion: FusionMode,
    /// Softmax temperature τ > 0; fixed, never trained.
    pub temperature: f64,
    /// Anchors attended to by each token in the encoder (self included).
    pub encoder_neighbors: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            n_scales: 3,
            fusion: FusionMode::Attention,
            temperature: 0.6,
            encoder_neighbors: 16,
        }
    }
}

impl ModelConfig {
    pub fn feature_dim(&self) -> usize {
        5 * self.n_scales + 3
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_scales == 0 {
            return Err(Error::InvalidArgument("n_scales must be at least 1".into()));
        }
        if !(self.temperature > 0.0) || !self.temperature.is_finite() {
            return Err(Error::InvalidArgument("temperature must be positive".into()));
        }
        if self.encoder_neighbors == 0 {
            return Err(Error::InvalidArgument("encoder_neighbors must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QueryParams {
    /// φ: `(5S+3) → 16 → 8` with ReLU between.
    pub mlp1: Linear,
    pub mlp2: Linear,
    pub wq: Vec<Linear>,
    pub wk: Vec<Linear>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttentionParams {
    /// Absent for [`FusionMode::Average`].
    pub query: Option<QueryParams>,
    pub wv: Vec<Linear>,
    pub wo: Linear,
    pub ln_gain: Vec<f64>,
    pub ln_bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    pub lift: Linear,
    pub phi: Linear,
    pub psi: Linear,
    pub value: Linear,
    pub pos1: Linear,
    pub pos2: Linear,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeadParams {
    pub l1: Linear,
    pub l2: Linear,
    pub l3: Linear,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub config: ModelConfig,
    pub attention: AttentionParams,
    pub encoder: EncoderParams,
    pub head: HeadParams,
}

impl ModelParams {
    /// All-zero parameters (also used as a gradient accumulator).
    pub fn zeros(config: &ModelConfig) -> Self {
        let query = (config.fusion == FusionMode::Attention).then(|| QueryParams {
            mlp1: Linear::zeros(config.feature_dim(), QUERY_HIDDEN, true),
            mlp2: Linear::zeros(QUERY_HIDDEN, D_MODEL, true),
            wq: (0..N_HEADS).map(|_| Linear::zeros(D_MODEL, HEAD_DIM, false)).collect(),
            wk: (0..N_HEADS).map(|_| Linear::zeros(D_MODEL, HEAD_DIM, false)).collect(),
        });
        Self {
            config: config.clone(),
            attention: AttentionParams {
                query,
                wv: (0..N_HEADS).map(|_| Linear::zeros(D_MODEL, HEAD_DIM, false)).collect(),
                wo: Linear::zeros(N_HEADS * HEAD_DIM, D_MODEL, false),
                ln_gain: vec![0.0; D_MODEL],
                ln_bias: vec![0.0; D_MODEL],
            },
            encoder: EncoderParams {
                lift: Linear::zeros(D_MODEL, ENC_HIDDEN, true),
                phi: Linear::zeros(ENC_HIDDEN, ENC_HIDDEN, true),
                psi: Linear::zeros(ENC_HIDDEN, ENC_HIDDEN, true),
                value: Linear::zeros(ENC_HIDDEN, ENC_HIDDEN, true),
                pos1: Linear::zeros(3, POS_HIDDEN, true),
                pos2: Linear::zeros(POS_HIDDEN, ENC_HIDDEN, true),
            },
            head: HeadParams {
                l1: Linear::zeros(ENC_HIDDEN, HEAD_HIDDEN[0], true),
                l2: Linear::zeros(HEAD_HIDDEN[0], HEAD_HIDDEN[1], true),
                l3: Linear::zeros(HEAD_HIDDEN[1], 1, true),
            },
        }
    }

    /// Seeded uniform initialisation; layer-norm gain 1, bias 0.
    pub fn init(config: &ModelConfig, init_seed: u64) -> Result<Self> {
        config.validate()?;
        let mut p = Self::zeros(config);
        let mut rng = seed::rng(init_seed, "model-init");
        for lin in p.linears_mut() {
            lin.init_uniform(&mut rng);
        }
        p.attention.ln_gain.fill(1.0);
        Ok(p)
    }

    fn linears_mut(&mut self) -> Vec<&mut Linear> {
        let mut v: Vec<&mut Linear> = Vec::new();
        if let Some(q) = self.attention.query.as_mut() {
            v.push(&mut q.mlp1);
            v.push(&mut q.mlp2);
            v.extend(q.wq.iter_mut());
            v.extend(q.wk.iter_mut());
        }
        v.extend(self.attention.wv.iter_mut());
        v.push(&mut self.attention.wo);
        let e = &mut self.encoder;
        v.extend([&mut e.lift, &mut e.phi, &mut e.psi, &mut e.value, &mut e.pos1, &mut e.pos2]);
        let h = &mut self.head;
        v.extend([&mut h.l1, &mut h.l2, &mut h.l3]);
        v
    }

    /// Named tensors in the canonical flat order.
    pub fn tensors(&self) -> Vec<Tensor<'_>> {
        let mut out = Vec::new();
        let a = &self.attention;
        if let Some(q) = &a.query {
            q.mlp1.push_tensors("attention.query.mlp1", &mut out);
            q.mlp2.push_tensors("attention.query.mlp2", &mut out);
            for (i, w) in q.wq.iter().enumerate() {
                w.push_tensors(&format!("attention.wq{i}"), &mut out);
            }
            for (i, w) in q.wk.iter().enumerate() {
                w.push_tensors(&format!("attention.wk{i}"), &mut out);
            }
        }
        for (i, w) in a.wv.iter().enumerate() {
            w.push_tensors(&format!("attention.wv{i}"), &mut out);
        }
        a.wo.push_tensors("attention.wo", &mut out);
        out.push(Tensor {
            name: "attention.ln.gain".into(),
            shape: vec![D_MODEL],
            data: &a.ln_gain,
        });
        out.push(Tensor {
            name: "attention.ln.bias".into(),
            shape: vec![D_MODEL],
            data: &a.ln_bias,
        });
        let e = &self.encoder;
        e.lift.push_tensors("encoder.lift", &mut out);
        e.phi.push_tensors("encoder.phi", &mut out);
        e.psi.push_tensors("encoder.psi", &mut out);
        e.value.push_tensors("encoder.value", &mut out);
        e.pos1.push_tensors("encoder.pos1", &mut out);
        e.pos2.push_tensors("encoder.pos2", &mut out);
        let h = &self.head;
        h.l1.push_tensors("head.l1", &mut out);
        h.l2.push_tensors("head.l2", &mut out);
        h.l3.push_tensors("head.l3", &mut out);
        out
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::new();
        let a = &mut self.attention;
        if let Some(q) = a.query.as_mut() {
            q.mlp1.push_tensors_mut(&mut out);
            q.mlp2.push_tensors_mut(&mut out);
            for w in q.wq.iter_mut() {
                w.push_tensors_mut(&mut out);
            }
            for w in q.wk.iter_mut() {
                w.push_tensors_mut(&mut out);
            }
        }
        for w in a.wv.iter_mut() {
            w.push_tensors_mut(&mut out);
        }
        a.wo.push_tensors_mut(&mut out);
        out.push(&mut a.ln_gain);
        out.push(&mut a.ln_bias);
        let e = &mut self.encoder;
        for l in [&mut e.lift, &mut e.phi, &mut e.psi, &mut e.value, &mut e.pos1, &mut e.pos2] {
            l.push_tensors_mut(&mut out);
        }
        let h = &mut self.head;
        for l in [&mut h.l1, &mut h.l2, &mut h.l3] {
            l.push_tensors_mut(&mut out);
        }
        out
    }

    /// `(name, shape)` for every tensor, in flat order.
    pub fn manifest(&self) -> Vec<(String, Vec<usize>)> {
        self.tensors().into_iter().map(|t| (t.name, t.shape)).collect()
    }

    pub fn n_params(&self) -> usize {
        self.tensors().iter().map(|t| t.data.len()).sum()
    }

    /// Parameters of the scale-fusion block only.
    pub fn n_attention_params(&self) -> usize {
        self.tensors()
            .iter()
            .filter(|t| t.name.starts_with("attention."))
            .map(|t| t.data.len())
            .sum()
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.n_params());
        for t in self.tensors() {
            v.extend_from_slice(t.data);
        }
        v
    }

    pub fn from_flat(config: &ModelConfig, flat: &[f64]) -> Result<Self> {
        let mut p = Self::zeros(config);
        p.set_flat(flat)?;
        Ok(p)
    }

    pub fn set_flat(&mut self, flat: &[f64]) -> Result<()> {
        let expected = self.n_params();
        if flat.len() != expected {
            return Err(Error::InvalidArgument(format!(
                "flat parameter vector has {} entries, expected {expected}",
                flat.len()
            )));
        }
        let mut off = 0;
        for t in self.tensors_mut() {
            let n = t.len();
            t.copy_from_slice(&flat[off..off + n]);
            off += n;
        }
        Ok(())
    }

    /// `self += scale · other` (same architecture).
    pub fn add_scaled(&mut self, other: &ModelParams, scale: f64) {
        let src = other.to_flat();
        let mut off = 0;
        for t in self.tensors_mut() {
            for v in t.iter_mut() {
                *v += scale * src[off];
                off += 1;
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.data.iter().all(|v| v.is_finite()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn attention_block_parameter_count() {
        let p = ModelParams::zeros(&ModelConfig::default());
        // φ: 18·16+16 + 16·8+8; 12 head projections of 2×8; W_o; layer norm
        let expected = (18 * 16 + 16) + (16 * 8 + 8) + 12 * 16 + 64 + 16;
        assert_eq!(expected, 712);
        assert_eq!(p.n_attention_params(), expected);
    }

    #[test]
    fn average_fusion_drops_query_and_keys() {
        let cfg = ModelConfig {
            fusion: FusionMode::Average,
            ..Default::default()
        };
        let p = ModelParams::zeros(&cfg);
        assert_eq!(p.n_attention_params(), 4 * 16 + 64 + 16);
    }

    #[test]
    fn single_scale_models_share_a_count() {
        let cfg = |fusion| ModelConfig {
            n_scales: 1,
            fusion,
            ..Default::default()
        };
        let a = ModelParams::zeros(&cfg(FusionMode::Average)).n_params();
        let b = ModelParams::zeros(&cfg(FusionMode::Average)).n_params();
        assert_eq!(a, b);
    }

    #[test]
    fn flat_roundtrip_is_identity() {
        let cfg = ModelConfig::default();
        let p = ModelParams::init(&cfg, 3).unwrap();
        let flat = p.to_flat();
        assert_eq!(flat.len(), p.n_params());
        let q = ModelParams::from_flat(&cfg, &flat).unwrap();
        assert_eq!(p, q);
        assert!(ModelParams::from_flat(&cfg, &flat[1..]).is_err());
    }

    #[test]
    fn manifest_names_are_unique() {
        let p = ModelParams::zeros(&ModelConfig::default());
        let names: std::collections::BTreeSet<_> = p.manifest().into_iter().map(|m| m.0).collect();
        assert_eq!(names.len(), p.manifest().len());
    }

    #[test]
    fn init_is_seeded_and_bounded() {
        let cfg = ModelConfig::default();
        let a = ModelParams::init(&cfg, 1).unwrap();
        assert_eq!(a, ModelParams::init(&cfg, 1).unwrap());
        assert_ne!(a, ModelParams::init(&cfg, 2).unwrap());
        let q = a.attention.query.as_ref().unwrap();
        let bound = 1.0 / (18f64).sqrt();
        assert!(q.mlp1.weight.iter().all(|w| w.abs() <= bound));
        assert!(a.attention.ln_gain.iter().all(|&g| g == 1.0));
    }
}
