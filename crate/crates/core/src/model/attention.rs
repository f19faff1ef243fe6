//! Tempered multi-head attention over scale blocks.

use crate::model::linear::relu_inplace;
use crate::model::params::{AttentionParams, FusionMode, ModelParams, D_MODEL, HEAD_DIM, N_HEADS};

pub const LN_EPS: f64 = 1e-9;

/// Splits `f ∈ R^{5S+3}` into `S` blocks `[H_joint, H_sep, D, ρ_joint, ρ_sep, c, d, b]`.
pub fn split_scales(f: &[f64]) -> Vec<[f64; D_MODEL]> {
    assert!(f.len() >= 8 && (f.len() - 3) % 5 == 0, "feature length {}", f.len());
    let s = (f.len() - 3) / 5;
    let global = &f[5 * s..];
    (0..s)
        .map(|k| {
            let mut b = [0.0; D_MODEL];
            b[..5].copy_from_slice(&f[5 * k..5 * k + 5]);
            b[5..].copy_from_slice(global);
            b
        })
        .collect()
}

/// Intermediate values kept for the backward pass.
#[derive(Debug, Clone)]
pub struct AttentionCache {
    pub blocks: Vec<[f64; D_MODEL]>,
    pub query_pre: Vec<f64>,
    pub query_hidden: Vec<f64>,
    pub query: Vec<f64>,
    /// Per head `W_q q`.
    pub head_q: Vec<[f64; HEAD_DIM]>,
    /// Per head and scale, index `i * S + s`.
    pub head_k: Vec<[f64; HEAD_DIM]>,
    pub head_v: Vec<[f64; HEAD_DIM]>,
    /// Attention weights, index `i * S + s`.
    pub alpha: Vec<f64>,
    pub concat: [f64; D_MODEL],
    pub normalized: [f64; D_MODEL],
    pub inv_std: f64,
    pub output: [f64; D_MODEL],
}

impl AttentionCache {
    pub fn alpha(&self, head: usize) -> &[f64] {
        let s = self.blocks.len();
        &self.alpha[head * s..(head + 1) * s]
    }
}

fn softmax_inplace(v: &mut [f64]) {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut z = 0.0;
    for x in v.iter_mut() {
        *x = (*x - m).exp();
        z += *x;
    }
    for x in v.iter_mut() {
        *x /= z;
    }
}

/// Fuses the scale blocks of one anchor into `f̃ ∈ R^8`.
pub fn scale_attention(f: &[f64], params: &ModelParams) -> AttentionCache {
    let a = &params.attention;
    let blocks = split_scales(f);
    let s = blocks.len();
    let mut head_k = vec![[0.0; HEAD_DIM]; N_HEADS * s];
    let mut head_v = vec![[0.0; HEAD_DIM]; N_HEADS * s];
    for i in 0..N_HEADS {
        for (k, blk) in blocks.iter().enumerate() {
            a.wv[i].forward(blk, &mut head_v[i * s + k]);
        }
    }
    let mut alpha = vec![1.0 / s as f64; N_HEADS * s];
    let mut head_q = vec![[0.0; HEAD_DIM]; N_HEADS];
    let (mut query_pre, mut query_hidden, mut query) = (Vec::new(), Vec::new(), Vec::new());
    if let (FusionMode::Attention, Some(qp)) = (params.config.fusion, a.query.as_ref()) {
        query_pre = vec![0.0; qp.mlp1.n_out];
        qp.mlp1.forward(f, &mut query_pre);
        query_hidden = query_pre.clone();
        relu_inplace(&mut query_hidden);
        query = vec![0.0; D_MODEL];
        qp.mlp2.forward(&query_hidden, &mut query);
        let scale = 1.0 / ((HEAD_DIM as f64).sqrt() * params.config.temperature);
        for i in 0..N_HEADS {
            qp.wq[i].forward(&query, &mut head_q[i]);
            let logits = &mut alpha[i * s..(i + 1) * s];
            for (k, blk) in blocks.iter().enumerate() {
                qp.wk[i].forward(blk, &mut head_k[i * s + k]);
                logits[k] = dot(&head_q[i], &head_k[i * s + k]) * scale;
            }
            softmax_inplace(logits);
        }
    }
    let mut concat = [0.0; D_MODEL];
    for i in 0..N_HEADS {
        for k in 0..s {
            let w = alpha[i * s + k];
            for d in 0..HEAD_DIM {
                concat[i * HEAD_DIM + d] += w * head_v[i * s + k][d];
            }
        }
    }
    let mut projected = [0.0; D_MODEL];
    a.wo.forward(&concat, &mut projected);
    let (normalized, inv_std) = layer_norm(&projected);
    let mut output = [0.0; D_MODEL];
    for d in 0..D_MODEL {
        output[d] = a.ln_gain[d] * normalized[d] + a.ln_bias[d];
    }
    AttentionCache {
        blocks,
        query_pre,
        query_hidden,
        query,
        head_q,
        head_k,
        head_v,
        alpha,
        concat,
        normalized,
        inv_std,
        output,
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Returns the standardised vector and `1/√(var + eps)`.
pub fn layer_norm(x: &[f64; D_MODEL]) -> ([f64; D_MODEL], f64) {
    let n = D_MODEL as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let inv_std = 1.0 / (var + LN_EPS).sqrt();
    let mut out = [0.0; D_MODEL];
    for d in 0..D_MODEL {
        out[d] = (x[d] - mean) * inv_std;
    }
    (out, inv_std)
}

/// Accumulates gradients for the attention block given `∂L/∂f̃`.
pub fn scale_attention_backward(
    f: &[f64],
    cache: &AttentionCache,
    d_out: &[f64],
    params: &ModelParams,
    grad: &mut AttentionParams,
    temperature: f64,
) {
    let a = &params.attention;
    let s = cache.blocks.len();
    let mut dn = [0.0; D_MODEL];
    for d in 0..D_MODEL {
        grad.ln_gain[d] += d_out[d] * cache.normalized[d];
        grad.ln_bias[d] += d_out[d];
        dn[d] = d_out[d] * a.ln_gain[d];
    }
    let n = D_MODEL as f64;
    let mean_dn = dn.iter().sum::<f64>() / n;
    let mean_dn_n = dn.iter().zip(&cache.normalized).map(|(g, x)| g * x).sum::<f64>() / n;
    let mut dproj = [0.0; D_MODEL];
    for d in 0..D_MODEL {
        dproj[d] = cache.inv_std * (dn[d] - mean_dn - cache.normalized[d] * mean_dn_n);
    }
    let mut dconcat = [0.0; D_MODEL];
    a.wo.backward(&cache.concat, &dproj, &mut grad.wo, Some(&mut dconcat));

    let attn = params.config.fusion == FusionMode::Attention;
    let mut dquery = vec![0.0; D_MODEL];
    let scale = 1.0 / ((HEAD_DIM as f64).sqrt() * temperature);
    for i in 0..N_HEADS {
        let dv_head = &dconcat[i * HEAD_DIM..(i + 1) * HEAD_DIM];
        let mut dalpha = vec![0.0; s];
        for k in 0..s {
            let w = cache.alpha[i * s + k];
            dalpha[k] = dot(dv_head, &cache.head_v[i * s + k]);
            let dv = [w * dv_head[0], w * dv_head[1]];
            a.wv[i].backward(&cache.blocks[k], &dv, &mut grad.wv[i], None);
        }
        if !attn {
            continue;
        }
        let (qp, gq) = (a.query.as_ref().unwrap(), grad.query.as_mut().unwrap());
        let alpha = &cache.alpha[i * s..(i + 1) * s];
        let weighted: f64 = alpha.iter().zip(&dalpha).map(|(w, g)| w * g).sum();
        let mut dq_head = [0.0; HEAD_DIM];
        for k in 0..s {
            let dlogit = alpha[k] * (dalpha[k] - weighted) * scale;
            let kk = &cache.head_k[i * s + k];
            for d in 0..HEAD_DIM {
                dq_head[d] += dlogit * kk[d];
            }
            let dk = [dlogit * cache.head_q[i][0], dlogit * cache.head_q[i][1]];
            qp.wk[i].backward(&cache.blocks[k], &dk, &mut gq.wk[i], None);
        }
        qp.wq[i].backward(&cache.query, &dq_head, &mut gq.wq[i], Some(&mut dquery));
    }
    if attn {
        let (qp, gq) = (a.query.as_ref().unwrap(), grad.query.as_mut().unwrap());
        let mut dhidden = vec![0.0; qp.mlp1.n_out];
        qp.mlp2.backward(&cache.query_hidden, &dquery, &mut gq.mlp2, Some(&mut dhidden));
        crate::model::linear::relu_backward(&cache.query_pre, &mut dhidden);
        qp.mlp1.backward(f, &dhidden, &mut gq.mlp1, None);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::params::ModelConfig;
    use proptest::prelude::*;

    fn random_features(s: usize, seed: u64) -> Vec<f64> {
        use rand::RngExt;
        let mut rng = crate::seed::rng(seed, "attention-test");
        (0..5 * s + 3).map(|_| rng.random_range(-2.0..2.0)).collect()
    }

    #[test]
    fn split_matches_index_oracle() {
        let f: Vec<f64> = (0..18).map(|i| 100.0 + i as f64).collect();
        let blocks = split_scales(&f);
        assert_eq!(blocks.len(), 3);
        for (s, b) in blocks.iter().enumerate() {
            for j in 0..5 {
                assert_eq!(b[j], 100.0 + (5 * s + j) as f64);
            }
            assert_eq!(&b[5..], &[115.0, 116.0, 117.0]);
        }
    }

    #[test]
    fn equal_blocks_give_uniform_weights() {
        let p = ModelParams::init(&ModelConfig::default(), 4).unwrap();
        let mut f = vec![0.0; 18];
        for s in 0..3 {
            f[5 * s..5 * s + 5].copy_from_slice(&[0.3, -1.2, 0.8, 0.1, 0.5]);
        }
        f[15..].copy_from_slice(&[0.7, 2.0, 1.0]);
        let c = scale_attention(&f, &p);
        for w in &c.alpha {
            assert!((w - 1.0 / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn low_temperature_concentrates_weight() {
        let cfg = ModelConfig {
            temperature: 1e-3,
            ..Default::default()
        };
        let p = ModelParams::init(&cfg, 9).unwrap();
        let c = scale_attention(&random_features(3, 1), &p);
        for i in 0..N_HEADS {
            let m = c.alpha(i).iter().copied().fold(0.0, f64::max);
            assert!(m > 0.999, "head {i}: {:?}", c.alpha(i));
        }
    }

    #[test]
    fn average_fusion_uses_uniform_weights() {
        let cfg = ModelConfig {
            fusion: FusionMode::Average,
            ..Default::default()
        };
        let p = ModelParams::init(&cfg, 2).unwrap();
        let c = scale_attention(&random_features(3, 5), &p);
        assert!(c.alpha.iter().all(|&w| w == 1.0 / 3.0));
    }

    /// Two scales, unit projections, everything worked out by hand.
    #[test]
    fn two_scale_toy_matches_hand_calculation() {
        let cfg = ModelConfig {
            n_scales: 2,
            temperature: 0.5,
            ..Default::default()
        };
        let mut p = ModelParams::zeros(&cfg);
        let unit2x8 = |r0: usize, r1: usize| {
            let mut w = vec![0.0; 16];
            w[r0] = 1.0;
            w[8 + r1] = 1.0;
            w
        };
        {
            let q = p.attention.query.as_mut().unwrap();
            // φ: hidden = first 13 inputs copied into 16 units; q = hidden[0..8]
            for j in 0..13 {
                q.mlp1.weight[j * 13 + j] = 1.0;
            }
            for j in 0..8 {
                q.mlp2.weight[j * 16 + j] = 1.0;
            }
            for i in 0..N_HEADS {
                q.wq[i].weight = unit2x8(0, 1);
                q.wk[i].weight = unit2x8(0, 1);
            }
        }
        for i in 0..N_HEADS {
            p.attention.wv[i].weight = unit2x8(2 * (i % 2), 2 * (i % 2) + 1);
        }
        for d in 0..8 {
            p.attention.wo.weight[d * 8 + d] = 1.0;
        }
        p.attention.ln_gain.fill(1.0);
        // blocks: s0 = [1,0,2,0,0 | c d b], s1 = [0,1,0,4,0 | c d b]
        let f = vec![1.0, 0.0, 2.0, 0.0, 0.0, 0.0, 1.0, 0.0, 4.0, 0.0, 0.0, 0.0, 0.0];
        let c = scale_attention(&f, &p);
        // q = [1,0,2,0,0,0,1,0]; W_q q = (1,0); keys (1,0), (0,1)
        // logits = (1, 0) / (√2 · 0.5) = (√2, 0)
        let e = (2f64.sqrt()).exp();
        let a0 = e / (e + 1.0);
        let a1 = 1.0 / (e + 1.0);
        for i in 0..N_HEADS {
            assert!((c.alpha(i)[0] - a0).abs() < 1e-15);
            assert!((c.alpha(i)[1] - a1).abs() < 1e-15);
        }
        // even heads read slots (0,1): v0 = (1,0), v1 = (0,1)
        // odd heads read slots (2,3): v0 = (2,0), v1 = (0,4)
        let concat = [a0, a1, 2.0 * a0, 4.0 * a1, a0, a1, 2.0 * a0, 4.0 * a1];
        let mean = concat.iter().sum::<f64>() / 8.0;
        let var = concat.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / 8.0;
        for d in 0..8 {
            let want = (concat[d] - mean) / (var + LN_EPS).sqrt();
            assert!((c.output[d] - want).abs() < 1e-12, "{d}: {} vs {want}", c.output[d]);
        }
    }

    proptest! {
        #[test]
        fn weights_are_a_distribution(seed in 0u64..500, tau in 0.05f64..2.0) {
            let cfg = ModelConfig { temperature: tau, ..Default::default() };
            let p = ModelParams::init(&cfg, seed).unwrap();
            let c = scale_attention(&random_features(3, seed + 1), &p);
            for i in 0..N_HEADS {
                let a = c.alpha(i);
                prop_assert!((a.iter().sum::<f64>() - 1.0).abs() < 1e-12);
                prop_assert!(a.iter().all(|&w| w > 0.0 && w < 1.0));
            }
        }

        #[test]
        fn layer_norm_standardises(seed in 0u64..500) {
            let p = ModelParams::init(&ModelConfig::default(), seed).unwrap();
            let c = scale_attention(&random_features(3, seed), &p);
            let mean = c.normalized.iter().sum::<f64>() / 8.0;
            let var = c.normalized.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 8.0;
            prop_assert!(mean.abs() < 1e-6);
            prop_assert!((var - 1.0).abs() < 1e-6);
        }

        #[test]
        fn permuting_scale_blocks_with_fixed_query_leaves_output_unchanged(seed in 0u64..200) {
            let mut p = ModelParams::init(&ModelConfig::default(), seed).unwrap();
            // let the query read only the global slots so it is unaffected by the permutation
            let q = p.attention.query.as_mut().unwrap();
            for o in 0..q.mlp1.n_out {
                q.mlp1.weight[o * 18..o * 18 + 15].fill(0.0);
            }
            let f = random_features(3, seed + 7);
            let mut g = f.clone();
            g[..5].copy_from_slice(&f[10..15]);
            g[10..15].copy_from_slice(&f[..5]);
            let (a, b) = (scale_attention(&f, &p), scale_attention(&g, &p));
            for d in 0..8 {
                prop_assert!((a.output[d] - b.output[d]).abs() < 1e-12);
            }
        }
    }
}
