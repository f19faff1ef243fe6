//! Local vector-attention set encoder over anchor tokens, mean pooled.

use crate::geom::Vec3;
use crate::model::linear::{relu_backward, relu_inplace};
use crate::model::params::{EncoderParams, D_MODEL, ENC_HIDDEN, POSITION_SCALE, POS_HIDDEN};

const H: usize = ENC_HIDDEN;

/// `k` nearest anchors of each anchor (self included), flat `n × k`,
/// ordered by distance then index.
pub fn anchor_neighbors(positions: &[Vec3], k: usize) -> Vec<usize> {
    let n = positions.len();
    let k = k.min(n);
    let mut out = Vec::with_capacity(n * k);
    let mut order: Vec<(f64, usize)> = Vec::with_capacity(n);
    for p in positions {
        order.clear();
        order.extend(positions.iter().enumerate().map(|(j, q)| ((p - q).norm_squared(), j)));
        order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        out.extend(order[..k].iter().map(|e| e.1));
    }
    out
}

#[derive(Debug, Clone)]
pub struct EncoderCache {
    pub k: usize,
    pub neighbors: Vec<usize>,
    pub lift_pre: Vec<f64>,
    pub hidden: Vec<f64>,
    pub query: Vec<f64>,
    pub key: Vec<f64>,
    pub value: Vec<f64>,
    /// Relative position input per edge (3 each).
    pub rel: Vec<f64>,
    pub pos_pre: Vec<f64>,
    pub pos_hidden: Vec<f64>,
    /// Position encoding per edge.
    pub delta: Vec<f64>,
    /// Channel-wise attention weights per edge.
    pub omega: Vec<f64>,
    pub pooled: Vec<f64>,
}

pub fn encode(tokens: &[[f64; D_MODEL]], positions: &[Vec3], k: usize, p: &EncoderParams) -> EncoderCache {
    let n = tokens.len();
    let neighbors = anchor_neighbors(positions, k);
    let k = neighbors.len() / n.max(1);
    let mut lift_pre = vec![0.0; n * H];
    let mut hidden = vec![0.0; n * H];
    let mut query = vec![0.0; n * H];
    let mut key = vec![0.0; n * H];
    let mut value = vec![0.0; n * H];
    for i in 0..n {
        let r = i * H..(i + 1) * H;
        p.lift.forward(&tokens[i], &mut lift_pre[r.clone()]);
        hidden[r.clone()].copy_from_slice(&lift_pre[r.clone()]);
        relu_inplace(&mut hidden[r.clone()]);
        p.phi.forward(&hidden[r.clone()], &mut query[r.clone()]);
        p.psi.forward(&hidden[r.clone()], &mut key[r.clone()]);
        p.value.forward(&hidden[r.clone()], &mut value[r]);
    }
    let e = n * k;
    let mut rel = vec![0.0; e * 3];
    let mut pos_pre = vec![0.0; e * POS_HIDDEN];
    let mut pos_hidden = vec![0.0; e * POS_HIDDEN];
    let mut delta = vec![0.0; e * H];
    let mut omega = vec![0.0; e * H];
    let mut pooled = vec![0.0; H];
    let mut y = vec![0.0; H];
    for i in 0..n {
        for t in 0..k {
            let edge = i * k + t;
            let j = neighbors[edge];
            let d = (positions[i] - positions[j]) / POSITION_SCALE;
            rel[edge * 3..edge * 3 + 3].copy_from_slice(d.as_slice());
            let (pp, ph) = (edge * POS_HIDDEN, (edge + 1) * POS_HIDDEN);
            p.pos1.forward(&rel[edge * 3..edge * 3 + 3], &mut pos_pre[pp..ph]);
            pos_hidden[pp..ph].copy_from_slice(&pos_pre[pp..ph]);
            relu_inplace(&mut pos_hidden[pp..ph]);
            p.pos2.forward(&pos_hidden[pp..ph], &mut delta[edge * H..(edge + 1) * H]);
            for c in 0..H {
                omega[edge * H + c] = query[i * H + c] - key[j * H + c] + delta[edge * H + c];
            }
        }
        // softmax over neighbours, per channel
        y.fill(0.0);
        for c in 0..H {
            let m = (0..k).map(|t| omega[(i * k + t) * H + c]).fold(f64::NEG_INFINITY, f64::max);
            let mut z = 0.0;
            for t in 0..k {
                let w = &mut omega[(i * k + t) * H + c];
                *w = (*w - m).exp();
                z += *w;
            }
            for t in 0..k {
                let edge = i * k + t;
                let j = neighbors[edge];
                let w = &mut omega[edge * H + c];
                *w /= z;
                y[c] += *w * (value[j * H + c] + delta[edge * H + c]);
            }
        }
        for c in 0..H {
            pooled[c] += hidden[i * H + c] + y[c];
        }
    }
    for v in pooled.iter_mut() {
        *v /= n as f64;
    }
    EncoderCache {
        k,
        neighbors,
        lift_pre,
        hidden,
        query,
        key,
        value,
        rel,
        pos_pre,
        pos_hidden,
        delta,
        omega,
        pooled,
    }
}

/// Accumulates encoder gradients and returns `∂L/∂token` for each anchor.
pub fn encode_backward(
    tokens: &[[f64; D_MODEL]],
    cache: &EncoderCache,
    d_pooled: &[f64],
    p: &EncoderParams,
    grad: &mut EncoderParams,
) -> Vec<[f64; D_MODEL]> {
    let n = tokens.len();
    let k = cache.k;
    let inv_n = 1.0 / n as f64;
    let dz: Vec<f64> = d_pooled.iter().map(|g| g * inv_n).collect();
    let mut d_hidden = vec![0.0; n * H];
    let mut d_query = vec![0.0; n * H];
    let mut d_key = vec![0.0; n * H];
    let mut d_value = vec![0.0; n * H];
    let mut d_delta = vec![0.0; H];
    let mut d_omega = vec![0.0; k * H];
    let mut d_pos_hidden = vec![0.0; POS_HIDDEN];
    for i in 0..n {
        for c in 0..H {
            d_hidden[i * H + c] += dz[c];
        }
        for t in 0..k {
            let edge = i * k + t;
            let j = cache.neighbors[edge];
            for c in 0..H {
                d_omega[t * H + c] = dz[c] * (cache.value[j * H + c] + cache.delta[edge * H + c]);
            }
        }
        for c in 0..H {
            let mut weighted = 0.0;
            for t in 0..k {
                weighted += cache.omega[(i * k + t) * H + c] * d_omega[t * H + c];
            }
            for t in 0..k {
                let w = cache.omega[(i * k + t) * H + c];
                d_omega[t * H + c] = w * (d_omega[t * H + c] - weighted);
            }
        }
        for t in 0..k {
            let edge = i * k + t;
            let j = cache.neighbors[edge];
            for c in 0..H {
                let w = cache.omega[edge * H + c];
                let dl = d_omega[t * H + c];
                d_value[j * H + c] += w * dz[c];
                d_delta[c] = w * dz[c] + dl;
                d_query[i * H + c] += dl;
                d_key[j * H + c] -= dl;
            }
            let (pp, ph) = (edge * POS_HIDDEN, (edge + 1) * POS_HIDDEN);
            d_pos_hidden.fill(0.0);
            p.pos2.backward(&cache.pos_hidden[pp..ph], &d_delta, &mut grad.pos2, Some(&mut d_pos_hidden));
            relu_backward(&cache.pos_pre[pp..ph], &mut d_pos_hidden);
            p.pos1.backward(&cache.rel[edge * 3..edge * 3 + 3], &d_pos_hidden, &mut grad.pos1, None);
        }
    }
    let mut d_tokens = vec![[0.0; D_MODEL]; n];
    for i in 0..n {
        let r = i * H..(i + 1) * H;
        let hid = &cache.hidden[r.clone()];
        let dh = &mut d_hidden[r.clone()];
        p.phi.backward(hid, &d_query[r.clone()], &mut grad.phi, Some(dh));
        p.psi.backward(hid, &d_key[r.clone()], &mut grad.psi, Some(dh));
        p.value.backward(hid, &d_value[r.clone()], &mut grad.value, Some(dh));
        relu_backward(&cache.lift_pre[r], dh);
        p.lift.backward(&tokens[i], dh, &mut grad.lift, Some(&mut d_tokens[i]));
    }
    d_tokens
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn neighbours_include_self_first_and_break_ties_by_index() {
        let pts = vec![Vec3::new(0.0, 0.0, 0.0), Vec3::new(1.0, 0.0, 0.0), Vec3::new(-1.0, 0.0, 0.0)];
        let nb = anchor_neighbors(&pts, 2);
        assert_eq!(nb, vec![0, 1, 1, 0, 2, 0]);
        assert_eq!(anchor_neighbors(&pts, 16).len(), 9);
    }
}
