//! Log-domain Sinkhorn iterations for entropic optimal transport between
//! uniformly weighted point sets, and the debiased Sinkhorn divergence.

use std::cmp::Ordering;

use crate::geom::Vec3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SinkhornParams {
    /// Entropic regularisation λ (squared metres).
    pub lambda: f64,
    pub max_iters: usize,
    /// Stop once the L1 row-marginal violation falls below this.
    pub tol: f64,
    /// Returned when either set is empty.
    pub default: f64,
}

impl Default for SinkhornParams {
    fn default() -> Self {
        Self {
            lambda: 0.05,
            max_iters: 200,
            tol: 1e-6,
            default: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct EntropicOt {
    /// `Σ C_ij π_ij + λ Σ π_ij ln π_ij` at the final plan.
    pub cost: f64,
    pub iterations: usize,
    pub marginal_error: f64,
}

/// Entropic OT cost with squared-Euclidean ground cost. Both sets must be
/// non-empty.
///
/// The regularisation is annealed from the largest pairwise cost down to λ,
/// one sweep per halving, before iterating at λ; `max_iters` bounds the
/// sweeps at λ only.
pub fn entropic_ot(xs: &[Vec3], ys: &[Vec3], params: &SinkhornParams) -> EntropicOt {
    let (n, m) = (xs.len(), ys.len());
    assert!(n > 0 && m > 0, "entropic_ot needs non-empty sets");
    let cost = cost_matrix(xs, ys);
    let log_a = -(n as f64).ln();
    let log_b = -(m as f64).ln();
    // potentials in cost units
    let mut f = vec![0.0; n];
    let mut g = vec![0.0; m];
    let mut buf = vec![0.0; n.max(m)];
    let mut iterations = 0;
    for eps in annealing_schedule(&cost, params.lambda) {
        update_rows(&cost, &g, &mut f, n, m, eps, log_b, &mut buf);
        update_cols(&cost, &f, &mut g, n, m, eps, log_a, &mut buf);
        iterations += 1;
    }
    let lam = params.lambda;
    let a = log_a.exp();
    let mut marginal_error = f64::INFINITY;
    let mut next_f = vec![0.0; n];
    for _ in 0..params.max_iters.max(1) {
        // columns are exact after each g update; row i of the current plan
        // sums to a · exp((f_i − f'_i) / λ)
        update_rows(&cost, &g, &mut next_f, n, m, lam, log_b, &mut buf);
        marginal_error = f.iter().zip(&next_f).map(|(o, nw)| (a * ((o - nw) / lam).exp() - a).abs()).sum();
        if marginal_error < params.tol {
            break;
        }
        std::mem::swap(&mut f, &mut next_f);
        update_cols(&cost, &f, &mut g, n, m, lam, log_a, &mut buf);
        iterations += 1;
    }
    EntropicOt {
        cost: primal_cost(&cost, &f, &g, n, m, lam, log_a, log_b),
        iterations,
        marginal_error,
    }
}

/// Entropic OT of a set with itself. The problem is symmetric, so a single
/// potential is iterated with averaged updates, which converge in a few
/// sweeps.
pub fn entropic_ot_self(xs: &[Vec3], params: &SinkhornParams) -> EntropicOt {
    let n = xs.len();
    assert!(n > 0, "entropic_ot_self needs a non-empty set");
    let cost = cost_matrix(xs, xs);
    let log_a = -(n as f64).ln();
    let mut f = vec![0.0; n];
    let mut t = vec![0.0; n];
    let mut buf = vec![0.0; n];
    let mut iterations = 0;
    for eps in annealing_schedule(&cost, params.lambda) {
        update_rows(&cost, &f, &mut t, n, n, eps, log_a, &mut buf);
        for (fi, ti) in f.iter_mut().zip(&t) {
            *fi = 0.5 * (*fi + ti);
        }
        iterations += 1;
    }
    let lam = params.lambda;
    let mut marginal_error = f64::INFINITY;
    for _ in 0..params.max_iters.max(1) {
        update_rows(&cost, &f, &mut t, n, n, lam, log_a, &mut buf);
        let a = log_a.exp();
        marginal_error = f.iter().zip(&t).map(|(o, nw)| (a * ((o - nw) / lam).exp() - a).abs()).sum();
        if marginal_error < params.tol {
            break;
        }
        for (fi, ti) in f.iter_mut().zip(&t) {
            *fi = 0.5 * (*fi + ti);
        }
        iterations += 1;
    }
    EntropicOt {
        cost: primal_cost(&cost, &f, &f, n, n, lam, log_a, log_a),
        iterations,
        marginal_error,
    }
}

fn cost_matrix(xs: &[Vec3], ys: &[Vec3]) -> Vec<f64> {
    let m = ys.len();
    let mut c = vec![0.0; xs.len() * m];
    for (i, x) in xs.iter().enumerate() {
        for (j, y) in ys.iter().enumerate() {
            c[i * m + j] = (x - y).norm_squared();
        }
    }
    c
}

/// Halvings from the largest cost down to (excluding) `lambda`.
fn annealing_schedule(cost: &[f64], lambda: f64) -> Vec<f64> {
    let top = cost.iter().copied().fold(0.0, f64::max);
    let mut out = Vec::new();
    let mut eps = top;
    while eps > 2.0 * lambda {
        out.push(eps);
        eps *= 0.5;
    }
    out
}

/// `f_i = −ε · LSE_j(log b + (g_j − C_ij) / ε)`.
#[allow(clippy::too_many_arguments)]
fn update_rows(cost: &[f64], g: &[f64], f: &mut [f64], n: usize, m: usize, eps: f64, log_b: f64, buf: &mut [f64]) {
    let inv = 1.0 / eps;
    for i in 0..n {
        let row = &cost[i * m..(i + 1) * m];
        for j in 0..m {
            buf[j] = (g[j] - row[j]) * inv;
        }
        f[i] = -eps * (log_b + log_sum_exp(&buf[..m]));
    }
}

#[allow(clippy::too_many_arguments)]
fn update_cols(cost: &[f64], f: &[f64], g: &mut [f64], n: usize, m: usize, eps: f64, log_a: f64, buf: &mut [f64]) {
    let inv = 1.0 / eps;
    for j in 0..m {
        for i in 0..n {
            buf[i] = (f[i] - cost[i * m + j]) * inv;
        }
        g[j] = -eps * (log_a + log_sum_exp(&buf[..n]));
    }
}

/// `Σ C π + λ Σ π ln π` for the plan `π_ij = a_i b_j exp((f_i + g_j − C_ij)/λ)`.
#[allow(clippy::too_many_arguments)]
fn primal_cost(cost: &[f64], f: &[f64], g: &[f64], n: usize, m: usize, lam: f64, log_a: f64, log_b: f64) -> f64 {
    let mut total = 0.0;
    for i in 0..n {
        for j in 0..m {
            let c = cost[i * m + j];
            let log_pi = log_a + log_b + (f[i] + g[j] - c) / lam;
            let pi = log_pi.exp();
            if pi > 0.0 {
                total += pi * (c + lam * log_pi);
            }
        }
    }
    total
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let mx = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if mx == f64::NEG_INFINITY {
        return mx;
    }
    mx + v.iter().map(|x| (x - mx).exp()).sum::<f64>().ln()
}

/// `D_λ(A, B) = W_λ(A, B) − ½[W_λ(A, A) + W_λ(B, B)]`, clamped at zero for
/// round-off negatives in `[−1e-9, 0)`. The cross term is always evaluated
/// with the two sets in a canonical order, so the result is exactly
/// symmetric; points are sorted first, so the value does not depend on
/// input order and identical multisets give exactly zero.
pub fn sinkhorn_divergence(a: &[Vec3], b: &[Vec3], params: &SinkhornParams) -> f64 {
    if a.is_empty() || b.is_empty() {
        return params.default;
    }
    let (sa, sb) = (sorted(a), sorted(b));
    let (first, second) = match canonical_cmp(&sa, &sb) {
        // identical multisets: the cross term equals both self terms
        Ordering::Equal => return 0.0,
        Ordering::Greater => (&sb, &sa),
        Ordering::Less => (&sa, &sb),
    };
    let cross = entropic_ot(first, second, params).cost;
    let self_a = entropic_ot_self(&sa, params).cost;
    let self_b = entropic_ot_self(&sb, params).cost;
    let d = cross - 0.5 * (self_a + self_b);
    if (-1e-9..0.0).contains(&d) {
        0.0
    } else {
        d
    }
}

fn sorted(pts: &[Vec3]) -> Vec<Vec3> {
    let mut v = pts.to_vec();
    v.sort_by(|p, q| p.x.total_cmp(&q.x).then(p.y.total_cmp(&q.y)).then(p.z.total_cmp(&q.z)));
    v
}

fn canonical_cmp(a: &[Vec3], b: &[Vec3]) -> Ordering {
    a.len().cmp(&b.len()).then_with(|| {
        for (p, q) in a.iter().zip(b) {
            for k in 0..3 {
                match p[k].total_cmp(&q[k]) {
                    Ordering::Equal => {}
                    o => return o,
                }
            }
        }
        Ordering::Equal
    })
}
