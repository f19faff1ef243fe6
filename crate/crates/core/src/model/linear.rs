use rand::RngExt;

/// Dense affine map `y = W x (+ b)`, weights row-major `n_out × n_in`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub n_in: usize,
    pub n_out: usize,
    pub weight: Vec<f64>,
    pub bias: Option<Vec<f64>>,
}

impl Linear {
    pub fn zeros(n_in: usize, n_out: usize, with_bias: bool) -> Self {
        Self {
            n_in,
            n_out,
            weight: vec![0.0; n_in * n_out],
            bias: with_bias.then(|| vec![0.0; n_out]),
        }
    }

    /// Uniform in `[−1/√fan_in, 1/√fan_in]` for weights and bias.
    pub fn init_uniform<R: rand::Rng>(&mut self, rng: &mut R) {
        let bound = 1.0 / (self.n_in as f64).sqrt();
        for w in self.weight.iter_mut() {
            *w = rng.random_range(-bound..bound);
        }
        if let Some(b) = self.bias.as_mut() {
            for v in b.iter_mut() {
                *v = rng.random_range(-bound..bound);
            }
        }
    }

    pub fn n_params(&self) -> usize {
        self.weight.len() + self.bias.as_ref().map_or(0, Vec::len)
    }

    #[inline]
    pub fn forward(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.n_in);
        debug_assert_eq!(y.len(), self.n_out);
        for (o, yo) in y.iter_mut().enumerate() {
            let row = &self.weight[o * self.n_in..(o + 1) * self.n_in];
            let mut acc = self.bias.as_ref().map_or(0.0, |b| b[o]);
            for (w, xi) in row.iter().zip(x) {
                acc += w * xi;
            }
            *yo = acc;
        }
    }

    /// Accumulates parameter gradients into `grad` and, when given, adds
    /// `Wᵀ dy` into `dx`.
    #[inline]
    pub fn backward(&self, x: &[f64], dy: &[f64], grad: &mut Linear, dx: Option<&mut [f64]>) {
        for (o, &g) in dy.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            let grow = &mut grad.weight[o * self.n_in..(o + 1) * self.n_in];
            for (gw, xi) in grow.iter_mut().zip(x) {
                *gw += g * xi;
            }
            if let Some(gb) = grad.bias.as_mut() {
                gb[o] += g;
            }
        }
        if let Some(dx) = dx {
            for (o, &g) in dy.iter().enumerate() {
                if g == 0.0 {
                    continue;
                }
                let row = &self.weight[o * self.n_in..(o + 1) * self.n_in];
                for (d, w) in dx.iter_mut().zip(row) {
                    *d += g * w;
                }
            }
        }
    }

    pub(crate) fn push_tensors<'a>(&'a self, name: &str, out: &mut Vec<Tensor<'a>>) {
        out.push(Tensor {
            name: format!("{name}.weight"),
            shape: vec![self.n_out, self.n_in],
            data: &self.weight,
        });
        if let Some(b) = &self.bias {
            out.push(Tensor {
                name: format!("{name}.bias"),
                shape: vec![self.n_out],
                data: b,
            });
        }
    }

    pub(crate) fn push_tensors_mut<'a>(&'a mut self, out: &mut Vec<&'a mut [f64]>) {
        out.push(&mut self.weight);
        if let Some(b) = self.bias.as_mut() {
            out.push(b);
        }
    }
}

/// Named view of one parameter tensor.
#[derive(Debug)]
pub struct Tensor<'a> {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: &'a [f64],
}

#[inline]
pub fn relu_inplace(v: &mut [f64]) {
    for x in v.iter_mut() {
        if *x < 0.0 {
            *x = 0.0;
        }
    }
}

#[inline]
pub fn relu_backward(pre: &[f64], d: &mut [f64]) {
    for (g, p) in d.iter_mut().zip(pre) {
        if *p <= 0.0 {
            *g = 0.0;
        }
    }
}

pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn forward_and_backward_agree_with_hand_values() {
        let l = Linear {
            n_in: 2,
            n_out: 2,
            weight: vec![1.0, 2.0, 3.0, 4.0],
            bias: Some(vec![0.5, -0.5]),
        };
        let mut y = [0.0; 2];
        l.forward(&[1.0, -1.0], &mut y);
        assert_eq!(y, [-0.5, -1.5]);
        let mut g = Linear::zeros(2, 2, true);
        let mut dx = [0.0; 2];
        l.backward(&[1.0, -1.0], &[1.0, 2.0], &mut g, Some(&mut dx));
        assert_eq!(g.weight, vec![1.0, -1.0, 2.0, -2.0]);
        assert_eq!(g.bias, Some(vec![1.0, 2.0]));
        assert_eq!(dx, [7.0, 10.0]);
    }

    #[test]
    fn softplus_is_stable() {
        assert!((softplus(0.0) - 2f64.ln()).abs() < 1e-15);
        assert_eq!(softplus(1000.0), 1000.0);
        assert!(softplus(-1000.0) >= 0.0);
        assert!((sigmoid(-800.0)).abs() < 1e-300);
    }
}
