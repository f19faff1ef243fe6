//! Per-dimension z-scoring with statistics frozen from training data.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dimensions whose spread falls below this are only centred.
const MIN_STD: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl FeatureStats {
    /// Population mean and standard deviation over row-major `rows × dim`
    /// blocks.
    pub fn fit<'a, I>(dim: usize, blocks: I) -> Result<Self>
    where
        I: IntoIterator<Item = &'a [f64]>,
    {
        let mut n = 0usize;
        let mut sum = vec![0.0; dim];
        let mut rows: Vec<&[f64]> = Vec::new();
        for b in blocks {
            if b.len() % dim != 0 {
                return Err(Error::InvalidArgument(format!("block of {} values is not a multiple of {dim}", b.len())));
            }
            for r in b.chunks_exact(dim) {
                for (s, v) in sum.iter_mut().zip(r) {
                    *s += v;
                }
                n += 1;
            }
            rows.push(b);
        }
        if n == 0 {
            return Err(Error::InvalidArgument("no feature rows to fit".into()));
        }
        let mean: Vec<f64> = sum.iter().map(|s| s / n as f64).collect();
        let mut var = vec![0.0; dim];
        for b in rows {
            for r in b.chunks_exact(dim) {
                for ((v, x), m) in var.iter_mut().zip(r).zip(&mean) {
                    *v += (x - m) * (x - m);
                }
            }
        }
        let std = var
            .iter()
            .map(|v| {
                let s = (v / n as f64).sqrt();
                if s < MIN_STD {
                    1.0
                } else {
                    s
                }
            })
            .collect();
        Ok(Self { mean, std })
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            mean: vec![0.0; dim],
            std: vec![1.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Standardises a row-major block in place.
    pub fn apply(&self, block: &mut [f64]) {
        let dim = self.dim();
        for r in block.chunks_exact_mut(dim) {
            for ((x, m), s) in r.iter_mut().zip(&self.mean).zip(&self.std) {
                *x = (*x - m) / s;
            }
        }
    }
}
