//! Regression metrics and evaluation reports.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub rmse: f64,
    pub mae: f64,
    /// `None` when the labels have zero variance.
    pub r_squared: Option<f64>,
    pub n_samples: usize,
    /// `(label, prediction)` per sample.
    pub rows: Vec<(f64, f64)>,
}

/// RMSE, MAE and R² of `preds` against `labels`.
pub fn evaluate_predictions(labels: &[f64], preds: &[f64]) -> EvalReport {
    assert_eq!(labels.len(), preds.len());
    assert!(!labels.is_empty(), "metrics need at least one sample");
    let n = labels.len() as f64;
    let sse: f64 = labels.iter().zip(preds).map(|(y, p)| (p - y) * (p - y)).sum();
    let sae: f64 = labels.iter().zip(preds).map(|(y, p)| (p - y).abs()).sum();
    let mean = labels.iter().sum::<f64>() / n;
    let sst: f64 = labels.iter().map(|y| (y - mean) * (y - mean)).sum();
    EvalReport {
        rmse: (sse / n).sqrt(),
        mae: sae / n,
        r_squared: (sst > 0.0).then(|| 1.0 - sse / sst),
        n_samples: labels.len(),
        rows: labels.iter().copied().zip(preds.iter().copied()).collect(),
    }
}

/// RMSE of always predicting `constant`.
pub fn constant_rmse(labels: &[f64], constant: f64) -> f64 {
    (labels.iter().map(|y| (y - constant).powi(2)).sum::<f64>() / labels.len() as f64).sqrt()
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialises") + "\n"
    }

    pub fn predictions_csv(&self) -> String {
        let mut s = String::from("label,prediction\n");
        for (y, p) in &self.rows {
            let _ = writeln!(s, "{y},{p}");
        }
        s
    }

    /// One-line summary; R² prints as `undefined` for constant labels.
    pub fn summary(&self) -> String {
        let r2 = self.r_squared.map_or("undefined".to_string(), |r| format!("{r:.4}"));
        format!("n={} rmse={:.4} mae={:.4} r2={r2}", self.n_samples, self.rmse, self.mae)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_predictions() {
        let r = evaluate_predictions(&[0.1, 0.5, 2.0], &[0.1, 0.5, 2.0]);
        assert_eq!((r.rmse, r.mae, r.r_squared), (0.0, 0.0, Some(1.0)));
    }

    #[test]
    fn mean_predictor_has_zero_r_squared() {
        let y = [1.0, 2.0, 6.0];
        let r = evaluate_predictions(&y, &[3.0; 3]);
        assert!(r.r_squared.unwrap().abs() < 1e-15);
        assert!((constant_rmse(&y, 3.0) - r.rmse).abs() < 1e-15);
    }

    #[test]
    fn hand_worked_example() {
        let r = evaluate_predictions(&[0.0, 1.0, 2.0], &[0.0, 1.0, 4.0]);
        assert!((r.rmse - (4.0f64 / 3.0).sqrt()).abs() < 1e-12);
        assert!((r.mae - 2.0 / 3.0).abs() < 1e-12);
        assert!((r.r_squared.unwrap() + 1.0).abs() < 1e-12);
    }

    #[test]
    fn constant_labels_give_undefined_r_squared() {
        let r = evaluate_predictions(&[1.0, 1.0], &[1.0, 2.0]);
        assert_eq!(r.r_squared, None);
        assert!(r.summary().contains("undefined"));
        let back: EvalReport = serde_json::from_str(&r.to_json()).unwrap();
        assert_eq!(back, r);
    }

    proptest::proptest! {
        #[test]
        fn rmse_bounds_mae(v in proptest::collection::vec((-10.0f64..10.0, -10.0f64..10.0), 1..40)) {
            let (y, p): (Vec<f64>, Vec<f64>) = v.into_iter().unzip();
            let r = evaluate_predictions(&y, &p);
            proptest::prop_assert!(r.rmse + 1e-12 >= r.mae && r.mae >= 0.0);
            if let Some(r2) = r.r_squared {
                proptest::prop_assert!(r2 <= 1.0);
            }
        }
    }
}
