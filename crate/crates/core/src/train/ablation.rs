//! Radius/fusion and temperature ablations.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::model::{FusionMode, ModelParams};
use crate::synth::Split;
use crate::train::features::FeatureSet;
use crate::train::trainer::{evaluate, train, TrainConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub variant: String,
    pub dataset: String,
    pub n_params: usize,
    /// Test RMSE per training seed.
    pub rmse_per_seed: Vec<f64>,
    pub mean_rmse: f64,
}

/// Model variants compared by the radius ablation: each radius alone, all
/// radii averaged with uniform weights, and all radii with scale attention.
pub fn radius_variants(base: &TrainConfig) -> Vec<(String, TrainConfig)> {
    let mut out = Vec::new();
    for (s, r) in base.scales.radii.iter().enumerate() {
        out.push((
            format!("single_scale_{r}"),
            TrainConfig {
                scale_selection: vec![s],
                fusion: FusionMode::Average,
                ..base.clone()
            },
        ));
    }
    let all: Vec<usize> = (0..base.scales.radii.len()).collect();
    out.push((
        "multiscale_concat".into(),
        TrainConfig {
            scale_selection: all.clone(),
            fusion: FusionMode::Average,
            ..base.clone()
        },
    ));
    out.push((
        "multiscale_attention".into(),
        TrainConfig {
            scale_selection: all,
            fusion: FusionMode::Attention,
            ..base.clone()
        },
    ));
    out
}

fn run_variant(name: &str, dataset: &str, set: &FeatureSet, cfg: &TrainConfig, seeds: &[u64]) -> Result<AblationRow> {
    let mut rmse_per_seed = Vec::with_capacity(seeds.len());
    for &seed in seeds {
        let c = TrainConfig { seed, ..cfg.clone() };
        let out = train(set, &c)?;
        let report = evaluate(&out.checkpoint, set, Split::Test, c.jobs)?;
        log::info!("{dataset}/{name} seed {seed}: {}", report.summary());
        rmse_per_seed.push(report.rmse);
    }
    let mean_rmse = rmse_per_seed.iter().sum::<f64>() / rmse_per_seed.len() as f64;
    Ok(AblationRow {
        variant: name.to_string(),
        dataset: dataset.to_string(),
        n_params: ModelParams::zeros(&cfg.model_config()).n_params(),
        rmse_per_seed,
        mean_rmse,
    })
}

/// Test RMSE of every radius variant on every dataset, averaged over seeds.
pub fn ablate_radius(datasets: &[(String, &FeatureSet)], base: &TrainConfig, seeds: &[u64]) -> Result<Vec<AblationRow>> {
    let mut rows = Vec::new();
    for (name, set) in datasets {
        for (variant, cfg) in radius_variants(base) {
            rows.push(run_variant(&variant, name, set, &cfg, seeds)?);
        }
    }
    Ok(rows)
}

/// Test RMSE of the attention model at each softmax temperature.
pub fn ablate_temperature(datasets: &[(String, &FeatureSet)], base: &TrainConfig, taus: &[f64], seeds: &[u64]) -> Result<Vec<AblationRow>> {
    let mut rows = Vec::new();
    for (name, set) in datasets {
        for &tau in taus {
            let cfg = TrainConfig {
                temperature: tau,
                fusion: FusionMode::Attention,
                ..base.clone()
            };
            rows.push(run_variant(&format!("tau_{tau}"), name, set, &cfg, seeds)?);
        }
    }
    Ok(rows)
}

pub fn ablation_csv(rows: &[AblationRow]) -> String {
    let n_seeds = rows.iter().map(|r| r.rmse_per_seed.len()).max().unwrap_or(0);
    let mut s = String::from("variant,dataset,n_params,mean_rmse");
    for i in 0..n_seeds {
        let _ = write!(s, ",rmse_seed{i}");
    }
    s.push('\n');
    for r in rows {
        let _ = write!(s, "{},{},{},{}", r.variant, r.dataset, r.n_params, r.mean_rmse);
        for v in &r.rmse_per_seed {
            let _ = write!(s, ",{v}");
        }
        s.push('\n');
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn radius_variants_cover_single_and_multiscale() {
        let v = radius_variants(&TrainConfig::default());
        let names: Vec<&str> = v.iter().map(|x| x.0.as_str()).collect();
        assert_eq!(
            names,
            ["single_scale_7.5", "single_scale_4", "single_scale_2.5", "multiscale_concat", "multiscale_attention"]
        );
        let counts: Vec<usize> = v.iter().map(|(_, c)| ModelParams::zeros(&c.model_config()).n_params()).collect();
        assert_eq!(counts[0], counts[1]);
        assert_eq!(counts[1], counts[2]);
        assert!(counts[4] > counts[3]);
    }

    #[test]
    fn csv_has_one_line_per_row() {
        let rows = vec![AblationRow {
            variant: "multiscale_attention".into(),
            dataset: "d".into(),
            n_params: 10,
            rmse_per_seed: vec![0.5, 0.25],
            mean_rmse: 0.375,
        }];
        let csv = ablation_csv(&rows);
        assert_eq!(csv, "variant,dataset,n_params,mean_rmse,rmse_seed0,rmse_seed1\nmultiscale_attention,d,10,0.375,0.5,0.25\n");
    }
}
