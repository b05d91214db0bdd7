//! Experiment configuration: JSON file schema plus CLI overrides.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::cas::PoissonTarget;
use crate::polybasis::PolyFamily;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Polyreg,
    Scaling,
    Fourier,
    Cas,
    Props,
}

impl std::fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            ExperimentKind::Polyreg => "polyreg",
            ExperimentKind::Scaling => "scaling",
            ExperimentKind::Fourier => "fourier",
            ExperimentKind::Cas => "cas",
            ExperimentKind::Props => "props",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    /// Minute-scale runs: 10k-point grids, moderate orders.
    Desk,
    /// The published experimental scale: 50k-point grids.
    Paper,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Cs,
    Mcs,
    Hierarchical,
    SparseSurrogate,
}

impl std::fmt::Display for Strategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Strategy::Cs => "cs",
            Strategy::Mcs => "mcs",
            Strategy::Hierarchical => "hierarchical",
            Strategy::SparseSurrogate => "sparse_surrogate",
        };
        f.write_str(s)
    }
}

/// Target functions for the regression experiments.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetId {
    /// `f(theta) = exp(-(theta_1 + .. + theta_d) / (2 d))`.
    ExpMean,
    /// The basis element with the given lexicographic index.
    BasisElement(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PartitionChoice {
    Singletons,
    Lines { axis: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelChoice {
    /// Dense i.i.d. Gaussian linear model.
    Gaussian,
    /// Linear model with power-law frequency decay (MRI-like spectra).
    Smooth { decay: f64 },
    /// Forward-only ReLU network (surrogate computation only, no linear
    /// recovery).
    Relu { hidden: Vec<usize> },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CasSection {
    pub iterations: usize,
    pub n_features: usize,
    pub interior_grid: usize,
    /// Cumulative interior sample counts, one per iteration.
    pub interior_schedule: Vec<usize>,
    pub adapt_steps: usize,
    pub adapt_step_size: f64,
    pub boundary_lambda: f64,
    pub target: PoissonTarget,
    pub feature_scale: f64,
    pub test_points: usize,
    pub trials: usize,
}

impl Default for CasSection {
    fn default() -> Self {
        Self {
            iterations: 5,
            n_features: 32,
            interior_grid: 2000,
            interior_schedule: vec![40, 135, 230, 325, 420],
            adapt_steps: 50,
            adapt_step_size: 1e-2,
            boundary_lambda: 1.0,
            target: PoissonTarget::SinePi,
            feature_scale: 3.0,
            test_points: 1000,
            trials: 10,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Option<ExperimentKind>,
    pub dim: usize,
    pub family: PolyFamily,
    /// Hyperbolic-cross orders, strictly increasing.
    pub orders: Vec<usize>,
    pub trials: usize,
    pub strategies: Vec<Strategy>,
    /// Additive measurement noise standard deviation (polynomial
    /// experiments) or relative level (Fourier recovery).
    pub noise: f64,
    pub seed: u64,
    pub target: TargetId,
    pub out_dir: Option<PathBuf>,
    pub preset: Preset,
    /// Grid size override; otherwise 10000 (desk) or 50000 (paper).
    pub grid_points: Option<usize>,
    pub plot: bool,
    // Scaling experiment.
    pub cond_tol: f64,
    pub m_max: usize,
    // Fourier experiment.
    pub image_side: usize,
    pub image_dim: usize,
    pub latent_dim: usize,
    pub partition: PartitionChoice,
    pub model: ModelChoice,
    pub surrogate_iterations: usize,
    /// Numbers of sampled blocks to compare at.
    pub sample_counts: Vec<usize>,
    pub fourier_trials: usize,
    // Props experiment.
    pub prop_instances: usize,
    pub cas: CasSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            experiment: None,
            dim: 2,
            family: PolyFamily::HermiteProb,
            orders: Vec::new(),
            trials: 25,
            strategies: vec![Strategy::Cs, Strategy::Mcs],
            noise: 0.0,
            seed: 7001,
            target: TargetId::ExpMean,
            out_dir: None,
            preset: Preset::Desk,
            grid_points: None,
            plot: false,
            cond_tol: 10.0,
            m_max: 2000,
            image_side: 64,
            image_dim: 2,
            latent_dim: 16,
            partition: PartitionChoice::Singletons,
            model: ModelChoice::Smooth { decay: 1.5 },
            surrogate_iterations: 200,
            sample_counts: vec![24, 32, 48],
            fourier_trials: 20,
            prop_instances: 120,
            cas: CasSection::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn grid_points(&self) -> usize {
        self.grid_points.unwrap_or(match self.preset {
            Preset::Desk => 10_000,
            Preset::Paper => 50_000,
        })
    }

    /// Order sweep, falling back to an experiment-appropriate default.
    pub fn orders_or_default(&self, experiment: ExperimentKind) -> Vec<usize> {
        if !self.orders.is_empty() {
            return self.orders.clone();
        }
        match experiment {
            ExperimentKind::Polyreg => vec![1, 2, 3, 5, 7, 10, 13, 17],
            ExperimentKind::Scaling => vec![4, 7, 10, 14, 19, 24],
            _ => vec![4],
        }
    }

    pub fn out_dir(&self, experiment: ExperimentKind) -> PathBuf {
        self.out_dir
            .clone()
            .unwrap_or_else(|| PathBuf::from(format!("cs4ml_out_{experiment}")))
    }

    pub fn validate(&self, experiment: ExperimentKind) -> Result<(), String> {
        if let Some(kind) = self.experiment {
            if kind != experiment {
                return Err(format!(
                    "config names experiment '{kind}' but '{experiment}' was requested"
                ));
            }
        }
        if self.trials == 0 {
            return Err("trials must be at least 1".into());
        }
        if self.dim == 0 {
            return Err("dim must be at least 1".into());
        }
        let orders = self.orders_or_default(experiment);
        if orders.windows(2).any(|w| w[1] <= w[0]) {
            return Err("orders must be strictly increasing".into());
        }
        if self.strategies.is_empty() {
            return Err("at least one sampling strategy is required".into());
        }
        if !(self.noise >= 0.0) {
            return Err("noise level must be nonnegative".into());
        }
        if self.cond_tol <= 1.0 {
            return Err("cond_tol must exceed 1".into());
        }
        match experiment {
            ExperimentKind::Fourier => {
                if !self.image_side.is_power_of_two() {
                    return Err("image_side must be a power of two".into());
                }
                if self.image_dim == 0 || self.image_dim > 3 {
                    return Err("image_dim must be 1, 2 or 3".into());
                }
                if let PartitionChoice::Lines { axis } = self.partition {
                    if self.image_dim < 2 {
                        return Err("line partitions need image_dim >= 2".into());
                    }
                    if axis >= self.image_dim {
                        return Err("line axis out of range".into());
                    }
                }
                if self.sample_counts.is_empty() {
                    return Err("sample_counts must be non-empty".into());
                }
                if self.fourier_trials == 0 {
                    return Err("fourier_trials must be at least 1".into());
                }
            }
            ExperimentKind::Cas => {
                let c = &self.cas;
                if c.iterations == 0 {
                    return Err("cas.iterations must be at least 1".into());
                }
                if c.interior_schedule.len() < c.iterations {
                    return Err("cas.interior_schedule must cover every iteration".into());
                }
                if c.interior_schedule.windows(2).any(|w| w[1] <= w[0]) {
                    return Err("cas.interior_schedule must be strictly increasing".into());
                }
                if c.n_features == 0 || c.interior_grid == 0 || c.trials == 0 {
                    return Err("cas sizes must be positive".into());
                }
            }
            ExperimentKind::Props => {
                if self.prop_instances == 0 {
                    return Err("prop_instances must be at least 1".into());
                }
            }
            _ => {}
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_validates_everywhere() {
        let cfg = ExperimentConfig::default();
        for kind in [
            ExperimentKind::Polyreg,
            ExperimentKind::Scaling,
            ExperimentKind::Fourier,
            ExperimentKind::Cas,
            ExperimentKind::Props,
        ] {
            cfg.validate(kind).unwrap();
        }
    }

    #[test]
    fn minimal_json_round_trips() {
        let cfg: ExperimentConfig = serde_json::from_str("{}").unwrap();
        assert_eq!(cfg.trials, 25);
        let text = serde_json::to_string(&cfg).unwrap();
        let back: ExperimentConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back.seed, cfg.seed);
    }

    #[test]
    fn rejects_bad_fields() {
        let cfg: ExperimentConfig =
            serde_json::from_str(r#"{"orders": [3, 3]}"#).unwrap();
        assert!(cfg.validate(ExperimentKind::Polyreg).is_err());
        let cfg: ExperimentConfig =
            serde_json::from_str(r#"{"image_side": 48}"#).unwrap();
        assert!(cfg.validate(ExperimentKind::Fourier).is_err());
        assert!(serde_json::from_str::<ExperimentConfig>(r#"{"bogus": 1}"#).is_err());
    }

    #[test]
    fn experiment_mismatch_is_an_error() {
        let cfg: ExperimentConfig =
            serde_json::from_str(r#"{"experiment": "polyreg"}"#).unwrap();
        assert!(cfg.validate(ExperimentKind::Scaling).is_err());
        cfg.validate(ExperimentKind::Polyreg).unwrap();
    }
}
