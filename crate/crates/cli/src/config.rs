//! Run configuration: a sectioned TOML file with every key named below.
//! Unknown keys are rejected with the offending key in the error message.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use tme::estimators::{EstimatorKind, EstimatorSpec};
use tme::net::Activation;
use tme::noise::{NoiseKind, NoiseSpec};
use tme::threshold::{AdaptConfig, AdaptMode};
use tme::trainer::TrainConfig;

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub dataset: DatasetConfig,
    #[serde(default)]
    pub noise: NoiseConfig,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub adapt: AdaptSection,
    #[serde(default)]
    pub sigma: SigmaSection,
    #[serde(default)]
    pub sweep: SweepSection,
    #[serde(default)]
    pub hist: HistSection,
    #[serde(default)]
    pub lemma: LemmaSection,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DatasetKind {
    #[serde(rename = "mixture")]
    Mixture,
    #[serde(rename = "idx")]
    Idx,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    pub kind: DatasetKind,
    /// Training-pool size (mixture).
    pub n: usize,
    /// Test-set size (mixture).
    pub n_test: usize,
    pub k: usize,
    pub dim: usize,
    pub separation: f64,
    pub cluster_std: f64,
    pub seed: u64,
    /// IDX file paths (idx kind only).
    pub train_images: Option<PathBuf>,
    pub train_labels: Option<PathBuf>,
    pub test_images: Option<PathBuf>,
    pub test_labels: Option<PathBuf>,
    /// Optional subset caps for IDX data.
    pub limit: Option<usize>,
    pub test_limit: Option<usize>,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            kind: DatasetKind::Mixture,
            n: 2000,
            n_test: 4000,
            k: 4,
            dim: 2,
            separation: 4.0,
            cluster_std: 0.6,
            seed: 0,
            train_images: None,
            train_labels: None,
            test_images: None,
            test_labels: None,
            limit: None,
            test_limit: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    pub kind: NoiseKind,
    pub tau: f64,
    pub seed: u64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        NoiseConfig {
            kind: NoiseKind::Symmetric,
            tau: 0.3,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Method {
    /// Scheduled switch between original and truncated forms (`r >= 2`).
    #[serde(rename = "rtme")]
    Rtme,
    /// Never-truncated ablation (original estimator every epoch).
    #[serde(rename = "original")]
    Original,
    /// Truncated every epoch after the first.
    #[serde(rename = "truncated")]
    Truncated,
    /// Plain cross-entropy baseline.
    #[serde(rename = "ce")]
    Ce,
    /// Small-loss selection baseline.
    #[serde(rename = "smallloss")]
    SmallLoss,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    pub method: Method,
    pub estimator: EstimatorKind,
    pub epsilon: f64,
    pub alpha: f64,
    pub r: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub lr_decay_epochs: Vec<usize>,
    pub lr_decay_factor: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub val_fraction: f64,
    pub seed: u64,
    /// Small-loss baseline schedule knee (epochs).
    pub t_k: usize,
    /// Rate assumed by the small-loss schedule; defaults to noise.tau.
    pub known_tau: Option<f64>,
}

impl Default for TrainSection {
    fn default() -> Self {
        TrainSection {
            method: Method::Rtme,
            estimator: EstimatorKind::Catoni,
            epsilon: 1.0,
            alpha: 1.0,
            r: 2,
            epochs: 100,
            batch_size: 128,
            lr: 1e-2,
            lr_decay_epochs: vec![40, 80],
            lr_decay_factor: 10.0,
            momentum: 0.9,
            weight_decay: 1e-3,
            hidden: vec![32, 32],
            activation: Activation::Relu,
            val_fraction: 0.1,
            seed: 0,
            t_k: 10,
            known_tau: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdaptSection {
    pub mode: AdaptMode,
    pub grid: Vec<f64>,
    pub bins: usize,
}

impl Default for AdaptSection {
    fn default() -> Self {
        let d = AdaptConfig::default();
        AdaptSection {
            mode: d.mode,
            grid: d.grid,
            bins: d.bins,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SigmaSection {
    pub clamp_min: f64,
    pub perturb: f64,
}

impl Default for SigmaSection {
    fn default() -> Self {
        SigmaSection {
            clamp_min: 1e-3,
            perturb: 0.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub seeds: Vec<u64>,
    pub r_values: Vec<usize>,
    pub sigma_perturbs: Vec<f64>,
    /// Parallel worker slots; 0 uses the default thread count.
    pub workers: usize,
}

impl Default for SweepSection {
    fn default() -> Self {
        SweepSection {
            seeds: vec![0, 1, 2, 3, 4],
            r_values: vec![2, 5, 10, 50],
            sigma_perturbs: vec![-0.2, -0.1, 0.0, 0.1, 0.2],
            workers: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HistSection {
    pub bins: usize,
    pub epoch: usize,
}

impl Default for HistSection {
    fn default() -> Self {
        HistSection { bins: 50, epoch: 0 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LemmaSection {
    pub eta: f64,
    pub estimator: EstimatorKind,
    pub epsilon: f64,
    pub alpha: f64,
    pub sigma: f64,
    /// Nonempty switches to the per-instance (non-uniform) check.
    pub eta_per_instance: Vec<f64>,
}

impl Default for LemmaSection {
    fn default() -> Self {
        LemmaSection {
            eta: 0.0,
            estimator: EstimatorKind::Catoni,
            epsilon: 1.0,
            alpha: 1.0,
            sigma: 2.0,
            eta_per_instance: vec![],
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection {
            dir: PathBuf::from("runs"),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            CliError::Config(format!("cannot read config {}: {e}", path.display()))
        })?;
        let config: RunConfig = toml::from_str(&text)
            .map_err(|e| CliError::Config(format!("config {}: {e}", path.display())))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        let d = &self.dataset;
        match d.kind {
            DatasetKind::Mixture => {
                if d.k < 2 || d.n < d.k || d.n_test == 0 {
                    return Err(CliError::Config(
                        "mixture needs k >= 2, n >= k, n_test >= 1".into(),
                    ));
                }
            }
            DatasetKind::Idx => {
                for (name, path) in [
                    ("dataset.train_images", &d.train_images),
                    ("dataset.train_labels", &d.train_labels),
                    ("dataset.test_images", &d.test_images),
                    ("dataset.test_labels", &d.test_labels),
                ] {
                    match path {
                        None => {
                            return Err(CliError::Config(format!(
                                "{name} is required for idx datasets"
                            )))
                        }
                        Some(p) if !p.exists() => {
                            return Err(CliError::Config(format!(
                                "{name}: file not found: {}",
                                p.display()
                            )))
                        }
                        _ => {}
                    }
                }
            }
        }

        let noise = NoiseSpec {
            kind: self.noise.kind,
            tau: self.noise.tau,
            seed: self.noise.seed,
        };
        noise.validate().map_err(CliError::from)?;

        if self.train.method == Method::Rtme && self.train.r < 2 {
            return Err(CliError::Config(
                "train.method = \"rtme\" requires train.r >= 2; use method = \"original\" for the never-truncated ablation".into(),
            ));
        }
        if !(self.train.val_fraction > 0.0 && self.train.val_fraction < 1.0) {
            return Err(CliError::Config("train.val_fraction must be in (0, 1)".into()));
        }
        if self.sweep.r_values.iter().any(|&r| r < 2) {
            return Err(CliError::Config("sweep.r_values must all be >= 2".into()));
        }
        if self.sweep.sigma_perturbs.iter().any(|&p| !(p > -1.0)) {
            return Err(CliError::Config("sweep.sigma_perturbs must all be > -1".into()));
        }
        if self.sweep.seeds.is_empty() {
            return Err(CliError::Config("sweep.seeds must be nonempty".into()));
        }

        // Surface bad train hyperparameters at parse time.
        self.estimator_spec().map_err(CliError::from)?;
        self.train_config(self.train.seed).validate().map_err(CliError::from)?;
        Ok(())
    }

    pub fn estimator_spec(&self) -> tme::Result<EstimatorSpec> {
        EstimatorSpec::new(self.train.estimator, self.train.epsilon, self.train.alpha)
    }

    /// The core training config for one run seed. The seed replaces the
    /// train seed; `method` decides the effective switching period.
    pub fn train_config(&self, seed: u64) -> TrainConfig {
        let estimator = EstimatorSpec::new(self.train.estimator, self.train.epsilon, self.train.alpha)
            .expect("estimator parameters are checked at config load");
        let r = match self.train.method {
            Method::Rtme => self.train.r,
            Method::Original => 1,
            Method::Truncated => 0,
            Method::Ce => 1,
            Method::SmallLoss => 1,
        };
        TrainConfig {
            epochs: self.train.epochs,
            batch_size: self.train.batch_size,
            lr: self.train.lr,
            lr_decay_epochs: self.train.lr_decay_epochs.clone(),
            lr_decay_factor: self.train.lr_decay_factor,
            momentum: self.train.momentum,
            weight_decay: self.train.weight_decay,
            estimator,
            r,
            adapt: AdaptConfig {
                mode: self.adapt.mode,
                grid: self.adapt.grid.clone(),
                bins: self.adapt.bins,
            },
            sigma_clamp_min: self.sigma.clamp_min,
            sigma_perturb: self.sigma.perturb,
            hidden: self.train.hidden.clone(),
            activation: self.train.activation,
            seed,
        }
    }
}
