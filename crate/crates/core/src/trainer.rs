//! End-to-end training loops: the regularly-truncated schedule, the plain
//! cross-entropy baseline, and the small-loss-selection baseline, all sharing
//! one deterministic inner loop.
//!
//! Per epoch the loop (1) shuffles the training set, (2) takes a no-gradient
//! loss snapshot of the whole training set and freezes the truncation point
//! (and, if enabled, the adapted intrinsic parameter) from it, (3) runs the
//! weighted mini-batch updates against that frozen threshold using live
//! per-batch losses, and (4) records metrics. The returned model is the one
//! from the best noisy-validation epoch.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::data::SplitDataset;
use crate::error::{Error, Result};
use crate::estimators::{batch_weights, EpochMode, EpochSchedule, EstimatorSpec};
use crate::net::{
    mlp_backward, sgd_momentum_step, softmax_ce_per_example, Activation, GradientSet, Matrix,
    MlpModel,
};
use crate::noise::LabeledDataset;
use crate::rng::{stream_rng, STREAM_INIT, STREAM_SHUFFLE};
use crate::threshold::{
    adapt_parameter, perturb_sigma, select_small_loss, three_sigma_threshold_clamped, AdaptConfig,
    AdaptMode, LossSnapshot, DEFAULT_SIGMA_MIN,
};

/// Hyperparameters of one training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    /// Epoch indices at which the learning rate is divided by `lr_decay_factor`.
    pub lr_decay_epochs: Vec<usize>,
    pub lr_decay_factor: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub estimator: EstimatorSpec,
    /// Switching period: original form at `epoch % r == 0`, truncated
    /// otherwise. `0` means truncated on every epoch after the first.
    pub r: usize,
    pub adapt: AdaptConfig,
    /// Lower clamp for the three-sigma threshold.
    pub sigma_clamp_min: f64,
    /// Relative disturbance applied to the threshold (stability ablation).
    pub sigma_perturb: f64,
    /// Hidden layer widths; input and output widths come from the data.
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 100,
            batch_size: 128,
            lr: 1e-2,
            lr_decay_epochs: vec![40, 80],
            lr_decay_factor: 10.0,
            momentum: 0.9,
            weight_decay: 1e-3,
            estimator: EstimatorSpec::Catoni,
            r: 2,
            adapt: AdaptConfig::default(),
            sigma_clamp_min: DEFAULT_SIGMA_MIN,
            sigma_perturb: 0.0,
            hidden: vec![32, 32],
            activation: Activation::Relu,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::config("epochs must be >= 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch_size must be >= 1"));
        }
        if !(self.lr > 0.0) {
            return Err(Error::config("lr must be positive"));
        }
        if !(self.lr_decay_factor > 0.0) {
            return Err(Error::config("lr_decay_factor must be positive"));
        }
        if self.lr_decay_epochs.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::config("lr_decay_epochs must be strictly increasing"));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::config("momentum must be in [0, 1)"));
        }
        if self.weight_decay < 0.0 {
            return Err(Error::config("weight_decay must be >= 0"));
        }
        if !(self.sigma_clamp_min > 0.0) {
            return Err(Error::config("sigma_clamp_min must be positive"));
        }
        if !(self.sigma_perturb > -1.0) {
            return Err(Error::config("sigma_perturb must be > -1"));
        }
        self.estimator.validate()?;
        self.adapt.validate()
    }

    /// Learning rate in force at the given epoch.
    pub fn lr_at(&self, epoch: usize) -> f64 {
        let decays = self.lr_decay_epochs.iter().filter(|&&d| d <= epoch).count();
        self.lr / self.lr_decay_factor.powi(decays as i32)
    }

    fn effective_period(&self) -> usize {
        if self.r == 0 {
            usize::MAX
        } else {
            self.r
        }
    }
}

/// Metrics of one epoch, written as one CSV row.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochRow {
    pub epoch: usize,
    pub mode: EpochMode,
    pub sigma: f64,
    /// Intrinsic estimator parameter in force this epoch, if any.
    pub intrinsic: Option<f64>,
    pub lr: f64,
    /// Accuracy on the training set against its observed (noisy) labels.
    pub train_acc: f64,
    /// Fraction of correctly-labeled training examples fit by the model.
    pub clean_fit: f64,
    /// Fraction of mislabeled training examples fit to their wrong label.
    pub noisy_fit: f64,
    /// False when the mislabeled partition is empty (`noisy_fit` is 0 then).
    pub noisy_fit_defined: bool,
    pub val_acc: f64,
    pub test_acc: f64,
}

/// Per-epoch metrics plus the model-selection outcome.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunRecord {
    pub rows: Vec<EpochRow>,
    pub best_epoch: usize,
    pub best_val_acc: f64,
    pub test_acc_at_best: f64,
}

/// Result of a training run: the model at the best validation epoch, the
/// metric record, and the per-epoch loss snapshots (epoch-start losses of
/// every training example, used by the histogram export).
pub struct TrainOutput {
    pub model: MlpModel,
    pub record: RunRecord,
    pub snapshots: Vec<Vec<f64>>,
}

#[derive(Debug, Clone)]
enum WeightRule {
    /// Estimator weights under the epoch's switching mode.
    Scheduled,
    /// Keep the smallest-loss fraction `1 - min(epoch/t_k * tau, tau)` of
    /// each batch with equal weight, drop the rest.
    SmallLoss { tau: f64, t_k: usize },
}

/// Regularly-truncated training (the scheduled estimator switch).
pub fn train_rtme(config: &TrainConfig, split: &SplitDataset) -> Result<TrainOutput> {
    run_training(config, split, WeightRule::Scheduled)
}

/// Plain cross-entropy baseline: every example keeps unit weight. Equivalent
/// to the scheduled loop with the CE estimator and period 1.
pub fn train_ce_baseline(config: &TrainConfig, split: &SplitDataset) -> Result<TrainOutput> {
    let mut cfg = config.clone();
    cfg.estimator = EstimatorSpec::Ce;
    cfg.r = 1;
    run_training(&cfg, split, WeightRule::Scheduled)
}

/// Small-loss selection baseline: per batch, keep the smallest-loss fraction
/// given by the declining schedule and average the loss over the survivors.
pub fn train_smallloss_baseline(
    config: &TrainConfig,
    tau: f64,
    t_k: usize,
    split: &SplitDataset,
) -> Result<TrainOutput> {
    if !(0.0..1.0).contains(&tau) {
        return Err(Error::config(format!("keep-schedule rate must be in [0, 1), got {tau}")));
    }
    if t_k == 0 {
        return Err(Error::config("t_k must be >= 1"));
    }
    run_training(config, split, WeightRule::SmallLoss { tau, t_k })
}

fn run_training(
    config: &TrainConfig,
    split: &SplitDataset,
    rule: WeightRule,
) -> Result<TrainOutput> {
    config.validate()?;
    let train = &split.train;
    if train.is_empty() {
        return Err(Error::config("empty training set"));
    }

    let mut layer_sizes = Vec::with_capacity(config.hidden.len() + 2);
    layer_sizes.push(train.dim());
    layer_sizes.extend_from_slice(&config.hidden);
    layer_sizes.push(train.k);

    let mut init_rng = stream_rng(config.seed, STREAM_INIT);
    let mut model = MlpModel::new(&layer_sizes, config.activation, &mut init_rng)?;
    let mut velocity = GradientSet::zeros_like(&model);
    let mut shuffle_rng = stream_rng(config.seed, STREAM_SHUFFLE);

    let period = config.effective_period();
    let mut spec = config.estimator;
    let mut indices: Vec<usize> = (0..train.len()).collect();

    let mut rows = Vec::with_capacity(config.epochs);
    let mut snapshots = Vec::with_capacity(config.epochs);
    let mut best_val = f64::NEG_INFINITY;
    let mut best_epoch = 0usize;
    let mut best_model = model.clone();
    let mut best_test = 0.0;

    for epoch in 0..config.epochs {
        let lr = config.lr_at(epoch);
        indices.shuffle(&mut shuffle_rng);

        // Freeze the truncation point (and adapted parameter) from an
        // epoch-start snapshot of the whole training set.
        let losses = dataset_losses(&model, train)
            .map_err(|e| at_epoch(e, epoch, None))?;
        let snapshot = LossSnapshot::new(losses, epoch)?;
        let sigma_raw = three_sigma_threshold_clamped(&snapshot, config.sigma_clamp_min);
        let sigma = perturb_sigma(sigma_raw, config.sigma_perturb);
        let schedule = EpochSchedule::new(period, epoch, sigma)?;
        let mode = schedule.mode();

        if config.adapt.mode == AdaptMode::GaussianFit && spec.intrinsic().is_some() {
            let selected = select_small_loss(snapshot.losses(), sigma);
            if !selected.is_empty() {
                let small: Vec<f64> = selected.iter().map(|&i| snapshot.losses()[i]).collect();
                let param = adapt_parameter(&spec, &small, &config.adapt)?;
                spec = spec.with_intrinsic(param)?;
            }
        }

        for (batch_no, batch) in indices.chunks(config.batch_size).enumerate() {
            let x = train.features.select_rows(batch);
            let labels: Vec<usize> = batch.iter().map(|&i| train.noisy_labels[i]).collect();
            let cache = model
                .forward(&x)
                .map_err(|e| at_epoch(e, epoch, Some(batch_no)))?;
            let live_losses = softmax_ce_per_example(cache.logits(), &labels)?;
            let weights = match &rule {
                WeightRule::Scheduled => batch_weights(&spec, mode, &live_losses, sigma)?,
                WeightRule::SmallLoss { tau, t_k } => {
                    small_loss_weights(&live_losses, keep_fraction(epoch, *tau, *t_k))
                }
            };
            let grads = mlp_backward(&model, &cache, &labels, &weights)?;
            sgd_momentum_step(
                &mut model,
                &grads,
                &mut velocity,
                lr,
                config.momentum,
                config.weight_decay,
            )
            .map_err(|e| at_epoch(e, epoch, Some(batch_no)))?;
        }

        let train_preds = predictions(&model, &train.features)
            .map_err(|e| at_epoch(e, epoch, None))?;
        let train_acc = accuracy_of(&train_preds, &train.noisy_labels);
        let memo = memorization_from_predictions(&train_preds, train);
        let val_acc = evaluate(&model, &split.val).map_err(|e| at_epoch(e, epoch, None))?;
        let test_acc = evaluate(&model, &split.test).map_err(|e| at_epoch(e, epoch, None))?;

        if val_acc > best_val {
            best_val = val_acc;
            best_epoch = epoch;
            best_model = model.clone();
            best_test = test_acc;
        }

        rows.push(EpochRow {
            epoch,
            mode,
            sigma,
            intrinsic: spec.intrinsic(),
            lr,
            train_acc,
            clean_fit: memo.clean_fit,
            noisy_fit: memo.noisy_fit,
            noisy_fit_defined: memo.noisy_defined,
            val_acc,
            test_acc,
        });
        snapshots.push(snapshot.losses().to_vec());
    }

    Ok(TrainOutput {
        model: best_model,
        record: RunRecord {
            rows,
            best_epoch,
            best_val_acc: best_val,
            test_acc_at_best: best_test,
        },
        snapshots,
    })
}

fn at_epoch(err: Error, epoch: usize, batch: Option<usize>) -> Error {
    match err {
        Error::Numeric(msg) => match batch {
            Some(b) => Error::Numeric(format!("epoch {epoch}, batch {b}: {msg}")),
            None => Error::Numeric(format!("epoch {epoch}: {msg}")),
        },
        other => other,
    }
}

/// Declining keep fraction `1 - min(epoch / t_k * tau, tau)`.
fn keep_fraction(epoch: usize, tau: f64, t_k: usize) -> f64 {
    1.0 - (epoch as f64 / t_k as f64 * tau).min(tau)
}

/// Keeps the `ceil(fraction * B)` smallest losses (at least one). Survivors
/// share weight `B / kept` so the batch mean reduces to the mean over the
/// selected examples.
fn small_loss_weights(losses: &[f64], fraction: f64) -> Vec<f64> {
    let b = losses.len();
    let kept = ((fraction * b as f64).ceil() as usize).clamp(1, b);
    let mut order: Vec<usize> = (0..b).collect();
    order.sort_by(|&a, &c| {
        losses[a]
            .partial_cmp(&losses[c])
            .expect("losses are finite")
            .then(a.cmp(&c))
    });
    let mut weights = vec![0.0; b];
    let w = b as f64 / kept as f64;
    for &i in &order[..kept] {
        weights[i] = w;
    }
    weights
}

/// Per-example CE losses of a whole dataset, without touching gradients.
pub fn dataset_losses(model: &MlpModel, dataset: &LabeledDataset) -> Result<Vec<f64>> {
    let logits = model.logits(&dataset.features)?;
    softmax_ce_per_example(&logits, &dataset.noisy_labels)
}

/// Argmax class per row; ties go to the smallest class index.
pub fn predictions(model: &MlpModel, features: &Matrix) -> Result<Vec<usize>> {
    let logits = model.logits(features)?;
    let k = logits.cols();
    Ok((0..logits.rows())
        .map(|r| {
            let row = logits.row(r);
            let mut best = 0usize;
            for c in 1..k {
                if row[c] > row[best] {
                    best = c;
                }
            }
            best
        })
        .collect())
}

fn accuracy_of(preds: &[usize], labels: &[usize]) -> f64 {
    let correct = preds.iter().zip(labels).filter(|(p, l)| p == l).count();
    correct as f64 / labels.len().max(1) as f64
}

/// Accuracy of the model against the dataset's observed labels (clean and
/// observed coincide on never-injected test sets).
pub fn evaluate(model: &MlpModel, dataset: &LabeledDataset) -> Result<f64> {
    let preds = predictions(model, &dataset.features)?;
    Ok(accuracy_of(&preds, &dataset.noisy_labels))
}

/// How much of each label partition the model currently fits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MemorizationMetrics {
    /// Fraction of correctly-labeled examples predicted as their label.
    pub clean_fit: f64,
    /// Fraction of mislabeled examples predicted as their *given* wrong label.
    pub noisy_fit: f64,
    pub clean_defined: bool,
    pub noisy_defined: bool,
}

pub fn memorization_metrics(model: &MlpModel, train: &LabeledDataset) -> Result<MemorizationMetrics> {
    let preds = predictions(model, &train.features)?;
    Ok(memorization_from_predictions(&preds, train))
}

fn memorization_from_predictions(preds: &[usize], train: &LabeledDataset) -> MemorizationMetrics {
    let mut clean_total = 0usize;
    let mut clean_hit = 0usize;
    let mut noisy_total = 0usize;
    let mut noisy_hit = 0usize;
    for ((&pred, &label), &is_clean) in preds
        .iter()
        .zip(&train.noisy_labels)
        .zip(&train.clean_mask)
    {
        if is_clean {
            clean_total += 1;
            if pred == label {
                clean_hit += 1;
            }
        } else {
            noisy_total += 1;
            if pred == label {
                noisy_hit += 1;
            }
        }
    }
    MemorizationMetrics {
        clean_fit: if clean_total > 0 {
            clean_hit as f64 / clean_total as f64
        } else {
            0.0
        },
        noisy_fit: if noisy_total > 0 {
            noisy_hit as f64 / noisy_total as f64
        } else {
            0.0
        },
        clean_defined: clean_total > 0,
        noisy_defined: noisy_total > 0,
    }
}
