//! Clean-data calibration oracles and degradation sanity checks for the
//! training loops.

use tme::data::{make_gaussian_mixture, SplitDataset};
use tme::estimators::EstimatorSpec;
use tme::net::{Activation, Matrix, MlpModel};
use tme::noise::{LabeledDataset, NoiseKind, NoiseSpec};
use tme::trainer::{evaluate, memorization_metrics, train_ce_baseline, TrainConfig};

fn split(tau: f64, seed: u64) -> SplitDataset {
    let pool = make_gaussian_mixture(4, 2000, 2, 4.0, 0.6, 0).unwrap();
    let test = make_gaussian_mixture(4, 2000, 2, 4.0, 0.6, 99).unwrap();
    let noise = NoiseSpec { kind: NoiseKind::Symmetric, tau, seed };
    SplitDataset::build(pool, test, &noise, 0.1, seed).unwrap()
}

/// On the clean calibration mixture a default training run must land near
/// the Bayes ceiling.
#[test]
fn clean_mixture_reaches_097() {
    let cfg = TrainConfig {
        estimator: EstimatorSpec::Ce,
        r: 1,
        seed: 0,
        ..TrainConfig::default()
    };
    let out = train_ce_baseline(&cfg, &split(0.0, 0)).unwrap();
    assert!(
        out.record.test_acc_at_best >= 0.97,
        "clean calibration accuracy {}",
        out.record.test_acc_at_best
    );
}

/// Heavy symmetric noise must cost the CE baseline accuracy relative to its
/// own clean run.
#[test]
fn sym50_degrades_ce_below_clean() {
    let cfg = TrainConfig {
        estimator: EstimatorSpec::Ce,
        r: 1,
        seed: 0,
        ..TrainConfig::default()
    };
    let clean = train_ce_baseline(&cfg, &split(0.0, 0)).unwrap();
    let noisy = train_ce_baseline(&cfg, &split(0.5, 0)).unwrap();
    assert!(
        noisy.record.test_acc_at_best < clean.record.test_acc_at_best,
        "noisy {} vs clean {}",
        noisy.record.test_acc_at_best,
        clean.record.test_acc_at_best
    );
}

/// In the wide-separation limit even a bare linear layer separates the
/// classes perfectly.
#[test]
fn separable_limit_linear_model_is_perfect() {
    let pool = make_gaussian_mixture(4, 800, 2, 60.0, 0.5, 1).unwrap();
    let test = make_gaussian_mixture(4, 800, 2, 60.0, 0.5, 2).unwrap();
    let noise = NoiseSpec { kind: NoiseKind::None, tau: 0.0, seed: 0 };
    let split = SplitDataset::build(pool, test, &noise, 0.1, 3).unwrap();
    let cfg = TrainConfig {
        estimator: EstimatorSpec::Ce,
        r: 1,
        hidden: vec![],
        epochs: 40,
        seed: 4,
        ..TrainConfig::default()
    };
    let out = train_ce_baseline(&cfg, &split).unwrap();
    assert_eq!(out.record.test_acc_at_best, 1.0);
}

/// A model that reproduces every observed label scores full memorization on
/// both partitions.
#[test]
fn fully_memorized_labels_give_unit_fit() {
    let k = 3;
    let noisy_labels = vec![0usize, 2, 1, 1, 2, 0];
    let clean_labels = vec![0usize, 1, 1, 2, 2, 0];
    // One-hot features of the observed label, identity first layer: the
    // argmax prediction equals the observed label everywhere.
    let rows: Vec<Vec<f64>> = noisy_labels
        .iter()
        .map(|&l| {
            let mut row = vec![0.0; k];
            row[l] = 1.0;
            row
        })
        .collect();
    let features = Matrix::from_rows(&rows).unwrap();
    let mut train =
        LabeledDataset::from_clean(features, clean_labels.clone(), k).unwrap();
    train.noisy_labels = noisy_labels.clone();
    train.clean_mask = clean_labels
        .iter()
        .zip(&noisy_labels)
        .map(|(c, n)| c == n)
        .collect();

    let mut model = MlpModel::zeros(&[k, k], Activation::Relu).unwrap();
    for c in 0..k {
        model.weights_mut()[0].set(c, c, 1.0);
    }
    let memo = memorization_metrics(&model, &train).unwrap();
    assert_eq!(memo.noisy_fit, 1.0);
    assert_eq!(memo.clean_fit, 1.0);
    assert!(memo.noisy_defined && memo.clean_defined);
    // Per-label accuracy against observed labels is 1 as well.
    assert_eq!(evaluate(&model, &train).unwrap(), 1.0);
}
