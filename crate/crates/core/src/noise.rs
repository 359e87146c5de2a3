//! Synthetic label-noise generation: symmetric, pairflip, and
//! instance-dependent corruption of a clean dataset, with ground-truth
//! bookkeeping for memorization analysis.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::net::Matrix;
use crate::rng::{stream_rng, STREAM_NOISE};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NoiseKind {
    #[serde(rename = "none")]
    None,
    #[serde(rename = "sym")]
    Symmetric,
    #[serde(rename = "pair")]
    Pairflip,
    #[serde(rename = "ins")]
    Instance,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub kind: NoiseKind,
    pub tau: f64,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.tau) {
            return Err(Error::config(format!(
                "noise rate must be in [0, 1), got {}",
                self.tau
            )));
        }
        if self.kind == NoiseKind::Pairflip && self.tau >= 0.5 {
            return Err(Error::config(
                "pairflip noise requires tau < 0.5 so clean labels stay dominant",
            ));
        }
        Ok(())
    }
}

/// A sample with both the observed (possibly noisy) labels and the latent
/// clean labels. `clean_mask[i]` is true iff the observed label is correct.
#[derive(Debug, Clone)]
pub struct LabeledDataset {
    pub features: Matrix,
    pub clean_labels: Vec<usize>,
    pub noisy_labels: Vec<usize>,
    pub k: usize,
    pub clean_mask: Vec<bool>,
}

impl LabeledDataset {
    /// Wraps clean data: observed labels equal clean labels.
    pub fn from_clean(features: Matrix, labels: Vec<usize>, k: usize) -> Result<Self> {
        if features.rows() != labels.len() {
            return Err(Error::config(format!(
                "{} feature rows vs {} labels",
                features.rows(),
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
            return Err(Error::config(format!("label {bad} out of range for k={k}")));
        }
        let n = labels.len();
        Ok(LabeledDataset {
            features,
            noisy_labels: labels.clone(),
            clean_labels: labels,
            k,
            clean_mask: vec![true; n],
        })
    }

    pub fn len(&self) -> usize {
        self.clean_labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clean_labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    /// Fraction of examples whose observed label differs from the clean one.
    pub fn flip_rate(&self) -> f64 {
        let flipped = self.clean_mask.iter().filter(|&&c| !c).count();
        flipped as f64 / self.len().max(1) as f64
    }

    /// Subset copy in the given index order.
    pub fn subset(&self, indices: &[usize]) -> LabeledDataset {
        LabeledDataset {
            features: self.features.select_rows(indices),
            clean_labels: indices.iter().map(|&i| self.clean_labels[i]).collect(),
            noisy_labels: indices.iter().map(|&i| self.noisy_labels[i]).collect(),
            k: self.k,
            clean_mask: indices.iter().map(|&i| self.clean_mask[i]).collect(),
        }
    }

    fn with_noisy_labels(&self, noisy: Vec<usize>) -> LabeledDataset {
        let mask = self
            .clean_labels
            .iter()
            .zip(&noisy)
            .map(|(c, n)| c == n)
            .collect();
        LabeledDataset {
            features: self.features.clone(),
            clean_labels: self.clean_labels.clone(),
            noisy_labels: noisy,
            k: self.k,
            clean_mask: mask,
        }
    }
}

/// Applies the configured noise model. The clean labels of `dataset` are the
/// source; any noise already present in `noisy_labels` is discarded.
pub fn inject(dataset: &LabeledDataset, spec: &NoiseSpec) -> Result<LabeledDataset> {
    spec.validate()?;
    let mut rng = stream_rng(spec.seed, STREAM_NOISE);
    match spec.kind {
        NoiseKind::None => Ok(dataset.with_noisy_labels(dataset.clean_labels.clone())),
        NoiseKind::Symmetric => inject_symmetric(dataset, spec.tau, &mut rng),
        NoiseKind::Pairflip => inject_pairflip(dataset, spec.tau, &mut rng),
        NoiseKind::Instance => inject_instance(dataset, spec.tau, &mut rng),
    }
}

/// Each label is kept with probability `1 - tau`, otherwise flipped uniformly
/// to one of the other `k - 1` classes.
pub fn inject_symmetric(
    dataset: &LabeledDataset,
    tau: f64,
    rng: &mut ChaCha8Rng,
) -> Result<LabeledDataset> {
    if dataset.k < 2 {
        return Err(Error::config("symmetric noise needs k >= 2"));
    }
    let k = dataset.k;
    let noisy = dataset
        .clean_labels
        .iter()
        .map(|&y| {
            if rng.gen::<f64>() < tau {
                let other = rng.gen_range(0..k - 1);
                if other >= y {
                    other + 1
                } else {
                    other
                }
            } else {
                y
            }
        })
        .collect();
    Ok(dataset.with_noisy_labels(noisy))
}

/// Each label is flipped to its cyclically adjacent class `(y + 1) mod k`
/// with probability `tau`; no other transition occurs.
pub fn inject_pairflip(
    dataset: &LabeledDataset,
    tau: f64,
    rng: &mut ChaCha8Rng,
) -> Result<LabeledDataset> {
    if tau >= 0.5 {
        return Err(Error::config(
            "pairflip noise requires tau < 0.5 so clean labels stay dominant",
        ));
    }
    let k = dataset.k;
    let noisy = dataset
        .clean_labels
        .iter()
        .map(|&y| {
            if rng.gen::<f64>() < tau {
                (y + 1) % k
            } else {
                y
            }
        })
        .collect();
    Ok(dataset.with_noisy_labels(noisy))
}

/// Feature-dependent noise: each example draws a flip rate from
/// `N(tau, 0.1^2)` truncated to `[0, 1]`, and flips into the other classes
/// with probabilities proportional to the softmax of a random linear
/// projection of its features (true-class score excluded).
///
/// RNG consumption order: the `dim x k` projection first (row-major standard
/// normals), then per example the truncated-normal rate followed by one
/// uniform draw for the label sample. Expects standardized features.
pub fn inject_instance(
    dataset: &LabeledDataset,
    tau: f64,
    rng: &mut ChaCha8Rng,
) -> Result<LabeledDataset> {
    if dataset.k < 2 {
        return Err(Error::config("instance noise needs k >= 2"));
    }
    let k = dataset.k;
    let dim = dataset.dim();
    let mut projection = Matrix::zeros(dim, k);
    for v in projection.data_mut() {
        *v = rng.sample(StandardNormal);
    }

    let mut noisy = Vec::with_capacity(dataset.len());
    for i in 0..dataset.len() {
        let y = dataset.clean_labels[i];
        let q = truncated_normal(tau, 0.1, 0.0, 1.0, rng);
        let dist = instance_flip_distribution(dataset.features.row(i), y, q, &projection);
        noisy.push(sample_categorical(&dist, rng.gen::<f64>()));
    }
    Ok(dataset.with_noisy_labels(noisy))
}

/// The per-example label distribution of the instance-noise model: the true
/// class keeps `1 - q`, the rest share `q` by softmax score.
pub fn instance_flip_distribution(x: &[f64], y: usize, q: f64, projection: &Matrix) -> Vec<f64> {
    let k = projection.cols();
    let mut scores = vec![0.0; k];
    for (j, &xv) in x.iter().enumerate() {
        if xv == 0.0 {
            continue;
        }
        let row = projection.row(j);
        for (s, &w) in scores.iter_mut().zip(row) {
            *s += xv * w;
        }
    }
    let max = scores
        .iter()
        .enumerate()
        .filter(|(c, _)| *c != y)
        .map(|(_, &s)| s)
        .fold(f64::NEG_INFINITY, f64::max);
    let mut dist = vec![0.0; k];
    let mut total = 0.0;
    for c in 0..k {
        if c != y {
            let e = (scores[c] - max).exp();
            dist[c] = e;
            total += e;
        }
    }
    for (c, d) in dist.iter_mut().enumerate() {
        if c != y {
            *d = q * *d / total;
        }
    }
    dist[y] = 1.0 - q;
    dist
}

/// Rejection-sampled normal restricted to `[lo, hi]`.
fn truncated_normal(mean: f64, std: f64, lo: f64, hi: f64, rng: &mut ChaCha8Rng) -> f64 {
    loop {
        let z: f64 = rng.sample(StandardNormal);
        let v = mean + std * z;
        if (lo..=hi).contains(&v) {
            return v;
        }
    }
}

fn sample_categorical(dist: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    for (i, &p) in dist.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    dist.len() - 1
}

/// Empirical summary of an injected dataset.
#[derive(Debug, Clone, Serialize)]
pub struct NoiseStats {
    /// Row-stochastic `k x k` matrix: `transition[c][o]` is the observed
    /// fraction of clean class `c` relabeled as `o`. Classes with no
    /// examples get an identity row.
    pub transition: Vec<Vec<f64>>,
    pub flip_rate: f64,
    pub per_class_flip: Vec<f64>,
    pub n: usize,
    pub k: usize,
}

pub fn noise_stats(dataset: &LabeledDataset) -> NoiseStats {
    let k = dataset.k;
    let mut counts = vec![vec![0usize; k]; k];
    for (&c, &o) in dataset.clean_labels.iter().zip(&dataset.noisy_labels) {
        counts[c][o] += 1;
    }
    let mut transition = vec![vec![0.0; k]; k];
    let mut per_class_flip = vec![0.0; k];
    for c in 0..k {
        let total: usize = counts[c].iter().sum();
        if total == 0 {
            transition[c][c] = 1.0;
            continue;
        }
        for o in 0..k {
            transition[c][o] = counts[c][o] as f64 / total as f64;
        }
        per_class_flip[c] = 1.0 - transition[c][c];
    }
    NoiseStats {
        transition,
        flip_rate: dataset.flip_rate(),
        per_class_flip,
        n: dataset.len(),
        k,
    }
}
