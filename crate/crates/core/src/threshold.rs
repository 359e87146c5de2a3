//! Adaptive truncation point via the three-sigma rule and intrinsic-parameter
//! adaptation via a Gaussian-fit grid search.
//!
//! The truncation point is computed from the loss distribution of the whole
//! training set: take the losses at or below the median, and set
//! `sigma = mean + 3 * std` of that lower half. No noise-rate estimate is
//! involved anywhere.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::EstimatorSpec;

/// Lower clamp for the truncation point so degenerate epochs (all losses at
/// zero) still select a nonempty set.
pub const DEFAULT_SIGMA_MIN: f64 = 1e-3;

/// Per-example losses of the whole training set at one epoch.
#[derive(Debug, Clone)]
pub struct LossSnapshot {
    losses: Vec<f64>,
    epoch: usize,
}

impl LossSnapshot {
    pub fn new(losses: Vec<f64>, epoch: usize) -> Result<Self> {
        if losses.is_empty() {
            return Err(Error::input("loss snapshot must be nonempty"));
        }
        if let Some(bad) = losses.iter().find(|l| !(l.is_finite() && **l >= 0.0)) {
            return Err(Error::input(format!(
                "loss snapshot contains invalid value {bad}"
            )));
        }
        Ok(LossSnapshot { losses, epoch })
    }

    pub fn losses(&self) -> &[f64] {
        &self.losses
    }

    pub fn epoch(&self) -> usize {
        self.epoch
    }
}

/// `sigma = mu + 3 * delta` over the at-or-below-median losses, clamped below
/// by [`DEFAULT_SIGMA_MIN`].
pub fn three_sigma_threshold(snapshot: &LossSnapshot) -> f64 {
    three_sigma_threshold_clamped(snapshot, DEFAULT_SIGMA_MIN)
}

/// Same rule with an explicit lower clamp.
pub fn three_sigma_threshold_clamped(snapshot: &LossSnapshot, clamp_min: f64) -> f64 {
    let losses = snapshot.losses();
    let m = median(losses);
    let lower: Vec<f64> = losses.iter().copied().filter(|&l| l <= m).collect();
    let mu = mean(&lower);
    let delta = population_std(&lower, mu);
    (mu + 3.0 * delta).max(clamp_min)
}

/// Indices with `loss <= sigma`, in input order.
pub fn select_small_loss(losses: &[f64], sigma: f64) -> Vec<usize> {
    losses
        .iter()
        .enumerate()
        .filter(|(_, &l)| l <= sigma)
        .map(|(i, _)| i)
        .collect()
}

/// Scales the threshold for the stability ablation: `sigma * (1 + delta_fraction)`.
pub fn perturb_sigma(sigma: f64, delta_fraction: f64) -> f64 {
    sigma * (1.0 + delta_fraction)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AdaptMode {
    #[serde(rename = "fixed")]
    Fixed,
    #[serde(rename = "gaussian")]
    GaussianFit,
}

/// How the intrinsic parameter (`epsilon`/`alpha`) is determined each epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaptConfig {
    pub mode: AdaptMode,
    /// Candidate parameter values for the Gaussian-fit search.
    pub grid: Vec<f64>,
    /// Histogram bins used by the fit distance.
    pub bins: usize,
}

impl Default for AdaptConfig {
    fn default() -> Self {
        AdaptConfig {
            mode: AdaptMode::Fixed,
            grid: vec![1.0, 1.5, 2.0, 2.5, 3.0],
            bins: 32,
        }
    }
}

impl AdaptConfig {
    pub fn validate(&self) -> Result<()> {
        if self.bins < 2 {
            return Err(Error::config("adapt.bins must be >= 2"));
        }
        if self.mode == AdaptMode::GaussianFit && self.grid.is_empty() {
            return Err(Error::config("adapt.grid must be nonempty in gaussian mode"));
        }
        if self.grid.iter().any(|g| !g.is_finite()) {
            return Err(Error::config("adapt.grid values must be finite"));
        }
        Ok(())
    }
}

/// Picks the intrinsic parameter whose transformed small-loss distribution is
/// closest (L2 over histogram bins) to a Gaussian fitted on the same
/// transformed values. Fixed mode always returns 1.0. Degenerate inputs
/// (fewer than two values, or zero spread under every candidate) leave the
/// current parameter unchanged.
pub fn adapt_parameter(
    spec: &EstimatorSpec,
    small_losses: &[f64],
    config: &AdaptConfig,
) -> Result<f64> {
    config.validate()?;
    let current = spec.intrinsic().ok_or_else(|| {
        Error::config(format!(
            "estimator {} has no intrinsic parameter to adapt",
            spec.kind()
        ))
    })?;
    if config.mode == AdaptMode::Fixed {
        return Ok(1.0);
    }
    if small_losses.is_empty() {
        return Err(Error::input("small-loss set must be nonempty"));
    }
    if small_losses.len() < 2 {
        return Ok(current);
    }

    let mut grid = config.grid.clone();
    grid.sort_by(|a, b| a.partial_cmp(b).expect("grid values must be comparable"));

    let mut best: Option<(f64, f64)> = None; // (distance, parameter)
    for &candidate in &grid {
        let cand_spec = spec.with_intrinsic(candidate)?;
        let transformed: Vec<f64> = small_losses
            .iter()
            .map(|&l| cand_spec.phi(l))
            .collect::<Result<_>>()?;
        let Some(distance) = gaussian_fit_distance(&transformed, config.bins) else {
            continue;
        };
        match best {
            Some((d, _)) if distance >= d => {}
            _ => best = Some((distance, candidate)),
        }
    }
    Ok(best.map(|(_, p)| p).unwrap_or(current))
}

/// L2 distance between the bin-normalized histogram of `values` and the
/// Gaussian `N(mean, std^2)` fitted on the same values, evaluated at bin
/// centers and normalized to sum one. `None` when the spread is degenerate.
fn gaussian_fit_distance(values: &[f64], bins: usize) -> Option<f64> {
    let mu = mean(values);
    let delta = population_std(values, mu);
    if delta == 0.0 {
        return None;
    }
    let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !(hi > lo) {
        return None;
    }
    let width = (hi - lo) / bins as f64;

    let mut hist = vec![0.0_f64; bins];
    for &v in values {
        let idx = (((v - lo) / width) as usize).min(bins - 1);
        hist[idx] += 1.0;
    }
    let n = values.len() as f64;
    for h in &mut hist {
        *h /= n;
    }

    let mut gauss: Vec<f64> = (0..bins)
        .map(|b| {
            let center = lo + (b as f64 + 0.5) * width;
            let z = (center - mu) / delta;
            (-0.5 * z * z).exp()
        })
        .collect();
    let total: f64 = gauss.iter().sum();
    if total == 0.0 {
        return None;
    }
    for g in &mut gauss {
        *g /= total;
    }

    Some(
        hist.iter()
            .zip(&gauss)
            .map(|(h, g)| (h - g) * (h - g))
            .sum::<f64>()
            .sqrt(),
    )
}

fn median(xs: &[f64]) -> f64 {
    let mut sorted = xs.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("losses are finite"));
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Divide-by-n standard deviation.
fn population_std(xs: &[f64], mu: f64) -> f64 {
    let var = xs.iter().map(|x| (x - mu) * (x - mu)).sum::<f64>() / xs.len() as f64;
    var.sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn snapshot(losses: &[f64]) -> LossSnapshot {
        LossSnapshot::new(losses.to_vec(), 0).unwrap()
    }

    #[test]
    fn worked_three_sigma_example() {
        // M = 3, lower half {1,2,3}, mu = 2, delta = sqrt(2/3).
        let sigma = three_sigma_threshold(&snapshot(&[1.0, 2.0, 3.0, 10.0, 20.0]));
        assert_relative_eq!(sigma, 2.0 + 3.0 * (2.0_f64 / 3.0).sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn constant_losses_give_that_constant() {
        let sigma = three_sigma_threshold(&snapshot(&[4.2, 4.2, 4.2]));
        assert_relative_eq!(sigma, 4.2, epsilon = 1e-12);
    }

    #[test]
    fn degenerate_sigma_clamped() {
        // M = 2 (mean of middles), lower set {0}, sigma = 0 -> clamped.
        let sigma = three_sigma_threshold(&snapshot(&[0.0, 4.0]));
        assert_eq!(sigma, DEFAULT_SIGMA_MIN);
    }

    #[test]
    fn empty_snapshot_rejected() {
        assert!(LossSnapshot::new(vec![], 0).is_err());
        assert!(LossSnapshot::new(vec![1.0, f64::NAN], 0).is_err());
    }

    #[test]
    fn small_loss_selection() {
        assert_eq!(select_small_loss(&[0.5, 10.0], 2.0), vec![0]);
        assert_eq!(select_small_loss(&[0.5, 10.0], 10.0), vec![0, 1]);
        let sigma = three_sigma_threshold(&snapshot(&[1.0, 2.0, 3.0, 10.0, 20.0]));
        assert_eq!(
            select_small_loss(&[1.0, 2.0, 3.0, 10.0, 20.0], sigma),
            vec![0, 1, 2]
        );
    }

    #[test]
    fn perturbation_is_plain_scaling() {
        assert_relative_eq!(perturb_sigma(4.0, -0.20), 3.2, epsilon = 1e-12);
        assert_eq!(perturb_sigma(4.0, 0.0), 4.0);
        assert_relative_eq!(perturb_sigma(4.4495, 0.20), 5.3394, epsilon = 1e-12);
    }

    #[test]
    fn fixed_mode_returns_one() {
        let cfg = AdaptConfig::default();
        let spec = EstimatorSpec::LogSum { epsilon: 2.5 };
        assert_eq!(adapt_parameter(&spec, &[0.3, 0.9, 2.0], &cfg).unwrap(), 1.0);
    }

    #[test]
    fn degenerate_small_loss_set_keeps_parameter() {
        let cfg = AdaptConfig {
            mode: AdaptMode::GaussianFit,
            ..AdaptConfig::default()
        };
        let spec = EstimatorSpec::WelschPlus { alpha: 2.0 };
        // Single element: no spread to fit.
        assert_eq!(adapt_parameter(&spec, &[0.7], &cfg).unwrap(), 2.0);
        // All-equal values: every candidate transform is degenerate.
        assert_eq!(adapt_parameter(&spec, &[0.7; 50], &cfg).unwrap(), 2.0);
    }

    #[test]
    fn gaussian_matching_candidate_wins() {
        // Build losses whose log-sum transform at epsilon = 2 is an exact
        // Gaussian sample: L = eps * (exp(g) - 1) with g ~ N(1.0, 0.2^2).
        use rand::Rng;
        let mut rng = crate::rng::stream_rng(11, 9);
        let target_eps = 2.0;
        let losses: Vec<f64> = (0..20000)
            .map(|_| {
                let g: f64 = 1.0 + 0.2 * rng.sample::<f64, _>(rand_distr::StandardNormal);
                target_eps * (g.exp() - 1.0)
            })
            .collect();
        let cfg = AdaptConfig {
            mode: AdaptMode::GaussianFit,
            ..AdaptConfig::default()
        };
        let spec = EstimatorSpec::LogSum { epsilon: 1.0 };
        let picked = adapt_parameter(&spec, &losses, &cfg).unwrap();
        assert_eq!(picked, target_eps);
    }

    #[test]
    fn adaptation_is_deterministic_and_on_grid() {
        let cfg = AdaptConfig {
            mode: AdaptMode::GaussianFit,
            ..AdaptConfig::default()
        };
        let spec = EstimatorSpec::LogSum { epsilon: 1.0 };
        let losses: Vec<f64> = (0..500).map(|i| 0.01 * i as f64).collect();
        let a = adapt_parameter(&spec, &losses, &cfg).unwrap();
        let b = adapt_parameter(&spec, &losses, &cfg).unwrap();
        assert_eq!(a, b);
        assert!(cfg.grid.contains(&a));
    }
}
