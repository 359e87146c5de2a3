//! Robust M-estimators, their truncated variants, and the epoch-level
//! switching rule between the two.
//!
//! An estimator maps a per-example loss `L >= 0` to a transformed loss
//! `phi(L)` whose gradient is `weight(L) * dL`, so training reduces to
//! scaling each example's plain cross-entropy gradient by `weight(L)`.
//! The truncated variants freeze `phi` above a threshold `sigma`, which
//! zeroes the gradient weight of large-loss examples. The switching rule
//! alternates between the original and truncated forms on an epoch period.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A robust loss transform with its intrinsic parameter, if any.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum EstimatorSpec {
    /// Plain cross entropy: `phi(L) = L`, unit weight.
    Ce,
    /// Catoni's estimator: `phi(L) = ln(1 + L + L^2/2)`.
    Catoni,
    /// Log-sum penalty: `phi(L) = ln(1 + L/epsilon)`, `epsilon >= 1`.
    LogSum { epsilon: f64 },
    /// Welsch with a linear argument: `phi(L) = 1 - exp(-L/alpha^2)`, `alpha > 0`.
    WelschPlus { alpha: f64 },
}

impl EstimatorSpec {
    /// Builds a spec and validates the intrinsic-parameter range.
    pub fn new(kind: EstimatorKind, epsilon: f64, alpha: f64) -> Result<Self> {
        let spec = match kind {
            EstimatorKind::Ce => EstimatorSpec::Ce,
            EstimatorKind::Catoni => EstimatorSpec::Catoni,
            EstimatorKind::LogSum => EstimatorSpec::LogSum { epsilon },
            EstimatorKind::WelschPlus => EstimatorSpec::WelschPlus { alpha },
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            EstimatorSpec::LogSum { epsilon } if !(epsilon >= 1.0 && epsilon.is_finite()) => Err(
                Error::config(format!("logsum requires epsilon >= 1, got {epsilon}")),
            ),
            EstimatorSpec::WelschPlus { alpha } if !(alpha > 0.0 && alpha.is_finite()) => Err(
                Error::config(format!("welsch+ requires alpha > 0, got {alpha}")),
            ),
            _ => Ok(()),
        }
    }

    pub fn kind(&self) -> EstimatorKind {
        match self {
            EstimatorSpec::Ce => EstimatorKind::Ce,
            EstimatorSpec::Catoni => EstimatorKind::Catoni,
            EstimatorSpec::LogSum { .. } => EstimatorKind::LogSum,
            EstimatorSpec::WelschPlus { .. } => EstimatorKind::WelschPlus,
        }
    }

    /// The intrinsic parameter (`epsilon` or `alpha`), if this kind has one.
    pub fn intrinsic(&self) -> Option<f64> {
        match *self {
            EstimatorSpec::LogSum { epsilon } => Some(epsilon),
            EstimatorSpec::WelschPlus { alpha } => Some(alpha),
            _ => None,
        }
    }

    /// Returns a copy with the intrinsic parameter replaced; no-op for
    /// parameterless kinds.
    pub fn with_intrinsic(&self, value: f64) -> Result<Self> {
        let spec = match *self {
            EstimatorSpec::LogSum { .. } => EstimatorSpec::LogSum { epsilon: value },
            EstimatorSpec::WelschPlus { .. } => EstimatorSpec::WelschPlus { alpha: value },
            other => other,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Transformed loss `phi(L)`.
    pub fn phi(&self, loss: f64) -> Result<f64> {
        check_loss(loss)?;
        Ok(match *self {
            EstimatorSpec::Ce => loss,
            EstimatorSpec::Catoni => (1.0 + loss + loss * loss / 2.0).ln(),
            EstimatorSpec::LogSum { epsilon } => (1.0 + loss / epsilon).ln(),
            EstimatorSpec::WelschPlus { alpha } => 1.0 - (-loss / (alpha * alpha)).exp(),
        })
    }

    /// Gradient weight: the scalar multiplying the plain CE gradient.
    pub fn weight(&self, loss: f64) -> Result<f64> {
        check_loss(loss)?;
        Ok(match *self {
            EstimatorSpec::Ce => 1.0,
            EstimatorSpec::Catoni => (1.0 + loss) / (1.0 + loss + loss * loss / 2.0),
            EstimatorSpec::LogSum { epsilon } => epsilon / (epsilon + loss),
            EstimatorSpec::WelschPlus { alpha } => {
                let a2 = alpha * alpha;
                (-loss / a2).exp() / a2
            }
        })
    }

    /// Truncated transform: `phi(L)` below the threshold, the plateau value
    /// `phi(sigma)` above it. The boundary `L == sigma` takes the live branch.
    pub fn phi_truncated(&self, loss: f64, sigma: f64) -> Result<f64> {
        check_sigma(sigma)?;
        if loss <= sigma {
            self.phi(loss)
        } else {
            check_loss(loss)?;
            self.phi(sigma)
        }
    }

    /// Truncated gradient weight: `weight(L)` below the threshold, exactly
    /// zero above it.
    pub fn weight_truncated(&self, loss: f64, sigma: f64) -> Result<f64> {
        check_sigma(sigma)?;
        if loss <= sigma {
            self.weight(loss)
        } else {
            check_loss(loss)?;
            Ok(0.0)
        }
    }
}

fn check_loss(loss: f64) -> Result<()> {
    if loss.is_nan() || loss < 0.0 {
        return Err(Error::input(format!("loss must be >= 0, got {loss}")));
    }
    Ok(())
}

fn check_sigma(sigma: f64) -> Result<()> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::input(format!(
            "truncation point must be positive and finite, got {sigma}"
        )));
    }
    Ok(())
}

/// Estimator kind without its parameters; used by configs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EstimatorKind {
    #[serde(rename = "ce")]
    Ce,
    #[serde(rename = "catoni")]
    Catoni,
    #[serde(rename = "logsum")]
    LogSum,
    #[serde(rename = "welsch+")]
    WelschPlus,
}

impl std::fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            EstimatorKind::Ce => "ce",
            EstimatorKind::Catoni => "catoni",
            EstimatorKind::LogSum => "logsum",
            EstimatorKind::WelschPlus => "welsch+",
        };
        f.write_str(s)
    }
}

/// Which form of the estimator an epoch uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EpochMode {
    Original,
    Truncated,
}

impl std::fmt::Display for EpochMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            EpochMode::Original => f.write_str("original"),
            EpochMode::Truncated => f.write_str("truncated"),
        }
    }
}

/// Original form on epochs with `epoch % period == 0`, truncated otherwise.
/// With `period == 1` every epoch is Original (never-truncated ablation);
/// a `period` larger than the epoch budget yields Original only at epoch 0.
pub fn epoch_mode(epoch: usize, period: usize) -> EpochMode {
    assert!(period >= 1, "switch period must be >= 1");
    if epoch.is_multiple_of(period) {
        EpochMode::Original
    } else {
        EpochMode::Truncated
    }
}

/// One epoch's switching state: the period, the epoch index, and the
/// truncation point in force for that epoch.
#[derive(Debug, Clone, Copy)]
pub struct EpochSchedule {
    pub period: usize,
    pub epoch: usize,
    pub sigma: f64,
}

impl EpochSchedule {
    pub fn new(period: usize, epoch: usize, sigma: f64) -> Result<Self> {
        if period < 1 {
            return Err(Error::config("switch period must be >= 1"));
        }
        if !(sigma.is_finite() && sigma >= 0.0) {
            return Err(Error::config(format!("sigma must be finite and >= 0, got {sigma}")));
        }
        Ok(EpochSchedule { period, epoch, sigma })
    }

    pub fn mode(&self) -> EpochMode {
        epoch_mode(self.epoch, self.period)
    }
}

/// Per-example gradient weights for one mini-batch under the given mode.
pub fn batch_weights(
    spec: &EstimatorSpec,
    mode: EpochMode,
    losses: &[f64],
    sigma: f64,
) -> Result<Vec<f64>> {
    losses
        .iter()
        .map(|&l| match mode {
            EpochMode::Original => spec.weight(l),
            EpochMode::Truncated => spec.weight_truncated(l, sigma),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn phi_values_match_closed_forms() {
        assert_eq!(EstimatorSpec::Catoni.phi(0.0).unwrap(), 0.0);
        // log(1 + 2 + 2) = log 5
        assert_relative_eq!(EstimatorSpec::Catoni.phi(2.0).unwrap(), 5.0_f64.ln(), epsilon = 1e-15);
        assert_eq!(EstimatorSpec::WelschPlus { alpha: 1.0 }.phi(0.0).unwrap(), 0.0);
        assert_eq!(EstimatorSpec::Ce.phi(3.5).unwrap(), 3.5);
    }

    #[test]
    fn weight_values_match_closed_forms() {
        assert_eq!(EstimatorSpec::Catoni.weight(0.0).unwrap(), 1.0);
        assert_relative_eq!(
            EstimatorSpec::LogSum { epsilon: 2.0 }.weight(2.0).unwrap(),
            0.5,
            epsilon = 1e-15
        );
        assert_relative_eq!(
            EstimatorSpec::WelschPlus { alpha: 1.5 }.weight(0.0).unwrap(),
            1.0 / 2.25,
            epsilon = 1e-15
        );
    }

    #[test]
    fn truncation_branches() {
        // Above the threshold the transform plateaus at phi(sigma).
        assert_relative_eq!(
            EstimatorSpec::Catoni.phi_truncated(3.0, 2.0).unwrap(),
            5.0_f64.ln(),
            epsilon = 1e-15
        );
        // The boundary belongs to the live branch.
        let spec = EstimatorSpec::LogSum { epsilon: 1.0 };
        assert_eq!(
            spec.phi_truncated(2.0, 2.0).unwrap(),
            spec.phi(2.0).unwrap()
        );
        assert_eq!(EstimatorSpec::Ce.phi_truncated(1.0, 5.0).unwrap(), 1.0);

        assert_eq!(EstimatorSpec::Catoni.weight_truncated(3.0, 2.0).unwrap(), 0.0);
        assert_relative_eq!(
            EstimatorSpec::Catoni.weight_truncated(2.0, 2.0).unwrap(),
            0.6,
            epsilon = 1e-15
        );
        assert_eq!(EstimatorSpec::Ce.weight_truncated(0.1, 1.0).unwrap(), 1.0);
    }

    #[test]
    fn negative_or_nan_loss_rejected() {
        assert!(EstimatorSpec::Catoni.phi(-0.1).is_err());
        assert!(EstimatorSpec::Catoni.weight(f64::NAN).is_err());
    }

    #[test]
    fn parameter_ranges_enforced() {
        assert!(EstimatorSpec::LogSum { epsilon: 0.5 }.validate().is_err());
        assert!(EstimatorSpec::WelschPlus { alpha: 0.0 }.validate().is_err());
        assert!(EstimatorSpec::new(EstimatorKind::LogSum, 1.0, 1.0).is_ok());
    }

    #[test]
    fn epoch_mode_follows_period() {
        assert_eq!(epoch_mode(0, 2), EpochMode::Original);
        assert_eq!(epoch_mode(3, 2), EpochMode::Truncated);
        let modes: Vec<usize> = (0..10)
            .filter(|&t| epoch_mode(t, 5) == EpochMode::Original)
            .collect();
        assert_eq!(modes, vec![0, 5]);
        // Period 1 degenerates to all-Original.
        assert!((0..20).all(|t| epoch_mode(t, 1) == EpochMode::Original));
    }

    #[test]
    fn batch_weights_dispatch() {
        let w = batch_weights(&EstimatorSpec::Ce, EpochMode::Truncated, &[0.5, 10.0], 2.0).unwrap();
        assert_eq!(w, vec![1.0, 0.0]);
        let w = batch_weights(&EstimatorSpec::Ce, EpochMode::Original, &[0.5, 10.0], 2.0).unwrap();
        assert_eq!(w, vec![1.0, 1.0]);
        let w = batch_weights(&EstimatorSpec::Catoni, EpochMode::Original, &[0.0, 2.0], 0.1).unwrap();
        assert_relative_eq!(w[0], 1.0, epsilon = 1e-15);
        assert_relative_eq!(w[1], 0.6, epsilon = 1e-15);
    }
}
