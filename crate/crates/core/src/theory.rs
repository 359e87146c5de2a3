//! Exact brute-force verification of noise tolerance for truncated loss
//! transforms on enumerable hypothesis classes.
//!
//! A hypothesis class here is a finite prediction alphabet per instance; the
//! class is the cartesian product of the alphabets. Risks are exact finite
//! expectations, so argmin sets and the tolerance bound are computed, not
//! sampled. The tolerance claim is one-directional: the suite asserts
//! containment of the clean argmin in the noisy argmin only when the bound's
//! preconditions verifiably hold; everything above the bound is reported as
//! informational.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::estimators::EstimatorSpec;

/// A weighted instance with its clean label.
#[derive(Debug, Clone, Copy)]
pub struct InstancePoint {
    pub prob: f64,
    pub label: usize,
}

/// Finite task: instances with marginal probabilities, clean labels, and a
/// per-instance prediction alphabet (each entry a strictly interior
/// probability vector over `k` classes). Hypotheses are all assignments of
/// one alphabet entry per instance.
#[derive(Debug, Clone)]
pub struct FiniteTask {
    pub points: Vec<InstancePoint>,
    pub k: usize,
    /// `alphabet[i]` lists the prediction vectors hypothesis may emit on
    /// instance `i`.
    pub alphabet: Vec<Vec<Vec<f64>>>,
}

impl FiniteTask {
    pub fn validate(&self) -> Result<()> {
        if self.points.is_empty() {
            return Err(Error::input("task needs at least one instance"));
        }
        if self.alphabet.len() != self.points.len() {
            return Err(Error::input("alphabet must cover every instance"));
        }
        let total: f64 = self.points.iter().map(|p| p.prob).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::input(format!("marginals sum to {total}, expected 1")));
        }
        for (i, point) in self.points.iter().enumerate() {
            if point.label >= self.k {
                return Err(Error::input(format!("instance {i} label out of range")));
            }
            if self.alphabet[i].is_empty() {
                return Err(Error::input(format!("instance {i} has an empty alphabet")));
            }
            for vec in &self.alphabet[i] {
                if vec.len() != self.k {
                    return Err(Error::input("prediction vector width mismatch"));
                }
                let sum: f64 = vec.iter().sum();
                if (sum - 1.0).abs() > 1e-9 {
                    return Err(Error::input("prediction vector must sum to 1"));
                }
                if vec.iter().any(|&p| !(p > 0.0 && p < 1.0)) {
                    return Err(Error::input(
                        "prediction entries must be strictly inside (0, 1)",
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn num_hypotheses(&self) -> usize {
        self.alphabet.iter().map(Vec::len).product()
    }

    /// Decodes a hypothesis index into per-instance alphabet choices
    /// (mixed-radix, least significant digit on instance 0).
    pub fn hypothesis_choices(&self, index: usize) -> Vec<usize> {
        let mut rest = index;
        self.alphabet
            .iter()
            .map(|a| {
                let c = rest % a.len();
                rest /= a.len();
                c
            })
            .collect()
    }

    fn prediction(&self, choices: &[usize], instance: usize) -> &[f64] {
        &self.alphabet[instance][choices[instance]]
    }
}

/// The transformed loss used by the risks: truncated transform of the
/// cross entropy of the prediction vector. `sigma = None` disables
/// truncation.
#[derive(Debug, Clone, Copy)]
pub struct Psi {
    pub spec: EstimatorSpec,
    pub sigma: Option<f64>,
}

impl Psi {
    pub fn value(&self, prediction: &[f64], label: usize) -> Result<f64> {
        let ce = -prediction[label].ln();
        match self.sigma {
            Some(sigma) => self.spec.phi_truncated(ce, sigma),
            None => self.spec.phi(ce),
        }
    }
}

/// Exact clean risk of one hypothesis.
pub fn clean_risk(task: &FiniteTask, choices: &[usize], psi: &Psi) -> Result<f64> {
    let mut risk = 0.0;
    for (i, point) in task.points.iter().enumerate() {
        risk += point.prob * psi.value(task.prediction(choices, i), point.label)?;
    }
    Ok(risk)
}

/// Exact risk under symmetric flips at rate `eta`: every instance keeps its
/// label with probability `1 - eta` and takes each wrong label with
/// probability `eta / (k - 1)`.
pub fn noisy_risk_direct(
    task: &FiniteTask,
    choices: &[usize],
    psi: &Psi,
    eta: f64,
) -> Result<f64> {
    check_eta(eta, task.k)?;
    let spread = eta / (task.k - 1) as f64;
    let mut risk = 0.0;
    for (i, point) in task.points.iter().enumerate() {
        let pred = task.prediction(choices, i);
        let mut expected = 0.0;
        for label in 0..task.k {
            let p_label = if label == point.label {
                1.0 - eta
            } else {
                spread
            };
            expected += p_label * psi.value(pred, label)?;
        }
        risk += point.prob * expected;
    }
    Ok(risk)
}

/// The same noisy risk through the rearranged identity
/// `(1 - eta*k/(k-1)) * clean_risk + eta/(k-1) * E[sum_i psi(f(x), i)]`.
pub fn noisy_risk_identity(
    task: &FiniteTask,
    choices: &[usize],
    psi: &Psi,
    eta: f64,
) -> Result<f64> {
    check_eta(eta, task.k)?;
    let k = task.k as f64;
    let clean = clean_risk(task, choices, psi)?;
    let mut expected_sum = 0.0;
    for (i, point) in task.points.iter().enumerate() {
        let pred = task.prediction(choices, i);
        let mut s = 0.0;
        for label in 0..task.k {
            s += psi.value(pred, label)?;
        }
        expected_sum += point.prob * s;
    }
    Ok((1.0 - eta * k / (k - 1.0)) * clean + eta / (k - 1.0) * expected_sum)
}

fn check_eta(eta: f64, k: usize) -> Result<()> {
    let cap = (k - 1) as f64 / k as f64;
    if !(0.0..cap).contains(&eta) {
        return Err(Error::input(format!(
            "symmetric rate must be in [0, {cap}), got {eta}"
        )));
    }
    Ok(())
}

/// Tolerance verdict of one enumeration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Verdict {
    /// Preconditions held and the clean argmin is contained in the noisy one.
    Pass,
    /// Preconditions held but containment failed.
    Fail,
    /// Preconditions not satisfied; containment is reported but not asserted.
    Informational,
}

/// Per-hypothesis numbers feeding the bound.
#[derive(Debug, Clone, Serialize)]
pub struct HypothesisRisk {
    pub index: usize,
    pub clean_risk: f64,
    pub noisy_risk: f64,
    /// Risk gap in the sign convention of the tolerance derivation:
    /// `clean_risk(f*) - clean_risk(f) <= 0`.
    pub delta_gap: f64,
    /// The same gap with the opposite (nonnegative) sign, for reference.
    pub delta_abs: f64,
    /// `(1-k) * delta / (c2 - c1 - k*delta)`, when the denominator is valid;
    /// `None` for hypotheses tied with the clean minimum.
    pub bound: Option<f64>,
}

/// Full enumeration report.
#[derive(Debug, Clone, Serialize)]
pub struct RiskReport {
    pub k: usize,
    pub num_hypotheses: usize,
    /// Uniform rate, or the per-instance maximum for the non-uniform check.
    pub eta: f64,
    pub per_instance_eta: Option<Vec<f64>>,
    /// Bounds of `sum_i psi(f(x), i)` over all hypotheses and instances.
    pub c1: f64,
    pub c2: f64,
    pub clean_argmin: Vec<usize>,
    pub noisy_argmin: Vec<usize>,
    /// Largest rate the bound certifies over all non-minimizing hypotheses.
    pub eta_bound: Option<f64>,
    pub preconditions_hold: bool,
    pub containment: bool,
    pub verdict: Verdict,
    pub note: String,
    pub hypotheses: Vec<HypothesisRisk>,
}

const ARGMIN_TOL: f64 = 1e-12;

fn argmin_set(values: &[f64]) -> Vec<usize> {
    let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
    values
        .iter()
        .enumerate()
        .filter(|(_, &v)| v <= min + ARGMIN_TOL)
        .map(|(i, _)| i)
        .collect()
}

fn is_subset(a: &[usize], b: &[usize]) -> bool {
    a.iter().all(|x| b.binary_search(x).is_ok())
}

/// Enumerates every hypothesis under uniform symmetric noise and checks the
/// tolerance claim against the computed bound.
pub fn lemma1_check(task: &FiniteTask, psi: &Psi, eta: f64) -> Result<RiskReport> {
    task.validate()?;
    check_eta(eta, task.k)?;
    build_report(task, psi, eta, None)
}

/// Enumeration with one flip rate per instance (each instance spreads its
/// rate uniformly over the wrong labels). Rates must all lie below the
/// symmetric cap.
pub fn corollary1_check(
    task: &FiniteTask,
    psi: &Psi,
    eta_per_instance: &[f64],
) -> Result<RiskReport> {
    task.validate()?;
    if eta_per_instance.len() != task.points.len() {
        return Err(Error::input("need one rate per instance"));
    }
    for &eta in eta_per_instance {
        check_eta(eta, task.k)?;
    }
    let max_eta = eta_per_instance.iter().cloned().fold(0.0, f64::max);
    build_report(task, psi, max_eta, Some(eta_per_instance.to_vec()))
}

fn build_report(
    task: &FiniteTask,
    psi: &Psi,
    eta: f64,
    per_instance: Option<Vec<f64>>,
) -> Result<RiskReport> {
    let count = task.num_hypotheses();
    if count == 0 {
        return Err(Error::input("empty hypothesis set"));
    }
    let k = task.k as f64;

    let mut clean = Vec::with_capacity(count);
    let mut noisy = Vec::with_capacity(count);
    let mut c1 = f64::INFINITY;
    let mut c2 = f64::NEG_INFINITY;
    for index in 0..count {
        let choices = task.hypothesis_choices(index);
        clean.push(clean_risk(task, &choices, psi)?);
        let noisy_risk = match &per_instance {
            None => noisy_risk_direct(task, &choices, psi, eta)?,
            Some(rates) => noisy_risk_nonuniform(task, &choices, psi, rates)?,
        };
        noisy.push(noisy_risk);
        for (i, _) in task.points.iter().enumerate() {
            let pred = task.prediction(&choices, i);
            let mut s = 0.0;
            for label in 0..task.k {
                s += psi.value(pred, label)?;
            }
            c1 = c1.min(s);
            c2 = c2.max(s);
        }
    }

    let clean_argmin = argmin_set(&clean);
    let noisy_argmin = argmin_set(&noisy);
    let min_clean = clean[clean_argmin[0]];

    // Bound per non-minimizing hypothesis, using the derivation's gap
    // delta = R(f*) - R(f) <= 0, which makes (1-k)*delta nonnegative.
    let mut hypotheses = Vec::with_capacity(count);
    let mut eta_bound: Option<f64> = None;
    let mut denominators_ok = true;
    for index in 0..count {
        let delta_gap = min_clean - clean[index];
        let is_minimizer = clean_argmin.binary_search(&index).is_ok();
        let bound = if is_minimizer {
            None
        } else {
            let denom = c2 - c1 - k * delta_gap;
            if denom > 0.0 {
                let b = (1.0 - k) * delta_gap / denom;
                eta_bound = Some(eta_bound.map_or(b, |cur: f64| cur.min(b)));
                Some(b)
            } else {
                denominators_ok = false;
                None
            }
        };
        hypotheses.push(HypothesisRisk {
            index,
            clean_risk: clean[index],
            noisy_risk: noisy[index],
            delta_gap,
            delta_abs: -delta_gap,
            bound,
        });
    }

    let containment = is_subset(&clean_argmin, &noisy_argmin);
    let zero_noise = eta == 0.0
        && per_instance
            .as_ref()
            .is_none_or(|rates| rates.iter().all(|&r| r == 0.0));
    // At zero noise the claim is trivially in force; otherwise demand the
    // verified bound over every non-minimizing hypothesis.
    let preconditions_hold =
        zero_noise || (denominators_ok && eta_bound.is_some_and(|b| eta < b));
    let verdict = if preconditions_hold {
        if containment {
            Verdict::Pass
        } else {
            Verdict::Fail
        }
    } else {
        Verdict::Informational
    };
    let note = match verdict {
        Verdict::Pass => "preconditions hold; clean argmin preserved under noise".into(),
        Verdict::Fail => "preconditions hold but clean argmin not preserved".into(),
        Verdict::Informational => format!(
            "bound not satisfied at eta={eta} (certified bound: {:?}); containment reported only",
            eta_bound
        ),
    };

    Ok(RiskReport {
        k: task.k,
        num_hypotheses: count,
        eta,
        per_instance_eta: per_instance,
        c1,
        c2,
        clean_argmin,
        noisy_argmin,
        eta_bound,
        preconditions_hold,
        containment,
        verdict,
        note,
        hypotheses,
    })
}

/// Noisy risk with a per-instance rate spread uniformly over wrong labels.
fn noisy_risk_nonuniform(
    task: &FiniteTask,
    choices: &[usize],
    psi: &Psi,
    rates: &[f64],
) -> Result<f64> {
    let mut risk = 0.0;
    for (i, point) in task.points.iter().enumerate() {
        let pred = task.prediction(choices, i);
        let eta = rates[i];
        let spread = eta / (task.k - 1) as f64;
        let mut expected = 0.0;
        for label in 0..task.k {
            let p_label = if label == point.label {
                1.0 - eta
            } else {
                spread
            };
            expected += p_label * psi.value(pred, label)?;
        }
        risk += point.prob * expected;
    }
    Ok(risk)
}

/// The bundled enumeration fixture: three classes, four instances, and a
/// five-vector prediction alphabet shared by every instance, for a total of
/// 625 hypotheses.
pub fn bundled_task() -> FiniteTask {
    let alphabet_entry = vec![
        vec![0.90, 0.06, 0.04],
        vec![0.06, 0.90, 0.04],
        vec![0.04, 0.06, 0.90],
        vec![1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0],
        vec![0.55, 0.25, 0.20],
    ];
    FiniteTask {
        points: vec![
            InstancePoint { prob: 0.4, label: 0 },
            InstancePoint { prob: 0.3, label: 1 },
            InstancePoint { prob: 0.2, label: 2 },
            InstancePoint { prob: 0.1, label: 0 },
        ],
        k: 3,
        alphabet: vec![alphabet_entry.clone(); 4],
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn truncated_catoni(sigma: f64) -> Psi {
        Psi {
            spec: EstimatorSpec::Catoni,
            sigma: Some(sigma),
        }
    }

    #[test]
    fn bundled_task_is_valid() {
        let task = bundled_task();
        task.validate().unwrap();
        assert_eq!(task.num_hypotheses(), 625);
    }

    #[test]
    fn near_perfect_hypothesis_has_near_zero_risk() {
        let task = bundled_task();
        let psi = truncated_catoni(2.0);
        // Choice c on every instance picks the confident vector for class c;
        // match each instance's label.
        let choices: Vec<usize> = task.points.iter().map(|p| p.label).collect();
        let index = choices
            .iter()
            .enumerate()
            .map(|(i, &c)| c * 5usize.pow(i as u32))
            .sum::<usize>();
        let decoded = task.hypothesis_choices(index);
        assert_eq!(decoded, choices);
        let risk = clean_risk(&task, &choices, &psi).unwrap();
        assert!(risk < 0.15, "risk {risk}");
    }

    #[test]
    fn uniform_predictor_risk_is_transformed_ln_k() {
        let task = bundled_task();
        let psi = truncated_catoni(50.0);
        let choices = vec![3usize; 4]; // uniform vector everywhere
        let risk = clean_risk(&task, &choices, &psi).unwrap();
        let expected = EstimatorSpec::Catoni.phi(3.0_f64.ln()).unwrap();
        assert_relative_eq!(risk, expected, epsilon = 1e-12);
    }

    #[test]
    fn zero_eta_noisy_equals_clean() {
        let task = bundled_task();
        let psi = truncated_catoni(2.0);
        let choices = vec![4usize, 1, 2, 3];
        let clean = clean_risk(&task, &choices, &psi).unwrap();
        let noisy = noisy_risk_direct(&task, &choices, &psi, 0.0).unwrap();
        assert_relative_eq!(clean, noisy, epsilon = 1e-15);
    }

    #[test]
    fn symmetric_predictor_risk_ignores_eta() {
        let task = bundled_task();
        let psi = truncated_catoni(2.0);
        let choices = vec![3usize; 4];
        let a = noisy_risk_direct(&task, &choices, &psi, 0.05).unwrap();
        let b = noisy_risk_direct(&task, &choices, &psi, 0.55).unwrap();
        assert_relative_eq!(a, b, epsilon = 1e-12);
    }

    #[test]
    fn identity_matches_direct_form() {
        let task = bundled_task();
        let psi = truncated_catoni(2.0);
        for index in [0usize, 17, 300, 624] {
            let choices = task.hypothesis_choices(index);
            for eta in [0.0, 0.1, 0.3, 0.6] {
                let a = noisy_risk_direct(&task, &choices, &psi, eta).unwrap();
                let b = noisy_risk_identity(&task, &choices, &psi, eta).unwrap();
                assert_relative_eq!(a, b, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn eta_zero_check_passes() {
        let task = bundled_task();
        let report = lemma1_check(&task, &truncated_catoni(2.0), 0.0).unwrap();
        assert_eq!(report.verdict, Verdict::Pass);
        assert!(report.containment);
    }

    #[test]
    fn above_bound_is_informational_not_failure() {
        let task = bundled_task();
        let report = lemma1_check(&task, &truncated_catoni(2.0), 0.0).unwrap();
        let bound = report.eta_bound.expect("bundled task has a finite bound");
        let above = (bound * 1.5).min(0.6);
        let report = lemma1_check(&task, &truncated_catoni(2.0), above).unwrap();
        assert_eq!(report.verdict, Verdict::Informational);
        assert!(report.note.contains("bound not satisfied"));
    }

    #[test]
    fn uniform_rates_match_lemma_check() {
        let task = bundled_task();
        let psi = truncated_catoni(2.0);
        let eta = 0.05;
        let a = lemma1_check(&task, &psi, eta).unwrap();
        let b = corollary1_check(&task, &psi, &[eta; 4]).unwrap();
        assert_eq!(a.clean_argmin, b.clean_argmin);
        assert_eq!(a.noisy_argmin, b.noisy_argmin);
        assert_eq!(a.verdict, b.verdict);
        for (x, y) in a.hypotheses.iter().zip(&b.hypotheses) {
            assert_relative_eq!(x.noisy_risk, y.noisy_risk, epsilon = 1e-12);
        }
    }

    #[test]
    fn zero_rates_pass_corollary() {
        let task = bundled_task();
        let report = corollary1_check(&task, &truncated_catoni(2.0), &[0.0; 4]).unwrap();
        assert_eq!(report.verdict, Verdict::Pass);
    }
}
