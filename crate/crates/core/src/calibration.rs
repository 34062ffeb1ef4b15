//! Temperature scaling of merge-node confidences.
//!
//! The temperature divides every logit before the softmax:
//! `p_i = exp(x_i / T) / sum_j exp(x_j / T)`. It is fitted on held-out
//! gold trees by minimizing the mean negative log-likelihood of the gold
//! labels with a golden-section search.

use ndarray::{Array1, ArrayView1};
use thiserror::Error;

use crate::math::{argmax, scaled_log_prob, scaled_softmax};
use crate::rnn::{AnnotatedTree, ModelError, ModelParams};
use crate::treebank::ParseTree;

/// Search interval and tolerance for the fitted temperature.
pub const T_MIN: f64 = 0.05;
pub const T_MAX: f64 = 10.0;
pub const T_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Error)]
pub enum CalibrationError {
    #[error("temperature must be positive and finite, got {0}")]
    NonPositiveTemperature(f64),
    #[error("logits must be finite")]
    NonFiniteLogits,
    #[error("validation set has no merge nodes")]
    EmptyValidation,
    #[error("no predictions to evaluate")]
    EmptyInput,
    #[error("bin count must be at least 1")]
    ZeroBins,
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Which softmax variant to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SoftmaxForm {
    /// `exp(x_i / T) / sum_j exp(x_j / T)`.
    #[default]
    Standard,
    /// `exp(x_i) / sum_j exp(x_j / T)`: the numerator is left unscaled. This
    /// is not a probability distribution for `T != 1`; it exists only to
    /// compare against the standard form.
    UnscaledNumerator,
}

/// `softmax(logits / T)`, computed with max subtraction.
pub fn calibrated_softmax(logits: ArrayView1<f64>, temperature: f64) -> Result<Array1<f64>, CalibrationError> {
    softmax_with_form(logits, temperature, SoftmaxForm::Standard)
}

pub fn softmax_with_form(
    logits: ArrayView1<f64>,
    temperature: f64,
    form: SoftmaxForm,
) -> Result<Array1<f64>, CalibrationError> {
    check_temperature(temperature)?;
    if logits.iter().any(|x| !x.is_finite()) {
        return Err(CalibrationError::NonFiniteLogits);
    }
    Ok(match form {
        SoftmaxForm::Standard => scaled_softmax(logits, temperature),
        SoftmaxForm::UnscaledNumerator => {
            let max = logits.fold(f64::NEG_INFINITY, |m, &x| m.max(x));
            // exp(x_i) / sum exp(x_j/T) = exp(x_i - max/T) / sum exp((x_j - max)/T)
            let denom: f64 = logits.iter().map(|&x| ((x - max) / temperature).exp()).sum();
            logits.mapv(|x| (x - max / temperature).exp() / denom)
        }
    })
}

fn check_temperature(t: f64) -> Result<(), CalibrationError> {
    if t.is_finite() && t > 0.0 {
        Ok(())
    } else {
        Err(CalibrationError::NonPositiveTemperature(t))
    }
}

/// Result of fitting a temperature.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrationParams {
    pub temperature: f64,
    pub fitted_on: usize,
    pub nll_before: f64,
    pub nll_after: f64,
}

impl CalibrationParams {
    /// `T = 1`, nothing fitted.
    pub fn identity() -> Self {
        Self {
            temperature: 1.0,
            fitted_on: 0,
            nll_before: 0.0,
            nll_after: 0.0,
        }
    }

    pub fn with_temperature(temperature: f64) -> Result<Self, CalibrationError> {
        check_temperature(temperature)?;
        Ok(Self {
            temperature,
            ..Self::identity()
        })
    }
}

impl Default for CalibrationParams {
    fn default() -> Self {
        Self::identity()
    }
}

/// Mean negative log-likelihood of the gold labels at temperature `t`.
pub fn mean_nll(samples: &[(Array1<f64>, usize)], t: f64) -> f64 {
    let total: f64 = samples
        .iter()
        .map(|(logits, gold)| -scaled_log_prob(logits.view(), t, *gold))
        .sum();
    total / samples.len() as f64
}

/// Logits and gold label ids at every merge node of the gold structures.
pub fn collect_logits(
    params: &ModelParams,
    trees: &[ParseTree],
) -> Result<Vec<(Array1<f64>, usize)>, CalibrationError> {
    let mut out = Vec::new();
    for tree in trees {
        let annotated = params.forward_gold_tree(tree)?;
        for node in annotated.internal_nodes() {
            if let AnnotatedTree::Internal { label, scores, .. } = node {
                out.push((scores.logits.clone(), label.id));
            }
        }
    }
    Ok(out)
}

/// Fits the temperature on the merge nodes of gold validation trees.
pub fn fit_temperature(params: &ModelParams, validation: &[ParseTree]) -> Result<CalibrationParams, CalibrationError> {
    fit_temperature_to_logits(&collect_logits(params, validation)?)
}

/// Golden-section search for the NLL-minimizing `T` in `[T_MIN, T_MAX]`. If
/// the search lands on a point worse than `T = 1` (the objective need not be
/// unimodal), `T = 1` is returned instead.
pub fn fit_temperature_to_logits(samples: &[(Array1<f64>, usize)]) -> Result<CalibrationParams, CalibrationError> {
    if samples.is_empty() {
        return Err(CalibrationError::EmptyValidation);
    }
    if samples.iter().any(|(l, _)| l.iter().any(|x| !x.is_finite())) {
        return Err(CalibrationError::NonFiniteLogits);
    }
    let f = |t: f64| mean_nll(samples, t);
    let nll_before = f(1.0);

    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (T_MIN, T_MAX);
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while b - a > T_TOLERANCE {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    let t = (a + b) / 2.0;
    let nll_t = f(t);
    let (temperature, nll_after) = if nll_t <= nll_before {
        (t, nll_t)
    } else {
        (1.0, nll_before)
    };
    Ok(CalibrationParams {
        temperature,
        fitted_on: samples.len(),
        nll_before,
        nll_after,
    })
}

/// Expected calibration error over equal-width confidence bins of the
/// predicted-class probability.
pub fn expected_calibration_error(
    probs_and_labels: &[(Array1<f64>, usize)],
    bins: usize,
) -> Result<f64, CalibrationError> {
    if bins == 0 {
        return Err(CalibrationError::ZeroBins);
    }
    if probs_and_labels.is_empty() {
        return Err(CalibrationError::EmptyInput);
    }
    let mut count = vec![0usize; bins];
    let mut correct = vec![0f64; bins];
    let mut confidence = vec![0f64; bins];
    for (probs, gold) in probs_and_labels {
        let pred = argmax(probs.view());
        let conf = probs[pred];
        let bin = ((conf * bins as f64) as usize).min(bins - 1);
        count[bin] += 1;
        confidence[bin] += conf;
        if pred == *gold {
            correct[bin] += 1.0;
        }
    }
    let n = probs_and_labels.len() as f64;
    let ece = (0..bins)
        .filter(|&i| count[i] > 0)
        .map(|i| {
            let c = count[i] as f64;
            (c / n) * (correct[i] / c - confidence[i] / c).abs()
        })
        .sum();
    Ok(ece)
}
