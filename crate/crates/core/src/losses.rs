//! Training objectives over predicted posteriors.
//!
//! Every batch loss returns its value together with `∂L/∂η̂` for each
//! prediction, laid out as the labeled-positive part `P_b` followed by the
//! unlabeled part `U_b`. Inputs are clamped to `[EPS_CLAMP, 1 - EPS_CLAMP]`
//! before any logarithm.

use crate::error::{Error, Result};
use crate::model::{clamp_eta, EPS_CLAMP};

/// Predictions for one mini-batch `S_b = P_b ∪ U_b`.
#[derive(Debug, Clone, Copy)]
pub struct BatchView<'a> {
    pub eta_p: &'a [f64],
    pub eta_u: &'a [f64],
}

impl<'a> BatchView<'a> {
    pub fn new(eta_p: &'a [f64], eta_u: &'a [f64]) -> Result<Self> {
        if eta_p.is_empty() && eta_u.is_empty() {
            return Err(Error::EmptyBatch("both P_b and U_b are empty".into()));
        }
        Ok(Self { eta_p, eta_u })
    }

    pub fn len(&self) -> usize {
        self.eta_p.len() + self.eta_u.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Optional diagnostic attached to a [`LossResult`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LossAux {
    /// Estimated negative-class risk `R_u(0) − π·R_p(0)`.
    NnpuInner(f64),
    /// Mean prediction over `U_b`.
    UnlabeledMean(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossResult {
    pub value: f64,
    pub grad: Vec<f64>,
    pub aux: Option<LossAux>,
}

impl LossResult {
    /// Splits `grad` into its `P_b` and `U_b` parts.
    pub fn split_grad(&self, batch: &BatchView) -> (&[f64], &[f64]) {
        self.grad.split_at(batch.eta_p.len())
    }
}

fn neg_ln(v: f64) -> f64 {
    -clamp_eta(v).ln()
}

fn mean(values: impl ExactSizeIterator<Item = f64>) -> f64 {
    let n = values.len();
    if n == 0 {
        0.0
    } else {
        values.sum::<f64>() / n as f64
    }
}

/// Cross-entropy for a single prediction.
pub fn pn_log_loss(eta_hat: f64, y: u8) -> LossResult {
    let e = clamp_eta(eta_hat);
    let (value, grad) = if y == 1 {
        (-e.ln(), -1.0 / e)
    } else {
        (-(1.0 - e).ln(), 1.0 / (1.0 - e))
    };
    LossResult {
        value,
        grad: vec![grad],
        aux: None,
    }
}

/// Mean cross-entropy of a batch against known labels.
pub fn pn_batch_loss(eta: &[f64], labels: &[u8]) -> Result<LossResult> {
    if eta.is_empty() {
        return Err(Error::EmptyBatch("no predictions".into()));
    }
    if eta.len() != labels.len() {
        return Err(Error::Shape(format!(
            "{} predictions but {} labels",
            eta.len(),
            labels.len()
        )));
    }
    let n = eta.len() as f64;
    let mut value = 0.0;
    let mut grad = Vec::with_capacity(eta.len());
    for (&e, &y) in eta.iter().zip(labels) {
        let r = pn_log_loss(e, y);
        value += r.value;
        grad.push(r.grad[0] / n);
    }
    Ok(LossResult {
        value: value / n,
        grad,
        aux: None,
    })
}

/// `1` when the rounded posterior disagrees with `y`. A posterior of exactly
/// 0.5 is classified positive.
pub fn zero_one_loss(eta_hat: f64, y: u8) -> u8 {
    u8::from(predict_label(eta_hat) != y)
}

pub fn predict_label(eta_hat: f64) -> u8 {
    u8::from(eta_hat >= 0.5)
}

/// Treats every unlabeled sample as negative:
/// `mean_P[−ln η̂] + mean_U[−ln(1 − η̂)]`, an empty part contributing 0.
pub fn naive_negative_loss(batch: &BatchView) -> LossResult {
    let n_p = batch.eta_p.len() as f64;
    let n_u = batch.eta_u.len() as f64;
    let value = mean(batch.eta_p.iter().map(|&e| neg_ln(e)))
        + mean(batch.eta_u.iter().map(|&e| neg_ln(1.0 - e)));
    let grad = batch
        .eta_p
        .iter()
        .map(|&e| -1.0 / (clamp_eta(e) * n_p))
        .chain(batch.eta_u.iter().map(|&e| 1.0 / ((1.0 - clamp_eta(e)) * n_u)))
        .collect();
    LossResult {
        value,
        grad,
        aux: None,
    }
}

/// The three empirical pieces shared by the unbiased and non-negative
/// estimators, each with its gradient.
struct RiskTerms {
    positive: f64,
    inner: f64,
    grad_positive: Vec<f64>,
    grad_inner: Vec<f64>,
}

fn risk_terms(batch: &BatchView, pi_u: f64) -> Result<RiskTerms> {
    if batch.eta_u.is_empty() {
        return Err(Error::UnlabeledRequired);
    }
    if !(0.0..=1.0).contains(&pi_u) {
        return Err(Error::InvalidPrior(pi_u));
    }
    if batch.eta_p.is_empty() && pi_u > 0.0 {
        return Err(Error::EmptyBatch(
            "labeled positives required when the prior is non-zero".into(),
        ));
    }
    let n_p = batch.eta_p.len() as f64;
    let n_u = batch.eta_u.len() as f64;

    let positive = pi_u * mean(batch.eta_p.iter().map(|&e| neg_ln(e)));
    let inner = mean(batch.eta_u.iter().map(|&e| neg_ln(1.0 - e)))
        - pi_u * mean(batch.eta_p.iter().map(|&e| neg_ln(1.0 - e)));

    let mut grad_positive = Vec::with_capacity(batch.len());
    let mut grad_inner = Vec::with_capacity(batch.len());
    for &e in batch.eta_p {
        let e = clamp_eta(e);
        grad_positive.push(-pi_u / (n_p * e));
        grad_inner.push(-pi_u / (n_p * (1.0 - e)));
    }
    for &e in batch.eta_u {
        let e = clamp_eta(e);
        grad_positive.push(0.0);
        grad_inner.push(1.0 / (n_u * (1.0 - e)));
    }
    Ok(RiskTerms {
        positive,
        inner,
        grad_positive,
        grad_inner,
    })
}

/// Unbiased PU risk
/// `π·mean_P[−ln η̂] + mean_U[−ln(1 − η̂)] − π·mean_P[−ln(1 − η̂)]`.
/// The value can be negative.
pub fn upu_risk(batch: &BatchView, pi_u: f64) -> Result<LossResult> {
    let t = risk_terms(batch, pi_u)?;
    Ok(LossResult {
        value: t.positive + t.inner,
        grad: t
            .grad_positive
            .iter()
            .zip(&t.grad_inner)
            .map(|(a, b)| a + b)
            .collect(),
        aux: Some(LossAux::NnpuInner(t.inner)),
    })
}

/// Non-negative PU risk `π·mean_P[−ln η̂] + max{0, inner}`.
///
/// The returned gradient is the training direction rather than the
/// derivative of the value: while `inner > 0` it is the full gradient; at
/// `inner = 0` only the positive part contributes; once `inner < 0` the
/// positive part is dropped and the gradient is `−γ·∂inner/∂η̂`, which pushes
/// the estimated negative risk back up.
pub fn nnpu_risk(batch: &BatchView, pi_u: f64, gamma: f64) -> Result<LossResult> {
    let t = risk_terms(batch, pi_u)?;
    let grad = if t.inner > 0.0 {
        t.grad_positive
            .iter()
            .zip(&t.grad_inner)
            .map(|(a, b)| a + b)
            .collect()
    } else if t.inner == 0.0 {
        t.grad_positive
    } else {
        t.grad_inner.iter().map(|g| -gamma * g).collect()
    };
    Ok(LossResult {
        value: t.positive + t.inner.max(0.0),
        grad,
        aux: Some(LossAux::NnpuInner(t.inner)),
    })
}

/// Collective loss: per-sample `−ln η̂` averaged over `P_b`, plus one term
/// `−ln(1 − |mean_U η̂ − μ|)` for the whole unlabeled part.
///
/// The unlabeled gradient is `sign(m − μ) / ((1 − |m − μ|)·|U_b|)` for every
/// member, with subgradient 0 at `m = μ`.
pub fn cpu_collective_loss(batch: &BatchView, mu_target: f64) -> Result<LossResult> {
    if !(0.0..1.0).contains(&mu_target) {
        return Err(Error::InvalidPrior(mu_target));
    }
    let n_p = batch.eta_p.len() as f64;
    let n_u = batch.eta_u.len() as f64;

    let positive = mean(batch.eta_p.iter().map(|&e| neg_ln(e)));
    let mut grad: Vec<f64> = batch
        .eta_p
        .iter()
        .map(|&e| -1.0 / (n_p * clamp_eta(e)))
        .collect();

    if batch.eta_u.is_empty() {
        if batch.eta_p.is_empty() {
            return Err(Error::EmptyBatch("both P_b and U_b are empty".into()));
        }
        return Ok(LossResult {
            value: positive,
            grad,
            aux: None,
        });
    }

    let m = mean(batch.eta_u.iter().map(|&e| clamp_eta(e)));
    let dev = m - mu_target;
    let closeness = 1.0 - dev.abs();
    let (collective, g_u) = if closeness < EPS_CLAMP {
        (-EPS_CLAMP.ln(), 0.0)
    } else if dev == 0.0 {
        (0.0, 0.0)
    } else {
        (-closeness.ln(), dev.signum() / (closeness * n_u))
    };
    grad.extend(std::iter::repeat_n(g_u, batch.eta_u.len()));
    Ok(LossResult {
        value: positive + collective,
        grad,
        aux: Some(LossAux::UnlabeledMean(m)),
    })
}
