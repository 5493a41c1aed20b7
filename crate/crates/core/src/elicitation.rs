//! Rewards, link functions and maximum-reward envelopes for PU elicitation.
//!
//! The reward for reporting `η̂` when the true posterior is `η` is
//!
//! ```text
//! I(η̂, η) = η·ln(η̂) + (1 − η)·ln(1 − |η̂ − μ_p|)
//! ```
//!
//! For a fixed `η` it is maximised at `η̂ = η(1 + μ_p)` whenever that point
//! lies in `(μ_p, 1]`, and the maximum is the envelope `J(η)` computed by
//! [`max_reward_j`]. The module also provides Savage's construction of the
//! conditional rewards from a differentiable envelope, and a dense grid
//! search used to certify the closed forms numerically.

use crate::error::{Error, Result};
use crate::model::EPS_CLAMP;

/// Step used for numerical derivatives of `J`.
pub const DERIVATIVE_STEP: f64 = 1e-6;

/// Default resolution of the `η̂` grid search.
pub const DEFAULT_GRID_STEP: f64 = 1e-4;

/// Reward configuration; the reward base is the natural logarithm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RewardSpec {
    mu_p: f64,
}

impl RewardSpec {
    pub fn new(mu_p: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&mu_p) {
            return Err(Error::InvalidPrior(mu_p));
        }
        Ok(Self { mu_p })
    }

    pub fn mu_p(&self) -> f64 {
        self.mu_p
    }

    pub fn link(&self, eta_hat: f64, y: u8) -> f64 {
        link_pu(eta_hat, y, self.mu_p)
    }

    pub fn reward(&self, eta_hat: f64, eta: f64) -> f64 {
        reward_i(eta_hat, eta, self.mu_p)
    }

    pub fn max_reward(&self, eta: f64) -> f64 {
        max_reward_j(eta, self.mu_p)
    }

    pub fn argmax(&self, eta: f64) -> f64 {
        argmax_reward(eta, self.mu_p)
    }

    /// `η` values for which the stationary point `η(1 + μ_p)` lies strictly
    /// above `μ_p` and no higher than 1: `(μ_p/(1+μ_p), 1/(1+μ_p)]`.
    pub fn in_certified_region(&self, eta: f64) -> bool {
        in_certified_region(eta, self.mu_p)
    }
}

pub fn in_certified_region(eta: f64, mu_p: f64) -> bool {
    let scaled = eta * (1.0 + mu_p);
    scaled > mu_p && scaled <= 1.0
}

/// Closeness of a prediction to the observed label: `η̂` for a labeled
/// positive, `1 − |η̂ − μ_p|` for an unlabeled sample.
pub fn link_pu(eta_hat: f64, y: u8, mu_p: f64) -> f64 {
    if y == 1 {
        eta_hat
    } else {
        1.0 - (eta_hat - mu_p).abs()
    }
}

/// `x·ln(v)` with `0·ln(·) = 0` and the logarithm's argument floored at
/// `EPS_CLAMP`.
fn weighted_ln(x: f64, v: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x * v.max(EPS_CLAMP).ln()
    }
}

/// `I(η̂, η) = η·ln(η̂) + (1 − η)·ln(1 − |η̂ − μ_p|)`.
pub fn reward_i(eta_hat: f64, eta: f64, mu_p: f64) -> f64 {
    weighted_ln(eta, eta_hat) + weighted_ln(1.0 - eta, 1.0 - (eta_hat - mu_p).abs())
}

/// Maximum of [`reward_i`] over `η̂` when the maximiser is interior:
///
/// ```text
/// J(η) = η·ln(η(1+μ)) + (1−η)·ln((1−η)(1+μ))   if η(1+μ) > μ
///      = η·ln(μ)                                otherwise
/// ```
///
/// The two branches meet continuously at `η = μ/(1+μ)`. Above
/// `η = 1/(1+μ)` the first branch is the unconstrained supremum and is no
/// longer attained on `[0, 1]`.
pub fn max_reward_j(eta: f64, mu_p: f64) -> f64 {
    if eta * (1.0 + mu_p) > mu_p {
        let s = 1.0 + mu_p;
        xlnx_scaled(eta, s) + xlnx_scaled(1.0 - eta, s)
    } else if eta == 0.0 {
        0.0
    } else {
        eta * mu_p.ln()
    }
}

/// Same envelope, but switching branches at `η > μ_p` instead of at the
/// stationary-point threshold. Kept for comparison: on `(μ/(1+μ), μ]` it
/// underestimates the attainable reward.
pub fn max_reward_j_prior_threshold(eta: f64, mu_p: f64) -> f64 {
    if eta > mu_p {
        let s = 1.0 + mu_p;
        xlnx_scaled(eta, s) + xlnx_scaled(1.0 - eta, s)
    } else if eta == 0.0 {
        0.0
    } else {
        eta * mu_p.ln()
    }
}

/// `x·ln(x·s)` with `0·ln 0 = 0`.
fn xlnx_scaled(x: f64, s: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x * (x * s).ln()
    }
}

/// Closed-form maximiser of `I(·, η)`: `min(η(1+μ_p), 1)` when
/// `η(1+μ_p) > μ_p`, else `μ_p`.
pub fn argmax_reward(eta: f64, mu_p: f64) -> f64 {
    let scaled = eta * (1.0 + mu_p);
    if scaled > mu_p {
        scaled.min(1.0)
    } else {
        mu_p
    }
}

/// Savage's conditional rewards built from an envelope `J`:
/// `I1 = J(η) + (1 − η)J′(η)` and `I0 = J(η) − ηJ′(η)`.
///
/// `J′` is a central difference with step [`DERIVATIVE_STEP`], falling back
/// to a one-sided difference when the stencil would leave `[0, 1]`.
pub fn savage_rewards<F: Fn(f64) -> f64>(j: F, eta: f64) -> (f64, f64) {
    let h = DERIVATIVE_STEP;
    let value = j(eta);
    let slope = if eta - h < 0.0 {
        (j(eta + h) - value) / h
    } else if eta + h > 1.0 {
        (value - j(eta - h)) / h
    } else {
        (j(eta + h) - j(eta - h)) / (2.0 * h)
    };
    (value + (1.0 - eta) * slope, value - eta * slope)
}

/// Grid search for `max_η̂ I(η̂, η)` over `η̂ ∈ {0, step, 2·step, …, 1}`.
/// Returns `(argmax, max)`; ties keep the smallest `η̂`.
pub fn grid_argmax(eta: f64, mu_p: f64, step: f64) -> (f64, f64) {
    let n = (1.0 / step).round() as usize;
    let mut best = (0.0, f64::NEG_INFINITY);
    for i in 0..=n {
        let eta_hat = (i as f64 * step).min(1.0);
        let v = reward_i(eta_hat, eta, mu_p);
        if v > best.1 {
            best = (eta_hat, v);
        }
    }
    best
}

/// One row of the certification table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SupportCheck {
    pub mu_p: f64,
    pub eta: f64,
    pub closed_form_argmax: f64,
    pub grid_argmax: f64,
    pub j: f64,
    pub grid_max: f64,
    /// `J(η) − max over the grid`; must be `≥ −tolerance` in the region.
    pub gap: f64,
    pub in_region: bool,
    pub passed: bool,
}

/// Bound slack allowed between the grid maximum and `J`.
pub const SUPPORT_TOLERANCE: f64 = 1e-9;

/// Compares the grid maximum of the reward against an envelope at every
/// `η` on a 0.01 grid over `[0, 1]`. Inside the certified region a row
/// passes when `grid max ≤ J + SUPPORT_TOLERANCE` and the grid argmax lies
/// within one grid step of `η(1 + μ_p)`; outside it rows always pass and
/// are reported for inspection.
pub fn check_support<F: Fn(f64, f64) -> f64>(
    mu_p: f64,
    grid_step: f64,
    envelope: F,
) -> Vec<SupportCheck> {
    (0..=100)
        .map(|k| {
            let eta = k as f64 / 100.0;
            let (grid_arg, grid_max) = grid_argmax(eta, mu_p, grid_step);
            let j = envelope(eta, mu_p);
            let gap = j - grid_max;
            let in_region = in_certified_region(eta, mu_p);
            let stationary = eta * (1.0 + mu_p);
            let passed = !in_region
                || (gap >= -SUPPORT_TOLERANCE
                    && (grid_arg - stationary).abs() <= grid_step * (1.0 + 1e-9));
            SupportCheck {
                mu_p,
                eta,
                closed_form_argmax: argmax_reward(eta, mu_p),
                grid_argmax: grid_arg,
                j,
                grid_max,
                gap,
                in_region,
                passed,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn entropy_j(eta: f64) -> f64 {
        xlnx_scaled(eta, 1.0) + xlnx_scaled(1.0 - eta, 1.0)
    }

    #[test]
    fn link_examples() {
        assert_eq!(link_pu(0.7, 1, 0.3), 0.7);
        assert_eq!(link_pu(0.3, 0, 0.3), 1.0);
        assert_abs_diff_eq!(link_pu(0.6, 0, 0.1), 0.5, epsilon = 1e-15);
        for v in [0.0, 0.2, 0.9, 1.0] {
            assert_eq!(link_pu(v, 0, 0.0), 1.0 - v);
        }
    }

    #[test]
    fn reward_examples() {
        assert_abs_diff_eq!(reward_i(0.6, 0.5, 0.2), (0.6f64).ln(), epsilon = 1e-15);
        assert_eq!(reward_i(0.2, 0.0, 0.2), 0.0);
        assert_abs_diff_eq!(reward_i(0.5, 1.0, 0.0), -std::f64::consts::LN_2, epsilon = 1e-15);
        for mu in [0.0, 0.05, 0.3, 0.9] {
            assert_eq!(reward_i(mu, 0.0, mu), 0.0);
            assert!(reward_i(1.0 - EPS_CLAMP, 1.0, mu).abs() < 1.1e-7);
        }
    }

    #[test]
    fn envelope_examples() {
        assert_abs_diff_eq!(max_reward_j(0.5, 0.2), (0.6f64).ln(), epsilon = 1e-15);
        assert_abs_diff_eq!(max_reward_j(0.5, 0.2), reward_i(0.6, 0.5, 0.2), epsilon = 1e-15);
        assert_abs_diff_eq!(max_reward_j(0.1, 0.2), 0.1 * (0.2f64).ln(), epsilon = 1e-15);
        assert_abs_diff_eq!(max_reward_j(1.0, 0.2), (1.2f64).ln(), epsilon = 1e-15);
        assert_eq!(max_reward_j(0.0, 0.0), 0.0);
    }

    #[test]
    fn envelope_branches_meet() {
        for mu in [0.05, 0.1, 0.2, 0.4] {
            let knee = mu / (1.0 + mu);
            let upper = max_reward_j(knee + 1e-12, mu);
            let lower = max_reward_j(knee - 1e-12, mu);
            assert_abs_diff_eq!(upper, lower, epsilon = 1e-9);
        }
    }

    #[test]
    fn prior_threshold_envelope_is_not_an_upper_bound() {
        // η = μ lies in the certified region but takes the lower branch
        let (mu, eta) = (0.2, 0.2);
        let (_, grid_max) = grid_argmax(eta, mu, DEFAULT_GRID_STEP);
        assert!(grid_max > max_reward_j_prior_threshold(eta, mu) + 1e-4);
        assert!(grid_max <= max_reward_j(eta, mu) + SUPPORT_TOLERANCE);
    }

    #[test]
    fn argmax_examples() {
        assert_abs_diff_eq!(argmax_reward(0.5, 0.2), 0.6, epsilon = 1e-15);
        assert_eq!(argmax_reward(0.1, 0.2), 0.2);
        assert_eq!(argmax_reward(0.95, 0.2), 1.0);
    }

    #[test]
    fn argmax_agrees_with_grid_oracle() {
        for (eta, mu) in [(0.5, 0.2), (0.1, 0.2), (0.95, 0.2), (0.3, 0.05)] {
            let (grid, _) = grid_argmax(eta, mu, DEFAULT_GRID_STEP);
            assert!(
                (grid - argmax_reward(eta, mu)).abs() <= DEFAULT_GRID_STEP + 1e-12,
                "eta={eta} mu={mu}: grid {grid} closed {}",
                argmax_reward(eta, mu)
            );
        }
    }

    #[test]
    fn savage_symmetric_point() {
        let (i1, i0) = savage_rewards(entropy_j, 0.5);
        assert_abs_diff_eq!(i1, -std::f64::consts::LN_2, epsilon = 1e-9);
        assert_abs_diff_eq!(i0, -std::f64::consts::LN_2, epsilon = 1e-9);
    }

    #[test]
    fn savage_log_loss_at_three_quarters() {
        let (i1, i0) = savage_rewards(entropy_j, 0.75);
        assert_abs_diff_eq!(i1, (0.75f64).ln(), epsilon = 1e-8);
        assert_abs_diff_eq!(i0, (0.25f64).ln(), epsilon = 1e-8);
        // closed-form derivative J' = ln(η/(1-η))
        let j = entropy_j(0.75);
        assert_abs_diff_eq!(j + 0.25 * (3.0f64).ln(), -0.287_682_072_451_780_9, epsilon = 1e-12);
    }

    #[test]
    fn savage_affine_reproduces_endpoints() {
        let j = |e: f64| -0.3 + 1.7 * e;
        for eta in [0.0, 0.2, 0.5, 1.0] {
            let (i1, i0) = savage_rewards(j, eta);
            assert_abs_diff_eq!(i1, 1.4, epsilon = 1e-8);
            assert_abs_diff_eq!(i0, -0.3, epsilon = 1e-8);
        }
    }

    #[test]
    fn reward_spec_validates_prior() {
        assert!(RewardSpec::new(1.0).is_err());
        assert!(RewardSpec::new(-0.1).is_err());
        let spec = RewardSpec::new(0.2).unwrap();
        assert!(spec.in_certified_region(0.5));
        assert!(!spec.in_certified_region(0.1));
        assert!(!spec.in_certified_region(0.9));
    }

    #[test]
    fn zero_prior_is_plain_log_loss() {
        let rows = check_support(0.0, 1e-3, max_reward_j);
        assert!(rows.iter().all(|r| r.passed));
        for r in rows.iter().filter(|r| r.in_region) {
            assert_abs_diff_eq!(r.j, entropy_j(r.eta), epsilon = 1e-12);
        }
    }
}
