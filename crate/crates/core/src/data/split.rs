use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::LabeledDataset;
use crate::error::{Error, Result};

/// The training view of a labeled dataset.
///
/// `positive_idx` is the labeled set `P`; `unlabeled_idx` is `U`, holding
/// every true negative plus the hidden positives `U_p`. Index lists are
/// sorted ascending. With `Ω = |P| + |U|`:
///
/// * `mu_p = |U_p| / Ω`, the gap between the test-time and train-time
///   positive rates,
/// * `pi_u = |U_p| / |U|`, the positive fraction inside `U`,
/// * `ratio_up_p = |U_p| / |P|`, so that `(|P| + |U_p|)/Ω = (1 + ratio_up_p)·|P|/Ω`.
///
/// `r` is the fraction of positives that was hidden in `U`.
#[derive(Debug, Clone)]
pub struct PuSplit {
    source: Arc<LabeledDataset>,
    positive_idx: Vec<usize>,
    unlabeled_idx: Vec<usize>,
    hidden_positive_idx: Vec<usize>,
    r: f64,
    ratio_up_p: f64,
    mu_p: f64,
    pi_u: f64,
}

impl PuSplit {
    pub fn source(&self) -> &LabeledDataset {
        &self.source
    }

    pub fn source_arc(&self) -> &Arc<LabeledDataset> {
        &self.source
    }

    pub fn positive_idx(&self) -> &[usize] {
        &self.positive_idx
    }

    pub fn unlabeled_idx(&self) -> &[usize] {
        &self.unlabeled_idx
    }

    pub fn hidden_positive_idx(&self) -> &[usize] {
        &self.hidden_positive_idx
    }

    pub fn r(&self) -> f64 {
        self.r
    }

    pub fn ratio_up_p(&self) -> f64 {
        self.ratio_up_p
    }

    pub fn mu_p(&self) -> f64 {
        self.mu_p
    }

    pub fn pi_u(&self) -> f64 {
        self.pi_u
    }

    /// Total sample count `|P| + |U|`.
    pub fn omega(&self) -> usize {
        self.positive_idx.len() + self.unlabeled_idx.len()
    }

    /// Positive rate seen during training when `U` is read as negative: `|P|/Ω`.
    pub fn train_positive_rate(&self) -> f64 {
        self.positive_idx.len() as f64 / self.omega() as f64
    }

    /// True positive rate over the training sample: `(|P| + |U_p|)/Ω`.
    pub fn true_positive_rate(&self) -> f64 {
        (self.positive_idx.len() + self.hidden_positive_idx.len()) as f64 / self.omega() as f64
    }

    /// Ground-truth label of every unlabeled row, aligned with `unlabeled_idx`.
    pub fn unlabeled_truth(&self) -> Vec<u8> {
        self.unlabeled_idx
            .iter()
            .map(|&i| self.source.labels()[i])
            .collect()
    }
}

/// Hides `round(r · #positives)` randomly chosen positives among the
/// negatives. Ties in the rounding go to the even count.
pub fn make_pu_split(data: Arc<LabeledDataset>, r: f64, seed: u64) -> Result<PuSplit> {
    if !(0.0..1.0).contains(&r) {
        return Err(Error::InvalidArgument(format!("r = {r} is outside [0, 1)")));
    }
    let n_pos = data.n_positive();
    let n_neg = data.n_negative();
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::DegenerateDataset(format!(
            "{n_pos} positive and {n_neg} negative rows; both classes are required"
        )));
    }

    let moved = (r * n_pos as f64).round_ties_even() as usize;
    if moved >= n_pos {
        return Err(Error::NoLabeledPositives {
            moved,
            positives: n_pos,
        });
    }

    let mut positives: Vec<usize> = Vec::with_capacity(n_pos);
    let mut negatives: Vec<usize> = Vec::with_capacity(n_neg);
    for (i, &y) in data.labels().iter().enumerate() {
        if y == 1 {
            positives.push(i);
        } else {
            negatives.push(i);
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    positives.shuffle(&mut rng);
    let mut hidden = positives[..moved].to_vec();
    let mut labeled = positives[moved..].to_vec();
    hidden.sort_unstable();
    labeled.sort_unstable();

    let mut unlabeled = negatives;
    unlabeled.extend_from_slice(&hidden);
    unlabeled.sort_unstable();

    let omega = (labeled.len() + unlabeled.len()) as f64;
    let n_hidden = hidden.len() as f64;
    Ok(PuSplit {
        r,
        ratio_up_p: n_hidden / labeled.len() as f64,
        mu_p: n_hidden / omega,
        pi_u: n_hidden / unlabeled.len() as f64,
        source: data,
        positive_idx: labeled,
        unlabeled_idx: unlabeled,
        hidden_positive_idx: hidden,
    })
}

/// Relative misspecification of a prior: `mu_p · (1 + delta)`.
pub fn perturb_mu_p(mu_p: f64, delta: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&mu_p) {
        return Err(Error::InvalidPrior(mu_p));
    }
    let out = mu_p * (1.0 + delta);
    if !(0.0..1.0).contains(&out) {
        return Err(Error::InvalidPrior(out));
    }
    Ok(out)
}
