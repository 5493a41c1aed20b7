//! Accuracy, decision-boundary drift diagnostics and prior-robustness sweeps.

use ndarray::{Array1, Array2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{perturb_mu_p, LabeledDataset, PuSplit};
use crate::error::{Error, Result};
use crate::losses::{predict_label, zero_one_loss};
use crate::model::PredictorParams;
use crate::train::{train_model, Objective, RunConfig};

const PREDICT_CHUNK: usize = 4096;

/// Posteriors for the rows at `indices`, evaluated in bounded chunks.
pub fn predict_rows(params: &PredictorParams, features: &Array2<f64>, indices: &[usize]) -> Result<Array1<f64>> {
    let mut out = Vec::with_capacity(indices.len());
    for chunk in indices.chunks(PREDICT_CHUNK) {
        let x = features.select(Axis(0), chunk);
        out.extend(params.predict(x.view())?);
    }
    Ok(Array1::from(out))
}

/// Posteriors for every row.
pub fn predict_all(params: &PredictorParams, features: &Array2<f64>) -> Result<Array1<f64>> {
    let mut out = Vec::with_capacity(features.nrows());
    for chunk in features.axis_chunks_iter(Axis(0), PREDICT_CHUNK) {
        out.extend(params.predict(chunk)?);
    }
    Ok(Array1::from(out))
}

/// Fraction of predictions whose rounded value matches the label.
pub fn accuracy_from_predictions(eta: &[f64], labels: &[u8]) -> Result<f64> {
    if eta.is_empty() {
        return Err(Error::InvalidArgument("accuracy of an empty dataset".into()));
    }
    if eta.len() != labels.len() {
        return Err(Error::Shape(format!("{} predictions for {} labels", eta.len(), labels.len())));
    }
    let wrong: usize = eta
        .iter()
        .zip(labels)
        .map(|(&e, &y)| usize::from(zero_one_loss(e, y)))
        .sum();
    Ok((eta.len() - wrong) as f64 / eta.len() as f64)
}

pub fn accuracy(params: &PredictorParams, data: &LabeledDataset) -> Result<f64> {
    if data.n_rows() == 0 {
        return Err(Error::InvalidArgument("accuracy of an empty dataset".into()));
    }
    let eta = predict_all(params, data.features())?;
    accuracy_from_predictions(eta.as_slice().expect("contiguous"), data.labels())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DriftTarget {
    /// `|P|/Ω`, what a model reading `U` as negative converges to.
    TrainPositiveRate,
    /// `(|P| + |U_p|)/Ω`, the rate the test-time classifier should reproduce.
    TruePositiveRate,
}

/// Mean-prediction diagnostics over a PU training split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// Accuracy over all training rows against the hidden truth.
    pub accuracy: f64,
    pub mean_eta_overall: f64,
    pub mean_eta_u: f64,
    pub mean_eta_p: f64,
    pub train_positive_rate: f64,
    pub true_positive_rate: f64,
    /// `mean_eta_overall − train_positive_rate`
    pub drift: f64,
    pub distance_to_train_rate: f64,
    pub distance_to_true_rate: f64,
    pub closer_to: DriftTarget,
    /// Share of true positives predicted negative.
    pub false_negative_rate: f64,
    /// Share of true negatives predicted positive.
    pub false_positive_rate: f64,
}

pub fn drift_report(params: &PredictorParams, split: &PuSplit) -> Result<EvalReport> {
    let eta = predict_all(params, split.source().features())?;
    drift_from_predictions(eta.as_slice().expect("contiguous"), split)
}

/// Same as [`drift_report`] from precomputed per-row predictions.
pub fn drift_from_predictions(eta: &[f64], split: &PuSplit) -> Result<EvalReport> {
    let source = split.source();
    if eta.len() != source.n_rows() {
        return Err(Error::Shape(format!(
            "{} predictions for {} rows",
            eta.len(),
            source.n_rows()
        )));
    }
    let mean_over = |idx: &[usize]| {
        if idx.is_empty() {
            0.0
        } else {
            idx.iter().map(|&i| eta[i]).sum::<f64>() / idx.len() as f64
        }
    };
    let mean_eta_p = mean_over(split.positive_idx());
    let mean_eta_u = mean_over(split.unlabeled_idx());
    let omega = split.omega() as f64;
    let mean_eta_overall = (split.positive_idx().iter().map(|&i| eta[i]).sum::<f64>()
        + split.unlabeled_idx().iter().map(|&i| eta[i]).sum::<f64>())
        / omega;

    let (mut fn_count, mut fp_count) = (0usize, 0usize);
    for (&e, &y) in eta.iter().zip(source.labels()) {
        match (y, predict_label(e)) {
            (1, 0) => fn_count += 1,
            (0, 1) => fp_count += 1,
            _ => {}
        }
    }
    let n_pos = source.n_positive();
    let n_neg = source.n_negative();
    let rate = |k: usize, n: usize| if n == 0 { 0.0 } else { k as f64 / n as f64 };

    let train_rate = split.train_positive_rate();
    let true_rate = split.true_positive_rate();
    let d_train = (mean_eta_overall - train_rate).abs();
    let d_true = (mean_eta_overall - true_rate).abs();
    Ok(EvalReport {
        accuracy: accuracy_from_predictions(eta, source.labels())?,
        mean_eta_overall,
        mean_eta_u,
        mean_eta_p,
        train_positive_rate: train_rate,
        true_positive_rate: true_rate,
        drift: mean_eta_overall - train_rate,
        distance_to_train_rate: d_train,
        distance_to_true_rate: d_true,
        closer_to: if d_true < d_train {
            DriftTarget::TruePositiveRate
        } else {
            DriftTarget::TrainPositiveRate
        },
        false_negative_rate: rate(fn_count, n_pos),
        false_positive_rate: rate(fp_count, n_neg),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub delta: f64,
    /// Perturbed prior, absent when it fell outside `[0, 1)`.
    pub mu_target: Option<f64>,
    pub accuracy: Option<f64>,
    pub status: String,
}

/// One collective-loss training run per relative prior perturbation, all
/// with the base seed. Rows whose perturbed prior is invalid, or whose run
/// diverged, are flagged rather than failing the sweep.
pub fn robustness_sweep(
    base: &RunConfig,
    split: &PuSplit,
    test: &LabeledDataset,
    deltas: &[f64],
) -> Result<Vec<SweepRow>> {
    if base.objective != Objective::Cpu {
        return Err(Error::InvalidArgument(format!(
            "robustness sweeps need the cpu objective, got {}",
            base.objective
        )));
    }
    if deltas.is_empty() {
        return Err(Error::InvalidArgument("no deltas".into()));
    }
    let mu = base.resolve_prior(split).expect("cpu takes a prior");

    deltas
        .par_iter()
        .map(|&delta| {
            let mu_target = match perturb_mu_p(mu, delta) {
                Ok(m) => m,
                Err(_) => {
                    return Ok(SweepRow {
                        delta,
                        mu_target: None,
                        accuracy: None,
                        status: "invalid-prior".into(),
                    })
                }
            };
            let cfg = RunConfig {
                mu_override: Some(mu_target),
                ..base.clone()
            };
            let (_, report) = train_model(&cfg, split, test)?;
            Ok(SweepRow {
                delta,
                mu_target: Some(mu_target),
                accuracy: report.final_test_acc(),
                status: report.status.label().into(),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::make_pu_split;
    use proptest::prelude::*;
    use std::sync::Arc;

    #[test]
    fn accuracy_examples() {
        assert_eq!(accuracy_from_predictions(&[0.6, 0.4], &[1, 0]).unwrap(), 1.0);
        assert_eq!(accuracy_from_predictions(&[0.6, 0.4], &[0, 1]).unwrap(), 0.0);
        assert_eq!(accuracy_from_predictions(&[0.7; 4], &[1, 0, 1, 0]).unwrap(), 0.5);
        assert!(accuracy_from_predictions(&[], &[]).is_err());
    }

    fn small_split() -> PuSplit {
        let labels: Vec<u8> = (0..40).map(|i| u8::from(i % 2 == 0)).collect();
        let ds = LabeledDataset::new(Array2::zeros((40, 1)), labels).unwrap();
        make_pu_split(Arc::new(ds), 0.4, 5).unwrap()
    }

    #[test]
    fn constant_predictor_at_train_rate() {
        let split = small_split();
        let eta = vec![split.train_positive_rate(); 40];
        let r = drift_from_predictions(&eta, &split).unwrap();
        assert!(r.distance_to_train_rate < 1e-15);
        assert_eq!(r.closer_to, DriftTarget::TrainPositiveRate);
    }

    #[test]
    fn oracle_predictor_matches_true_rate() {
        let split = small_split();
        let eps = 1e-3;
        let eta: Vec<f64> = split
            .source()
            .labels()
            .iter()
            .map(|&y| if y == 1 { 1.0 - eps } else { eps })
            .collect();
        let r = drift_from_predictions(&eta, &split).unwrap();
        assert!(r.distance_to_true_rate <= eps + 1e-12);
        assert_eq!(r.closer_to, DriftTarget::TruePositiveRate);
        assert_eq!(r.accuracy, 1.0);
        assert_eq!(r.false_negative_rate, 0.0);
        assert_eq!(r.false_positive_rate, 0.0);
    }

    #[test]
    fn sweep_rejects_other_objectives_and_empty_deltas() {
        let split = small_split();
        let test = split.source().clone();
        let naive = RunConfig { objective: Objective::Naive, ..Default::default() };
        assert!(robustness_sweep(&naive, &split, &test, &[0.0]).is_err());
        let err = robustness_sweep(&RunConfig::default(), &split, &test, &[]).unwrap_err();
        assert!(err.to_string().contains("no deltas"));
    }

    proptest! {
        #[test]
        fn accuracy_complements_zero_one(eta in prop::collection::vec(0.0f64..1.0, 1..50), seed in any::<u64>()) {
            let labels: Vec<u8> = eta.iter().enumerate().map(|(i, _)| ((seed >> (i % 64)) & 1) as u8).collect();
            let acc = accuracy_from_predictions(&eta, &labels).unwrap();
            let loss = eta.iter().zip(&labels).map(|(&e, &y)| f64::from(zero_one_loss(e, y))).sum::<f64>() / eta.len() as f64;
            prop_assert_eq!(acc + loss, 1.0);
        }

        #[test]
        fn overall_mean_is_weighted_mean(eta in prop::collection::vec(0.0f64..1.0, 40)) {
            let split = small_split();
            let r = drift_from_predictions(&eta, &split).unwrap();
            let p = split.positive_idx().len() as f64;
            let u = split.unlabeled_idx().len() as f64;
            let weighted = (p * r.mean_eta_p + u * r.mean_eta_u) / split.omega() as f64;
            prop_assert!((r.mean_eta_overall - weighted).abs() <= 1e-12);
        }
    }
}
