//! Mini-batch training: batch composition, objective dispatch and Nadam.

mod batches;
mod nadam;

pub use batches::{make_batches, BatchIndices};
pub use nadam::{nadam_step, NadamConfig, OptimizerState};

use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;
use std::time::Instant;

use ndarray::{Array1, Axis};
use serde::{Deserialize, Serialize};

use crate::data::{LabeledDataset, PuSplit};
use crate::error::{Error, Result};
use crate::eval;
use crate::losses::{
    cpu_collective_loss, naive_negative_loss, nnpu_risk, pn_batch_loss, upu_risk, BatchView,
    LossResult,
};
use crate::model::{init_params, Activation, PredictorParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Objective {
    /// Supervised cross-entropy with the hidden labels revealed.
    PnOracle,
    /// Unlabeled samples treated as negatives.
    Naive,
    Upu,
    Nnpu,
    /// Collective loss.
    Cpu,
}

impl Objective {
    pub const ALL: [Objective; 5] = [
        Objective::PnOracle,
        Objective::Naive,
        Objective::Upu,
        Objective::Nnpu,
        Objective::Cpu,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Objective::PnOracle => "pn-oracle",
            Objective::Naive => "naive",
            Objective::Upu => "upu",
            Objective::Nnpu => "nnpu",
            Objective::Cpu => "cpu",
        }
    }
}

impl fmt::Display for Objective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Objective {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Objective::ALL
            .into_iter()
            .find(|o| o.as_str() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown objective {s:?}")))
    }
}

/// Which split prior the collective loss drives the unlabeled mean towards.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MuTargetMode {
    /// `|U_p| / Ω`
    #[default]
    Omega,
    /// `|U_p| / |U|`
    WithinU,
}

impl fmt::Display for MuTargetMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MuTargetMode::Omega => "omega",
            MuTargetMode::WithinU => "within-u",
        })
    }
}

impl FromStr for MuTargetMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "omega" => Ok(MuTargetMode::Omega),
            "within-u" => Ok(MuTargetMode::WithinU),
            other => Err(Error::InvalidArgument(format!("unknown target mode {other:?}"))),
        }
    }
}

/// Full recipe for one training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub objective: Objective,
    pub mu_target_mode: MuTargetMode,
    /// Replaces the split's prior (misspecification experiments).
    pub mu_override: Option<f64>,
    pub lr: f64,
    pub batch_p: usize,
    pub batch_u: usize,
    pub epochs: usize,
    pub seed: u64,
    /// Hidden layer widths; empty means logistic regression.
    pub hidden: Vec<usize>,
    pub activation: Activation,
    /// nnPU defense strength.
    pub gamma: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps_opt: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        let nadam = NadamConfig::default();
        Self {
            objective: Objective::Cpu,
            mu_target_mode: MuTargetMode::Omega,
            mu_override: None,
            lr: nadam.lr,
            batch_p: 64,
            batch_u: 256,
            epochs: 30,
            seed: 0,
            hidden: Vec::new(),
            activation: Activation::Softsign,
            gamma: 1.0,
            beta1: nadam.beta1,
            beta2: nadam.beta2,
            eps_opt: nadam.eps,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.lr.is_nan() || self.lr <= 0.0 || self.lr.is_infinite() {
            return bad(format!("lr must be positive, got {}", self.lr));
        }
        if self.epochs == 0 {
            return bad("epochs must be at least 1".into());
        }
        if self.batch_p == 0 || self.batch_u == 0 {
            return bad("batch sizes must be at least 1".into());
        }
        if self.hidden.contains(&0) {
            return bad("hidden layer widths must be positive".into());
        }
        if self.hidden.len() > 2 {
            return bad(format!("at most two hidden layers, got {}", self.hidden.len()));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("beta1 and beta2 must lie in [0, 1)".into());
        }
        if self.gamma.is_nan() || self.gamma < 0.0 {
            return bad(format!("gamma must be non-negative, got {}", self.gamma));
        }
        if let Some(mu) = self.mu_override {
            if !(0.0..1.0).contains(&mu) {
                return Err(Error::InvalidPrior(mu));
            }
        }
        Ok(())
    }

    pub fn nadam(&self) -> NadamConfig {
        NadamConfig {
            lr: self.lr,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps_opt,
        }
    }

    /// `[d, hidden…, 1]`
    pub fn shape(&self, input_dim: usize) -> Vec<usize> {
        std::iter::once(input_dim)
            .chain(self.hidden.iter().copied())
            .chain(std::iter::once(1))
            .collect()
    }

    /// Prior handed to the objective: the override when set, otherwise
    /// the collective loss uses the mode-selected split prior and the
    /// risk estimators use the within-U prior. `None` for objectives that
    /// take no prior.
    pub fn resolve_prior(&self, split: &PuSplit) -> Option<f64> {
        match self.objective {
            Objective::Cpu => Some(self.mu_override.unwrap_or(match self.mu_target_mode {
                MuTargetMode::Omega => split.mu_p(),
                MuTargetMode::WithinU => split.pi_u(),
            })),
            Objective::Upu | Objective::Nnpu => Some(self.mu_override.unwrap_or(split.pi_u())),
            Objective::PnOracle | Objective::Naive => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean batch loss over the epoch.
    pub train_loss: f64,
    pub min_batch_loss: f64,
    pub test_acc: f64,
    /// Mean prediction over the whole unlabeled pool after the epoch.
    pub mean_eta_u: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "status")]
pub enum RunStatus {
    Completed,
    Diverged { epoch: usize, reason: String },
}

impl RunStatus {
    pub fn label(&self) -> &'static str {
        match self {
            RunStatus::Completed => "completed",
            RunStatus::Diverged { .. } => "diverged",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub objective: Objective,
    pub prior: Option<f64>,
    pub records: Vec<EpochRecord>,
    pub status: RunStatus,
    /// Seconds spent in `train_model`; never written to CSV.
    pub wall_clock_secs: f64,
}

impl RunReport {
    pub fn final_record(&self) -> Option<&EpochRecord> {
        self.records.last()
    }

    pub fn final_test_acc(&self) -> Option<f64> {
        self.final_record().map(|r| r.test_acc)
    }

    pub fn diverged(&self) -> bool {
        matches!(self.status, RunStatus::Diverged { .. })
    }

    /// Per-epoch rows followed by one `# key=value,…` summary line.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        for r in &self.records {
            wtr.serialize(r)?;
        }
        if self.records.is_empty() {
            wtr.write_record(["epoch", "train_loss", "min_batch_loss", "test_acc", "mean_eta_u"])?;
        }
        wtr.flush().map_err(|e| Error::io("run report", e))?;
        let mut w = wtr.into_inner().map_err(|e| Error::io("run report", e.into_error()))?;
        let prior = self.prior.map(|p| p.to_string()).unwrap_or_default();
        let (diverged_epoch, reason) = match &self.status {
            RunStatus::Completed => (String::new(), String::new()),
            RunStatus::Diverged { epoch, reason } => (epoch.to_string(), reason.replace([',', '\n'], ";")),
        };
        writeln!(
            w,
            "# objective={},prior={},status={},diverged_epoch={},reason={}",
            self.objective,
            prior,
            self.status.label(),
            diverged_epoch,
            reason
        )
        .map_err(|e| Error::io("run report", e))
    }

    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let mut body = String::new();
        let mut summary = None;
        for line in r.lines() {
            let line = line.map_err(|e| Error::io("run report", e))?;
            if let Some(rest) = line.strip_prefix("# ") {
                summary = Some(rest.to_string());
            } else {
                body.push_str(&line);
                body.push('\n');
            }
        }
        let summary = summary.ok_or_else(|| Error::parse(body.len() as u64, "missing summary line"))?;
        let mut fields = std::collections::HashMap::new();
        for kv in summary.split(',') {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| Error::parse(body.len() as u64, format!("bad summary field {kv:?}")))?;
            fields.insert(k.to_string(), v.to_string());
        }
        let get = |k: &str| fields.get(k).cloned().unwrap_or_default();
        let objective = get("objective").parse()?;
        let prior = match get("prior").as_str() {
            "" => None,
            p => Some(p.parse().map_err(|_| Error::parse(0, format!("bad prior {p:?}")))?),
        };
        let status = match get("status").as_str() {
            "completed" => RunStatus::Completed,
            "diverged" => RunStatus::Diverged {
                epoch: get("diverged_epoch")
                    .parse()
                    .map_err(|_| Error::parse(0, "bad diverged_epoch"))?,
                reason: get("reason"),
            },
            other => return Err(Error::parse(0, format!("bad status {other:?}"))),
        };
        let mut rdr = csv::Reader::from_reader(body.as_bytes());
        let records = rdr.deserialize().collect::<std::result::Result<Vec<EpochRecord>, _>>()?;
        Ok(RunReport {
            objective,
            prior,
            records,
            status,
            wall_clock_secs: 0.0,
        })
    }
}

/// Trains a fresh model on `split` and evaluates it on `test` after every
/// epoch. A non-finite loss or gradient stops the run early; the report is
/// then flagged diverged and holds the epochs completed so far.
pub fn train_model(
    config: &RunConfig,
    split: &PuSplit,
    test: &LabeledDataset,
) -> Result<(PredictorParams, RunReport)> {
    config.validate()?;
    let started = Instant::now();
    let source = split.source();
    if test.n_features() != source.n_features() {
        return Err(Error::Shape(format!(
            "test set has {} features, training data {}",
            test.n_features(),
            source.n_features()
        )));
    }
    let prior = config.resolve_prior(split);
    if let Some(p) = prior {
        if !(0.0..1.0).contains(&p) {
            return Err(Error::InvalidPrior(p));
        }
    }

    let mut params = init_params(&config.shape(source.n_features()), config.activation, config.seed)?;
    let mut state = OptimizerState::new(&params);
    let nadam = config.nadam();
    let mut records = Vec::with_capacity(config.epochs);
    let mut status = RunStatus::Completed;

    'epochs: for epoch in 0..config.epochs {
        let batches = make_batches(split, config.batch_p, config.batch_u, config.seed, epoch as u64)?;
        if let Some(last) = batches.last() {
            if last.unlabeled.len() < config.batch_u {
                log::debug!(
                    "epoch {epoch}: final unlabeled chunk has {} of {} rows",
                    last.unlabeled.len(),
                    config.batch_u
                );
            }
        }

        let mut loss_sum = 0.0;
        let mut loss_min = f64::INFINITY;
        for batch in &batches {
            let rows: Vec<usize> = batch.positive.iter().chain(&batch.unlabeled).copied().collect();
            let x = source.features().select(Axis(0), &rows);
            let (eta, cache) = params.forward(x.view())?;
            let eta = eta.as_slice().expect("standard layout");
            let n_p = batch.positive.len();

            let loss = batch_objective(config, prior, eta, n_p, &rows, source)?;
            if !loss.value.is_finite() {
                status = RunStatus::Diverged {
                    epoch,
                    reason: format!("non-finite loss {}", loss.value),
                };
                break 'epochs;
            }
            let grads = params.backward(&cache, Array1::from(loss.grad).view())?;
            match nadam_step(&mut params, &grads, &mut state, &nadam) {
                Ok(()) => {}
                Err(Error::Diverged(reason)) => {
                    status = RunStatus::Diverged { epoch, reason };
                    break 'epochs;
                }
                Err(e) => return Err(e),
            }
            loss_sum += loss.value;
            loss_min = loss_min.min(loss.value);
        }

        let eta_u = eval::predict_rows(&params, source.features(), split.unlabeled_idx())?;
        let record = EpochRecord {
            epoch,
            train_loss: loss_sum / batches.len() as f64,
            min_batch_loss: loss_min,
            test_acc: eval::accuracy(&params, test)?,
            mean_eta_u: eta_u.mean().unwrap_or(0.0),
        };
        log::debug!(
            "{} epoch {epoch}: loss {:.5} test_acc {:.4} mean_eta_u {:.4}",
            config.objective,
            record.train_loss,
            record.test_acc,
            record.mean_eta_u
        );
        records.push(record);
    }

    if let RunStatus::Diverged { epoch, reason } = &status {
        log::warn!("{} run diverged in epoch {epoch}: {reason}", config.objective);
    }

    Ok((
        params,
        RunReport {
            objective: config.objective,
            prior,
            records,
            status,
            wall_clock_secs: started.elapsed().as_secs_f64(),
        },
    ))
}

fn batch_objective(
    config: &RunConfig,
    prior: Option<f64>,
    eta: &[f64],
    n_p: usize,
    rows: &[usize],
    source: &LabeledDataset,
) -> Result<LossResult> {
    let (eta_p, eta_u) = eta.split_at(n_p);
    let view = BatchView::new(eta_p, eta_u)?;
    let prior = || prior.expect("objective takes a prior");
    match config.objective {
        Objective::PnOracle => {
            let truth: Vec<u8> = rows.iter().map(|&i| source.labels()[i]).collect();
            pn_batch_loss(eta, &truth)
        }
        Objective::Naive => Ok(naive_negative_loss(&view)),
        Objective::Upu => upu_risk(&view, prior()),
        Objective::Nnpu => nnpu_risk(&view, prior(), config.gamma),
        Objective::Cpu => cpu_collective_loss(&view, prior()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::make_pu_split;
    use ndarray::array;
    use std::sync::Arc;

    #[test]
    fn objective_names_round_trip() {
        for o in Objective::ALL {
            assert_eq!(o.as_str().parse::<Objective>().unwrap(), o);
        }
        assert!("pu".parse::<Objective>().is_err());
        assert_eq!("within-u".parse::<MuTargetMode>().unwrap(), MuTargetMode::WithinU);
    }

    #[test]
    fn config_validation() {
        assert!(RunConfig::default().validate().is_ok());
        let bad = [
            RunConfig { lr: 0.0, ..Default::default() },
            RunConfig { epochs: 0, ..Default::default() },
            RunConfig { batch_u: 0, ..Default::default() },
            RunConfig { hidden: vec![3, 3, 3], ..Default::default() },
            RunConfig { mu_override: Some(1.0), ..Default::default() },
        ];
        for c in bad {
            assert!(c.validate().is_err(), "{c:?}");
        }
    }

    #[test]
    fn prior_resolution_order() {
        let labels = vec![1, 1, 1, 1, 0, 0, 0, 0, 0, 0];
        let ds = LabeledDataset::new(ndarray::Array2::zeros((10, 1)), labels).unwrap();
        let split = make_pu_split(Arc::new(ds), 0.5, 0).unwrap();
        // |P| = 2, |U_p| = 2, |U| = 8
        let cpu = RunConfig::default();
        assert_eq!(cpu.resolve_prior(&split), Some(0.2));
        let within = RunConfig { mu_target_mode: MuTargetMode::WithinU, ..cpu.clone() };
        assert_eq!(within.resolve_prior(&split), Some(0.25));
        let over = RunConfig { mu_override: Some(0.3), ..within };
        assert_eq!(over.resolve_prior(&split), Some(0.3));
        let nn = RunConfig { objective: Objective::Nnpu, ..cpu.clone() };
        assert_eq!(nn.resolve_prior(&split), Some(0.25));
        let naive = RunConfig { objective: Objective::Naive, ..cpu };
        assert_eq!(naive.resolve_prior(&split), None);
    }

    #[test]
    fn separable_pair_is_learned_by_the_oracle() {
        let ds = Arc::new(LabeledDataset::new(array![[1.0, 1.0], [-1.0, -1.0]], vec![1, 0]).unwrap());
        let split = make_pu_split(ds.clone(), 0.0, 0).unwrap();
        let cfg = RunConfig {
            objective: Objective::PnOracle,
            batch_p: 1,
            batch_u: 1,
            epochs: 200,
            ..Default::default()
        };
        let (_, report) = train_model(&cfg, &split, &ds).unwrap();
        assert_eq!(report.records.len(), 200);
        assert_eq!(report.final_test_acc(), Some(1.0));
    }

    #[test]
    fn report_csv_round_trips() {
        let report = RunReport {
            objective: Objective::Nnpu,
            prior: Some(0.125),
            records: vec![
                EpochRecord { epoch: 0, train_loss: 0.5, min_batch_loss: 0.25, test_acc: 0.75, mean_eta_u: 0.1 },
                EpochRecord { epoch: 1, train_loss: 1.0 / 3.0, min_batch_loss: 0.2, test_acc: 0.8, mean_eta_u: 0.3 },
            ],
            status: RunStatus::Diverged { epoch: 2, reason: "non-finite loss NaN".into() },
            wall_clock_secs: 0.0,
        };
        let mut buf = Vec::new();
        report.write_csv(&mut buf).unwrap();
        let back = RunReport::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back, report);
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("epoch,train_loss,min_batch_loss,test_acc,mean_eta_u\n"));
    }
}
