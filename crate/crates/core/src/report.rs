//! Benchmark, robustness and elicitation tables: CSV, markdown and gnuplot.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::elicitation::SupportCheck;
use crate::error::{Error, Result};
use crate::eval::{DriftTarget, EvalReport};
use crate::train::Objective;

/// One training run of a benchmark.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkRow {
    pub dataset: String,
    pub r: f64,
    pub objective: Objective,
    pub repetition: usize,
    pub seed: u64,
    pub status: String,
    pub test_acc: Option<f64>,
    pub mean_eta_u: Option<f64>,
    pub prior: Option<f64>,
}

impl BenchmarkRow {
    fn ok(&self) -> bool {
        self.status == "completed" && self.test_acc.is_some()
    }
}

/// Mean and sample standard deviation of the completed runs of one cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub dataset: String,
    pub r: f64,
    pub objective: Objective,
    pub mean_acc: Option<f64>,
    pub std_acc: Option<f64>,
    pub n_ok: usize,
    pub n_runs: usize,
}

/// Groups rows by `(dataset, r, objective)` in first-appearance order.
pub fn summarize(rows: &[BenchmarkRow]) -> Vec<SummaryRow> {
    let mut order: Vec<(String, u64, Objective)> = Vec::new();
    let mut cells: BTreeMap<(String, u64, Objective), Vec<&BenchmarkRow>> = BTreeMap::new();
    for row in rows {
        let key = (row.dataset.clone(), row.r.to_bits(), row.objective);
        if !cells.contains_key(&key) {
            order.push(key.clone());
        }
        cells.entry(key).or_default().push(row);
    }
    order
        .into_iter()
        .map(|key| {
            let runs = &cells[&key];
            let accs: Vec<f64> = runs.iter().filter(|r| r.ok()).filter_map(|r| r.test_acc).collect();
            let (mean_acc, std_acc) = mean_std(&accs);
            SummaryRow {
                dataset: key.0,
                r: f64::from_bits(key.1),
                objective: key.2,
                mean_acc,
                std_acc,
                n_ok: accs.len(),
                n_runs: runs.len(),
            }
        })
        .collect()
}

/// Sample standard deviation (n − 1); a single value has spread 0.
pub fn mean_std(values: &[f64]) -> (Option<f64>, Option<f64>) {
    match values.len() {
        0 => (None, None),
        1 => (Some(values[0]), Some(0.0)),
        n => {
            let mean = values.iter().sum::<f64>() / n as f64;
            let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            (Some(mean), Some(var.sqrt()))
        }
    }
}

/// Rows are `dataset, r`; columns are objectives; cells `mean ± std`.
pub fn summary_markdown(summary: &[SummaryRow]) -> String {
    let mut objectives: Vec<Objective> = Vec::new();
    let mut rows: Vec<(String, f64)> = Vec::new();
    for s in summary {
        if !objectives.contains(&s.objective) {
            objectives.push(s.objective);
        }
        if !rows.iter().any(|(d, r)| d == &s.dataset && r.to_bits() == s.r.to_bits()) {
            rows.push((s.dataset.clone(), s.r));
        }
    }

    let mut out = String::from("| dataset | r |");
    for o in &objectives {
        write!(out, " {o} |").unwrap();
    }
    out.push_str("\n|---|---|");
    out.push_str(&"---|".repeat(objectives.len()));
    out.push('\n');
    for (dataset, r) in &rows {
        write!(out, "| {dataset} | {r} |").unwrap();
        for o in &objectives {
            let cell = summary
                .iter()
                .find(|s| &s.dataset == dataset && s.r.to_bits() == r.to_bits() && s.objective == *o);
            match cell {
                Some(SummaryRow {
                    mean_acc: Some(m),
                    std_acc: Some(sd),
                    ..
                }) => write!(out, " {m:.4} ± {sd:.4} |").unwrap(),
                Some(_) => out.push_str(" diverged |"),
                None => out.push_str(" |"),
            }
        }
        out.push('\n');
    }
    out
}

/// gnuplot data blocks, one per objective: `r mean std`.
pub fn summary_gnuplot(summary: &[SummaryRow]) -> String {
    let mut out = String::new();
    let mut objectives: Vec<Objective> = Vec::new();
    for s in summary {
        if !objectives.contains(&s.objective) {
            objectives.push(s.objective);
        }
    }
    for o in objectives {
        writeln!(out, "# {o}").unwrap();
        for s in summary.iter().filter(|s| s.objective == o) {
            if let (Some(m), Some(sd)) = (s.mean_acc, s.std_acc) {
                writeln!(out, "{} {m} {sd}", s.r).unwrap();
            }
        }
        out.push_str("\n\n");
    }
    out
}

/// One robustness run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustnessRow {
    pub dataset: String,
    pub r: f64,
    pub repetition: usize,
    pub delta: f64,
    pub mu_target: Option<f64>,
    pub test_acc: Option<f64>,
    pub status: String,
}

/// Wide robustness table: one row per `(dataset, r)`, one accuracy column
/// per delta (mean over repetitions).
#[derive(Debug, Clone, PartialEq)]
pub struct RobustnessTable {
    pub deltas: Vec<f64>,
    pub rows: Vec<RobustnessTableRow>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RobustnessTableRow {
    pub dataset: String,
    pub r: f64,
    pub accuracies: Vec<Option<f64>>,
}

/// Column header for a relative perturbation: `-0.1` → `-10%`.
pub fn delta_label(delta: f64) -> String {
    let pct = delta * 100.0;
    let rounded = (pct * 1e6).round() / 1e6;
    if rounded > 0.0 {
        format!("+{rounded}%")
    } else if rounded == 0.0 {
        "0%".into()
    } else {
        format!("{rounded}%")
    }
}

fn parse_delta_label(label: &str) -> Option<f64> {
    let pct: f64 = label.strip_suffix('%')?.trim_start_matches('+').parse().ok()?;
    Some(pct / 100.0)
}

impl RobustnessTable {
    pub fn from_rows(deltas: &[f64], rows: &[RobustnessRow]) -> Self {
        let mut keys: Vec<(String, f64)> = Vec::new();
        for row in rows {
            if !keys.iter().any(|(d, r)| d == &row.dataset && r.to_bits() == row.r.to_bits()) {
                keys.push((row.dataset.clone(), row.r));
            }
        }
        let table_rows = keys
            .into_iter()
            .map(|(dataset, r)| {
                let accuracies = deltas
                    .iter()
                    .map(|d| {
                        let accs: Vec<f64> = rows
                            .iter()
                            .filter(|x| {
                                x.dataset == dataset
                                    && x.r.to_bits() == r.to_bits()
                                    && x.delta.to_bits() == d.to_bits()
                                    && x.status == "completed"
                            })
                            .filter_map(|x| x.test_acc)
                            .collect();
                        mean_std(&accs).0
                    })
                    .collect();
                RobustnessTableRow { dataset, r, accuracies }
            })
            .collect();
        Self {
            deltas: deltas.to_vec(),
            rows: table_rows,
        }
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        let mut header = vec!["dataset".to_string(), "r".to_string()];
        header.extend(self.deltas.iter().map(|&d| delta_label(d)));
        wtr.write_record(&header)?;
        for row in &self.rows {
            let mut rec = vec![row.dataset.clone(), row.r.to_string()];
            rec.extend(row.accuracies.iter().map(|a| a.map(|v| v.to_string()).unwrap_or_default()));
            wtr.write_record(&rec)?;
        }
        wtr.flush().map_err(|e| Error::io("robustness table", e))
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(r);
        let header = rdr.headers()?.clone();
        if header.len() < 2 || &header[0] != "dataset" || &header[1] != "r" {
            return Err(Error::parse(0, "robustness table must start with `dataset,r`"));
        }
        let deltas = header
            .iter()
            .skip(2)
            .map(|h| parse_delta_label(h).ok_or_else(|| Error::parse(0, format!("bad delta column {h:?}"))))
            .collect::<Result<Vec<_>>>()?;
        let mut rows = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            let offset = rec.position().map_or(0, |p| p.byte());
            let num = |s: &str| -> Result<f64> { s.parse().map_err(|_| Error::parse(offset, format!("bad number {s:?}"))) };
            let accuracies = rec
                .iter()
                .skip(2)
                .map(|s| if s.is_empty() { Ok(None) } else { num(s).map(Some) })
                .collect::<Result<Vec<_>>>()?;
            rows.push(RobustnessTableRow {
                dataset: rec[0].to_string(),
                r: num(&rec[1])?,
                accuracies,
            });
        }
        Ok(Self { deltas, rows })
    }

    /// gnuplot blocks per `(dataset, r)`: `delta accuracy`.
    pub fn gnuplot(&self) -> String {
        let mut out = String::new();
        for row in &self.rows {
            writeln!(out, "# {} r={}", row.dataset, row.r).unwrap();
            for (d, a) in self.deltas.iter().zip(&row.accuracies) {
                if let Some(a) = a {
                    writeln!(out, "{d} {a}").unwrap();
                }
            }
            out.push_str("\n\n");
        }
        out
    }
}

/// One row of the elicitation verification report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElicitationRow {
    pub mu_p: f64,
    pub eta: f64,
    pub closed_form_argmax: f64,
    pub grid_argmax: f64,
    pub j: f64,
    pub grid_max: f64,
    pub gap: f64,
    pub in_region: bool,
    pub passed: bool,
}

impl From<&SupportCheck> for ElicitationRow {
    fn from(c: &SupportCheck) -> Self {
        Self {
            mu_p: c.mu_p,
            eta: c.eta,
            closed_form_argmax: c.closed_form_argmax,
            grid_argmax: c.grid_argmax,
            j: c.j,
            grid_max: c.grid_max,
            gap: c.gap,
            in_region: c.in_region,
            passed: c.passed,
        }
    }
}

/// Test accuracy plus the drift diagnostics of one evaluated checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftRow {
    pub dataset: String,
    pub r: f64,
    pub seed: u64,
    pub test_acc: f64,
    pub train_acc: f64,
    pub mean_eta_overall: f64,
    pub mean_eta_p: f64,
    pub mean_eta_u: f64,
    pub train_positive_rate: f64,
    pub true_positive_rate: f64,
    pub drift: f64,
    pub distance_to_train_rate: f64,
    pub distance_to_true_rate: f64,
    pub closer_to: DriftTarget,
    pub false_negative_rate: f64,
    pub false_positive_rate: f64,
}

impl DriftRow {
    pub fn new(dataset: &str, r: f64, seed: u64, test_acc: f64, e: &EvalReport) -> Self {
        Self {
            dataset: dataset.to_string(),
            r,
            seed,
            test_acc,
            train_acc: e.accuracy,
            mean_eta_overall: e.mean_eta_overall,
            mean_eta_p: e.mean_eta_p,
            mean_eta_u: e.mean_eta_u,
            train_positive_rate: e.train_positive_rate,
            true_positive_rate: e.true_positive_rate,
            drift: e.drift,
            distance_to_train_rate: e.distance_to_train_rate,
            distance_to_true_rate: e.distance_to_true_rate,
            closer_to: e.closer_to,
            false_negative_rate: e.false_negative_rate,
            false_positive_rate: e.false_positive_rate,
        }
    }
}

/// Serializes rows with a header.
pub fn write_rows<T: Serialize, W: Write>(rows: &[T], w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    for row in rows {
        wtr.serialize(row)?;
    }
    wtr.flush().map_err(|e| Error::io("csv output", e))
}

pub fn read_rows<T: DeserializeOwned, R: Read>(r: R) -> Result<Vec<T>> {
    let mut rdr = csv::Reader::from_reader(r);
    rdr.deserialize().map(|row| row.map_err(Error::from)).collect()
}

pub fn write_rows_file<T: Serialize>(rows: &[T], path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_rows(rows, BufWriter::new(file))
}

pub fn read_rows_file<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    read_rows(File::open(path).map_err(|e| Error::io(path, e))?)
}
