use std::collections::BTreeSet;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;

use super::{CliError, DatasetSpec, TEST_SEED_OFFSET};
use crate::data::{gen_two_gaussians, load_dataset, make_pu_split, write_delimited, DatasetFile, LabeledDataset};
use crate::elicitation::{check_support, max_reward_j};
use crate::error::Error;
use crate::eval::{accuracy, drift_report, robustness_sweep};
use crate::model::PredictorParams;
use crate::report::{
    self, summarize, summary_gnuplot, summary_markdown, BenchmarkRow, DriftRow, ElicitationRow,
    RobustnessRow, RobustnessTable,
};
use crate::train::{train_model, Objective, RunConfig, RunStatus};

pub struct Context {
    pub seed: u64,
    pub out_dir: PathBuf,
}

impl Context {
    fn prepare_out_dir(&self) -> Result<&Path, CliError> {
        fs::create_dir_all(&self.out_dir).map_err(|e| Error::io(&self.out_dir, e))?;
        Ok(&self.out_dir)
    }
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| CliError::Run(Error::io(path, e)))
}

pub struct Loaded {
    pub name: String,
    pub train: Arc<LabeledDataset>,
    pub test: LabeledDataset,
}

pub fn load(spec: &DatasetSpec, seed: u64) -> Result<Loaded, CliError> {
    let (name, train, test) = match spec {
        DatasetSpec::Gaussians {
            n_per_class,
            dim,
            separation,
            test_per_class,
        } => (
            "gaussians".to_string(),
            gen_two_gaussians(*n_per_class, *dim, *separation, seed)
                .map_err(|e| CliError::Usage(e.to_string()))?,
            gen_two_gaussians(*test_per_class, *dim, *separation, seed.wrapping_add(TEST_SEED_OFFSET))
                .map_err(|e| CliError::Usage(e.to_string()))?,
        ),
        DatasetSpec::Mnist { dir, positive_classes } => {
            let classes: BTreeSet<u32> = positive_classes.iter().copied().collect();
            let pair = |prefix: &str| DatasetFile::IdxPair {
                images: dir.join(format!("{prefix}-images-idx3-ubyte")),
                labels: dir.join(format!("{prefix}-labels-idx1-ubyte")),
            };
            (
                "mnist".to_string(),
                load_dataset(&pair("train"), &classes)?,
                load_dataset(&pair("t10k"), &classes)?,
            )
        }
        DatasetSpec::Csv {
            train,
            test,
            positive_classes,
        } => {
            let classes: BTreeSet<u32> = positive_classes.iter().copied().collect();
            let name = train
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "csv".into());
            (
                name,
                load_dataset(&DatasetFile::Delimited(train.clone()), &classes)?,
                load_dataset(&DatasetFile::Delimited(test.clone()), &classes)?,
            )
        }
    };
    log::info!(
        "{name}: {} training rows ({} positive), {} test rows",
        train.n_rows(),
        train.n_positive(),
        test.n_rows()
    );
    Ok(Loaded {
        name,
        train: Arc::new(train),
        test,
    })
}

pub fn gen_data(ctx: &Context, spec: &DatasetSpec) -> Result<(), CliError> {
    if !matches!(spec, DatasetSpec::Gaussians { .. }) {
        return Err(CliError::Usage("gen-data only generates the gaussians dataset".into()));
    }
    let data = load(spec, ctx.seed)?;
    let out = ctx.prepare_out_dir()?;
    write_delimited(&out.join("train.csv"), &data.train)?;
    write_delimited(&out.join("test.csv"), &data.test)?;
    println!("wrote {} and {}", out.join("train.csv").display(), out.join("test.csv").display());
    Ok(())
}

pub struct BenchmarkPlan {
    pub data: DatasetSpec,
    pub r: Vec<f64>,
    pub objectives: Vec<Objective>,
    pub repetitions: usize,
    pub base: RunConfig,
    pub gnuplot: bool,
}

/// Runs every `(r, objective, repetition)` cell; repetition `k` uses seed
/// `base + k` for both the PU split and training.
pub fn run_benchmark(plan: &BenchmarkPlan, data: &Loaded, base_seed: u64) -> Result<Vec<BenchmarkRow>, Error> {
    let mut cells = Vec::new();
    for &r in &plan.r {
        for &objective in &plan.objectives {
            for rep in 0..plan.repetitions {
                cells.push((r, objective, rep));
            }
        }
    }
    cells
        .par_iter()
        .map(|&(r, objective, rep)| {
            let seed = base_seed.wrapping_add(rep as u64);
            let split = make_pu_split(Arc::clone(&data.train), r, seed)?;
            let cfg = RunConfig {
                objective,
                seed,
                ..plan.base.clone()
            };
            let (_, report) = train_model(&cfg, &split, &data.test)?;
            log::info!(
                "{} r={r} {objective} rep {rep}: {} acc {:?}",
                data.name,
                report.status.label(),
                report.final_test_acc()
            );
            let last = report.final_record();
            Ok(BenchmarkRow {
                dataset: data.name.clone(),
                r,
                objective,
                repetition: rep,
                seed,
                status: report.status.label().to_string(),
                test_acc: last.map(|l| l.test_acc),
                mean_eta_u: last.map(|l| l.mean_eta_u),
                prior: report.prior,
            })
        })
        .collect()
}

pub fn benchmark(ctx: &Context, plan: &BenchmarkPlan) -> Result<(), CliError> {
    let data = load(&plan.data, ctx.seed)?;
    let rows = run_benchmark(plan, &data, ctx.seed)?;
    let summary = summarize(&rows);

    let out = ctx.prepare_out_dir()?;
    report::write_rows_file(&rows, &out.join("benchmark.csv"))?;
    report::write_rows_file(&summary, &out.join("summary.csv"))?;
    let md = summary_markdown(&summary);
    write_text(&out.join("summary.md"), &md)?;
    if plan.gnuplot {
        write_text(&out.join("benchmark.dat"), &summary_gnuplot(&summary))?;
    }
    print!("{md}");

    let dead: Vec<String> = summary
        .iter()
        .filter(|s| s.n_ok == 0)
        .map(|s| format!("{} r={} {}", s.dataset, s.r, s.objective))
        .collect();
    if dead.is_empty() {
        Ok(())
    } else {
        Err(CliError::Run(Error::Diverged(format!(
            "every repetition failed for: {}",
            dead.join("; ")
        ))))
    }
}

pub fn verify_elicitation(ctx: &Context, mu_list: &[f64], grid_step: f64, corrupt_j: bool) -> Result<(), CliError> {
    let rows: Vec<ElicitationRow> = mu_list
        .par_iter()
        .flat_map_iter(|&mu| {
            let checks = if corrupt_j {
                check_support(mu, grid_step, |eta, mu| max_reward_j(eta, -mu))
            } else {
                check_support(mu, grid_step, max_reward_j)
            };
            checks.into_iter().map(|c| ElicitationRow::from(&c)).collect::<Vec<_>>()
        })
        .collect();

    let out = ctx.prepare_out_dir()?;
    report::write_rows_file(&rows, &out.join("elicitation.csv"))?;

    let failed: Vec<&ElicitationRow> = rows.iter().filter(|r| !r.passed).collect();
    let certified = rows.iter().filter(|r| r.in_region).count();
    if failed.is_empty() {
        println!("{certified} certified (mu_p, eta) points passed");
        return Ok(());
    }
    for r in &failed {
        eprintln!(
            "mu_p={} eta={}: grid max {} at {}, J {} (gap {}), expected argmax {}",
            r.mu_p,
            r.eta,
            r.grid_max,
            r.grid_argmax,
            r.j,
            r.gap,
            r.eta * (1.0 + r.mu_p)
        );
    }
    Err(CliError::Verification(format!(
        "{} of {certified} certified points failed",
        failed.len()
    )))
}

pub struct SweepPlan {
    pub data: DatasetSpec,
    pub r: Vec<f64>,
    pub deltas: Vec<f64>,
    pub repetitions: usize,
    pub base: RunConfig,
    pub gnuplot: bool,
}

pub fn sweep_robustness(ctx: &Context, plan: &SweepPlan) -> Result<(), CliError> {
    let data = load(&plan.data, ctx.seed)?;
    let mut rows = Vec::new();
    for &r in &plan.r {
        for rep in 0..plan.repetitions {
            let seed = ctx.seed.wrapping_add(rep as u64);
            let split = make_pu_split(Arc::clone(&data.train), r, seed)?;
            let cfg = RunConfig {
                seed,
                ..plan.base.clone()
            };
            for s in robustness_sweep(&cfg, &split, &data.test, &plan.deltas)? {
                rows.push(RobustnessRow {
                    dataset: data.name.clone(),
                    r,
                    repetition: rep,
                    delta: s.delta,
                    mu_target: s.mu_target,
                    test_acc: s.accuracy,
                    status: s.status,
                });
            }
        }
    }
    let table = RobustnessTable::from_rows(&plan.deltas, &rows);

    let out = ctx.prepare_out_dir()?;
    report::write_rows_file(&rows, &out.join("robustness_long.csv"))?;
    let path = out.join("robustness.csv");
    let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
    table.write_csv(BufWriter::new(file))?;
    if plan.gnuplot {
        write_text(&out.join("robustness.dat"), &table.gnuplot())?;
    }
    println!("wrote {}", path.display());

    if rows.iter().all(|r| r.status == "diverged") {
        return Err(CliError::Run(Error::Diverged("every sweep run diverged".into())));
    }
    Ok(())
}

pub fn train(ctx: &Context, spec: &DatasetSpec, r: f64, cfg: &RunConfig) -> Result<(), CliError> {
    let data = load(spec, ctx.seed)?;
    let split = make_pu_split(Arc::clone(&data.train), r, cfg.seed)?;
    let (params, report) = train_model(cfg, &split, &data.test)?;

    let out = ctx.prepare_out_dir()?;
    let run_path = out.join("run.csv");
    let file = File::create(&run_path).map_err(|e| Error::io(&run_path, e))?;
    report.write_csv(BufWriter::new(file))?;
    let ckpt = out.join("model.ckpt");
    let file = File::create(&ckpt).map_err(|e| Error::io(&ckpt, e))?;
    params
        .write_checkpoint(BufWriter::new(file))
        .map_err(|e| Error::io(&ckpt, e))?;

    if let RunStatus::Diverged { epoch, reason } = &report.status {
        return Err(CliError::Run(Error::Diverged(format!("epoch {epoch}: {reason}"))));
    }
    let drift = drift_report(&params, &split)?;
    let test_acc = report.final_test_acc().unwrap_or(f64::NAN);
    report::write_rows_file(
        &[DriftRow::new(&data.name, r, cfg.seed, test_acc, &drift)],
        &out.join("drift.csv"),
    )?;
    println!("{} test accuracy {test_acc:.4}", cfg.objective);
    Ok(())
}

pub fn eval(ctx: &Context, spec: &DatasetSpec, r: f64, checkpoint: &Path) -> Result<(), CliError> {
    let file = File::open(checkpoint).map_err(|e| Error::io(checkpoint, e))?;
    let params = PredictorParams::read_checkpoint(BufReader::new(file))?;
    let data = load(spec, ctx.seed)?;
    let split = make_pu_split(Arc::clone(&data.train), r, ctx.seed)?;
    let test_acc = accuracy(&params, &data.test)?;
    let drift = drift_report(&params, &split)?;

    let out = ctx.prepare_out_dir()?;
    report::write_rows_file(
        &[DriftRow::new(&data.name, r, ctx.seed, test_acc, &drift)],
        &out.join("eval.csv"),
    )?;
    println!("test accuracy {test_acc:.4}");
    Ok(())
}
