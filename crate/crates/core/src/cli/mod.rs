//! `pu` command line: argument parsing, config-file merging and exit codes.
//!
//! Every flag can also be set in a flat TOML file passed with `--config`;
//! keys are the long flag names with `-` replaced by `_`. Flags given on the
//! command line win over the file, which wins over built-in defaults.

mod commands;

use std::ffi::OsString;
use std::fs;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use crate::error::Error;
use crate::model::Activation;
use crate::train::{MuTargetMode, Objective, RunConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_RUN_FAILURE: i32 = 1;
pub const EXIT_VERIFICATION_FAILURE: i32 = 2;
pub const EXIT_USAGE: i32 = 64;

/// Added to the base seed to draw synthetic test sets independently of
/// the training sample.
pub const TEST_SEED_OFFSET: u64 = 0x9E37_79B9_7F4A_7C15;

#[derive(Debug, Parser)]
#[command(name = "pu", version, about = "Positive-unlabeled learning experiments")]
pub struct Cli {
    /// Base seed; repetition k uses seed + k.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for independent runs (0 = all cores).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,
    /// Flat TOML file with defaults for any flag.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic two-Gaussian train/test pair as CSV.
    GenData(GenDataArgs),
    /// Train every (r, objective, repetition) cell and summarize accuracies.
    Benchmark(BenchmarkArgs),
    /// Check the closed-form reward maximiser against a grid search.
    VerifyElicitation(VerifyArgs),
    /// Retrain the collective loss under perturbed priors.
    SweepRobustness(SweepArgs),
    /// Train one model and save its checkpoint and metrics.
    Train(TrainArgs),
    /// Evaluate a checkpoint on a dataset and its PU split.
    Eval(EvalArgs),
}

#[derive(Debug, Args, Default)]
pub struct DatasetArgs {
    /// gaussians, mnist or csv.
    #[arg(long)]
    pub dataset: Option<String>,
    #[arg(long)]
    pub n_per_class: Option<usize>,
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub separation: Option<f64>,
    #[arg(long)]
    pub test_per_class: Option<usize>,
    /// Directory with the four MNIST IDX files.
    #[arg(long)]
    pub data_dir: Option<PathBuf>,
    #[arg(long)]
    pub train_file: Option<PathBuf>,
    #[arg(long)]
    pub test_file: Option<PathBuf>,
    /// Comma-separated class ids mapped to the positive label.
    #[arg(long, value_delimiter = ',')]
    pub positive_classes: Option<Vec<u32>>,
}

#[derive(Debug, Args, Default)]
pub struct RunArgs {
    #[arg(long)]
    pub mu_target_mode: Option<MuTargetMode>,
    #[arg(long, allow_hyphen_values = true)]
    pub mu_override: Option<f64>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch_p: Option<usize>,
    #[arg(long)]
    pub batch_u: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Hidden widths, e.g. `300` or `100,50`; `none` for a logistic model.
    #[arg(long)]
    pub hidden: Option<String>,
    #[arg(long)]
    pub activation: Option<Activation>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub beta1: Option<f64>,
    #[arg(long)]
    pub beta2: Option<f64>,
    #[arg(long)]
    pub eps_opt: Option<f64>,
}

#[derive(Debug, Args)]
pub struct GenDataArgs {
    #[command(flatten)]
    pub data: DatasetArgs,
}

#[derive(Debug, Args)]
pub struct BenchmarkArgs {
    #[command(flatten)]
    pub data: DatasetArgs,
    #[command(flatten)]
    pub run: RunArgs,
    /// Comma-separated labeled-to-unlabeled move fractions.
    #[arg(long, value_delimiter = ',')]
    pub r: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    pub objectives: Option<Vec<Objective>>,
    #[arg(long)]
    pub repetitions: Option<usize>,
    /// Also write gnuplot data files.
    #[arg(long)]
    pub gnuplot: bool,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(long = "mu", value_delimiter = ',')]
    pub mu_list: Option<Vec<f64>>,
    #[arg(long)]
    pub grid_step: Option<f64>,
    /// Negative control: evaluate the envelope with the prior's sign flipped.
    #[arg(long, hide = true)]
    pub corrupt_j: bool,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub data: DatasetArgs,
    #[command(flatten)]
    pub run: RunArgs,
    #[arg(long, value_delimiter = ',')]
    pub r: Option<Vec<f64>>,
    /// Comma-separated relative prior perturbations, e.g. `-0.1,-0.05,0,0.05,0.1`.
    #[arg(long, allow_hyphen_values = true)]
    pub deltas: Option<String>,
    #[arg(long)]
    pub repetitions: Option<usize>,
    #[arg(long)]
    pub gnuplot: bool,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DatasetArgs,
    #[command(flatten)]
    pub run: RunArgs,
    #[arg(long)]
    pub objective: Option<Objective>,
    #[arg(long)]
    pub r: Option<f64>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub data: DatasetArgs,
    #[arg(long)]
    pub r: Option<f64>,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
}

/// Scalar or list in the config file.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

impl<T> OneOrMany<T> {
    fn into_vec(self) -> Vec<T> {
        match self {
            OneOrMany::One(v) => vec![v],
            OneOrMany::Many(v) => v,
        }
    }
}

/// Contents of a `--config` file.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub jobs: Option<usize>,
    pub out_dir: Option<PathBuf>,

    pub dataset: Option<String>,
    pub n_per_class: Option<usize>,
    pub dim: Option<usize>,
    pub separation: Option<f64>,
    pub test_per_class: Option<usize>,
    pub data_dir: Option<PathBuf>,
    pub train_file: Option<PathBuf>,
    pub test_file: Option<PathBuf>,
    pub positive_classes: Option<OneOrMany<u32>>,

    pub objective: Option<Objective>,
    pub objectives: Option<OneOrMany<Objective>>,
    pub mu_target_mode: Option<MuTargetMode>,
    pub mu_override: Option<f64>,
    pub lr: Option<f64>,
    pub batch_p: Option<usize>,
    pub batch_u: Option<usize>,
    pub epochs: Option<usize>,
    pub hidden: Option<OneOrMany<usize>>,
    pub activation: Option<Activation>,
    pub gamma: Option<f64>,
    pub beta1: Option<f64>,
    pub beta2: Option<f64>,
    pub eps_opt: Option<f64>,

    pub r: Option<OneOrMany<f64>>,
    pub repetitions: Option<usize>,
    pub deltas: Option<Vec<f64>>,
    pub mu: Option<OneOrMany<f64>>,
    pub grid_step: Option<f64>,
    pub checkpoint: Option<PathBuf>,
    pub gnuplot: Option<bool>,
}

impl FileConfig {
    pub fn load(path: &std::path::Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::Run(Error::io(path, e)))?;
        toml::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
    }
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Run(Error),
    Verification(String),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Run(e)
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Run(_) => EXIT_RUN_FAILURE,
            CliError::Verification(_) => EXIT_VERIFICATION_FAILURE,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Run(e) => write!(f, "{e}"),
            CliError::Verification(m) => write!(f, "verification failed: {m}"),
        }
    }
}

/// Resolved dataset source.
#[derive(Debug, Clone, PartialEq)]
pub enum DatasetSpec {
    Gaussians {
        n_per_class: usize,
        dim: usize,
        separation: f64,
        test_per_class: usize,
    },
    Mnist {
        dir: PathBuf,
        positive_classes: Vec<u32>,
    },
    Csv {
        train: PathBuf,
        test: PathBuf,
        positive_classes: Vec<u32>,
    },
}

fn resolve_dataset(a: &DatasetArgs, f: &FileConfig) -> Result<DatasetSpec, CliError> {
    let kind = a.dataset.clone().or_else(|| f.dataset.clone()).unwrap_or_else(|| "gaussians".into());
    let classes = |default: &[u32]| {
        a.positive_classes
            .clone()
            .or_else(|| f.positive_classes.clone().map(OneOrMany::into_vec))
            .unwrap_or_else(|| default.to_vec())
    };
    match kind.as_str() {
        "gaussians" => Ok(DatasetSpec::Gaussians {
            n_per_class: a.n_per_class.or(f.n_per_class).unwrap_or(5000),
            dim: a.dim.or(f.dim).unwrap_or(2),
            separation: a.separation.or(f.separation).unwrap_or(4.0),
            test_per_class: a.test_per_class.or(f.test_per_class).unwrap_or(2500),
        }),
        "mnist" => Ok(DatasetSpec::Mnist {
            dir: a
                .data_dir
                .clone()
                .or_else(|| f.data_dir.clone())
                .unwrap_or_else(|| "data/mnist".into()),
            positive_classes: classes(&[0, 2, 4, 6, 8]),
        }),
        "csv" => {
            let train = a.train_file.clone().or_else(|| f.train_file.clone());
            let test = a.test_file.clone().or_else(|| f.test_file.clone());
            match (train, test) {
                (Some(train), Some(test)) => Ok(DatasetSpec::Csv {
                    train,
                    test,
                    positive_classes: classes(&[1]),
                }),
                _ => Err(CliError::Usage("--dataset csv needs --train-file and --test-file".into())),
            }
        }
        other => Err(CliError::Usage(format!(
            "unknown dataset {other:?} (expected gaussians, mnist or csv)"
        ))),
    }
}

fn parse_hidden(s: &str) -> Result<Vec<usize>, CliError> {
    let s = s.trim();
    if s.is_empty() || s == "none" {
        return Ok(Vec::new());
    }
    s.split(',')
        .map(|t| {
            t.trim()
                .parse()
                .map_err(|_| CliError::Usage(format!("bad hidden width {t:?}")))
        })
        .collect()
}

fn parse_list(s: &str) -> Result<Vec<f64>, CliError> {
    s.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| t.parse().map_err(|_| CliError::Usage(format!("bad number {t:?}"))))
        .collect()
}

fn resolve_run(
    a: &RunArgs,
    f: &FileConfig,
    objective: Objective,
    seed: u64,
) -> Result<RunConfig, CliError> {
    let d = RunConfig::default();
    let hidden = match &a.hidden {
        Some(s) => parse_hidden(s)?,
        None => f.hidden.clone().map(OneOrMany::into_vec).unwrap_or(d.hidden),
    };
    let cfg = RunConfig {
        objective,
        mu_target_mode: a.mu_target_mode.or(f.mu_target_mode).unwrap_or(d.mu_target_mode),
        mu_override: a.mu_override.or(f.mu_override),
        lr: a.lr.or(f.lr).unwrap_or(d.lr),
        batch_p: a.batch_p.or(f.batch_p).unwrap_or(d.batch_p),
        batch_u: a.batch_u.or(f.batch_u).unwrap_or(d.batch_u),
        epochs: a.epochs.or(f.epochs).unwrap_or(d.epochs),
        seed,
        hidden,
        activation: a.activation.or(f.activation).unwrap_or(d.activation),
        gamma: a.gamma.or(f.gamma).unwrap_or(d.gamma),
        beta1: a.beta1.or(f.beta1).unwrap_or(d.beta1),
        beta2: a.beta2.or(f.beta2).unwrap_or(d.beta2),
        eps_opt: a.eps_opt.or(f.eps_opt).unwrap_or(d.eps_opt),
    };
    cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(cfg)
}

fn check_r(values: &[f64]) -> Result<(), CliError> {
    if values.is_empty() {
        return Err(CliError::Usage("no r values".into()));
    }
    match values.iter().find(|r| !(0.0..1.0).contains(*r)) {
        Some(r) => Err(CliError::Usage(format!("r = {r} is outside [0, 1)"))),
        None => Ok(()),
    }
}

fn check_repetitions(n: usize) -> Result<usize, CliError> {
    if n == 0 {
        Err(CliError::Usage("repetitions must be at least 1".into()))
    } else {
        Ok(n)
    }
}

/// Parses `args` (including the program name) and runs the command,
/// returning the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let _ = env_logger::Builder::from_env(env_logger::Env::new().filter_or("PU_LOG", "warn"))
        .format_timestamp(None)
        .try_init();

    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("pu: {e}");
            e.exit_code()
        }
    }
}

fn execute(cli: Cli) -> Result<(), CliError> {
    let file = match &cli.config {
        Some(path) => FileConfig::load(path)?,
        None => FileConfig::default(),
    };
    let ctx = commands::Context {
        seed: cli.seed.or(file.seed).unwrap_or(0),
        out_dir: cli.out_dir.clone().or_else(|| file.out_dir.clone()).unwrap_or_else(|| "out".into()),
    };
    let jobs = cli.jobs.or(file.jobs).unwrap_or(0);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| CliError::Usage(format!("cannot start {jobs} worker threads: {e}")))?;

    pool.install(|| match &cli.command {
        Command::GenData(a) => {
            let data = resolve_dataset(&a.data, &file)?;
            commands::gen_data(&ctx, &data)
        }
        Command::Benchmark(a) => {
            let data = resolve_dataset(&a.data, &file)?;
            let r = a.r.clone().or_else(|| file.r.clone().map(OneOrMany::into_vec)).unwrap_or_else(|| vec![0.4]);
            check_r(&r)?;
            let objectives = a
                .objectives
                .clone()
                .or_else(|| file.objectives.clone().map(OneOrMany::into_vec))
                .unwrap_or_else(|| Objective::ALL.to_vec());
            if objectives.is_empty() {
                return Err(CliError::Usage("no objectives".into()));
            }
            let base = resolve_run(&a.run, &file, Objective::Cpu, ctx.seed)?;
            let plan = commands::BenchmarkPlan {
                data,
                r,
                objectives,
                repetitions: check_repetitions(a.repetitions.or(file.repetitions).unwrap_or(5))?,
                base,
                gnuplot: a.gnuplot || file.gnuplot.unwrap_or(false),
            };
            commands::benchmark(&ctx, &plan)
        }
        Command::VerifyElicitation(a) => {
            let mu_list = a
                .mu_list
                .clone()
                .or_else(|| file.mu.clone().map(OneOrMany::into_vec))
                .unwrap_or_else(|| vec![0.05, 0.1, 0.2, 0.4]);
            let grid_step = a
                .grid_step
                .or(file.grid_step)
                .unwrap_or(crate::elicitation::DEFAULT_GRID_STEP);
            if !(grid_step > 0.0 && grid_step <= 0.01) {
                return Err(CliError::Usage(format!("grid step {grid_step} is outside (0, 0.01]")));
            }
            if mu_list.is_empty() {
                return Err(CliError::Usage("no priors".into()));
            }
            if let Some(mu) = mu_list.iter().find(|m| !(0.0..1.0).contains(*m)) {
                return Err(CliError::Usage(format!("prior {mu} is outside [0, 1)")));
            }
            commands::verify_elicitation(&ctx, &mu_list, grid_step, a.corrupt_j)
        }
        Command::SweepRobustness(a) => {
            let data = resolve_dataset(&a.data, &file)?;
            let r = a.r.clone().or_else(|| file.r.clone().map(OneOrMany::into_vec)).unwrap_or_else(|| vec![0.4]);
            check_r(&r)?;
            let deltas = match &a.deltas {
                Some(s) => parse_list(s)?,
                None => file.deltas.clone().unwrap_or_else(|| vec![-0.1, -0.05, 0.0, 0.05, 0.1]),
            };
            if deltas.is_empty() {
                return Err(CliError::Usage("no deltas".into()));
            }
            if file.objective.is_some_and(|o| o != Objective::Cpu) {
                return Err(CliError::Usage("robustness sweeps use the cpu objective".into()));
            }
            let plan = commands::SweepPlan {
                data,
                r,
                deltas,
                repetitions: check_repetitions(a.repetitions.or(file.repetitions).unwrap_or(1))?,
                base: resolve_run(&a.run, &file, Objective::Cpu, ctx.seed)?,
                gnuplot: a.gnuplot || file.gnuplot.unwrap_or(false),
            };
            commands::sweep_robustness(&ctx, &plan)
        }
        Command::Train(a) => {
            let data = resolve_dataset(&a.data, &file)?;
            let r = train_r(a.r, &file)?;
            let objective = a.objective.or(file.objective).unwrap_or(Objective::Cpu);
            let cfg = resolve_run(&a.run, &file, objective, ctx.seed)?;
            commands::train(&ctx, &data, r, &cfg)
        }
        Command::Eval(a) => {
            let data = resolve_dataset(&a.data, &file)?;
            let r = train_r(a.r, &file)?;
            let checkpoint = a
                .checkpoint
                .clone()
                .or_else(|| file.checkpoint.clone())
                .unwrap_or_else(|| ctx.out_dir.join("model.ckpt"));
            commands::eval(&ctx, &data, r, &checkpoint)
        }
    })
}

fn train_r(cli: Option<f64>, f: &FileConfig) -> Result<f64, CliError> {
    let r = match (cli, f.r.clone().map(OneOrMany::into_vec)) {
        (Some(r), _) => r,
        (None, Some(v)) if v.len() == 1 => v[0],
        (None, Some(v)) => return Err(CliError::Usage(format!("expected one r value, got {}", v.len()))),
        (None, None) => 0.4,
    };
    check_r(&[r])?;
    Ok(r)
}
