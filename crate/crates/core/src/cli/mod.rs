//! Command-line interface: `train`, `predict`, `evaluate`, `benchmark` and
//! `inspect`.

mod benchmark;
mod inspect;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::dataset::{
    load_csv, parse_features, Dataset, HeaderMode, LabelColumn, LoadOptions, MissingPolicy,
};
use crate::ensemble::{train_ensemble, write_atomic, Combine, EnsembleModel};
use crate::error::{Error, Result};
use crate::evolution::{EvolveConfig, DEFAULT_EARLY_STOP, DEFAULT_POPULATION};
use crate::metrics::{accuracy, confusion_matrix, macro_f1, per_class_f1, time_per_sample};
use crate::nodes::{ColumnMode, NodeOptions};
use crate::selection::SchemeConfig;

pub use benchmark::{
    holdout_score, holdout_split, BenchmarkArgs, CellRecord, Holdout, TEST_FRACTION,
};

pub const DESK_POPULATION: usize = 500;
pub const DESK_EARLY_STOP: usize = 500;
pub const DESK_MODELS: usize = 5;
pub const PAPER_MODELS: usize = crate::ensemble::DEFAULT_MODELS;

#[derive(Debug, Parser)]
#[command(
    name = "semgp",
    version,
    about = "Semantic genetic programming classifier"
)]
pub struct Cli {
    /// Worker threads for bags and benchmark cells (default: all cores).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a bagged ensemble and write the model file.
    Train(TrainArgs),
    /// Predict class names for a feature CSV.
    Predict(PredictArgs),
    /// Score predictions against a labelled CSV.
    Evaluate(EvaluateArgs),
    /// Train and test every scheme on every dataset and rank them.
    Benchmark(BenchmarkArgs),
    /// Summarize a dataset or export a model graph.
    Inspect(InspectArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum HeaderArg {
    Auto,
    Yes,
    No,
}

impl From<HeaderArg> for HeaderMode {
    fn from(h: HeaderArg) -> Self {
        match h {
            HeaderArg::Auto => HeaderMode::Auto,
            HeaderArg::Yes => HeaderMode::Present,
            HeaderArg::No => HeaderMode::Absent,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MissingArg {
    Reject,
    Mean,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AddColumnsArg {
    PerClass,
    AllOutputs,
}

#[derive(Debug, Clone, Args)]
pub struct DataArgs {
    /// Label column: index (0-based), header name, or `last`.
    #[arg(long, default_value = "last")]
    pub label_column: String,
    #[arg(long, value_enum, default_value_t = HeaderArg::Auto)]
    pub header: HeaderArg,
    /// Handling of missing feature values.
    #[arg(long, value_enum, default_value_t = MissingArg::Reject)]
    pub missing: MissingArg,
}

impl DataArgs {
    pub fn load_options(&self) -> LoadOptions {
        LoadOptions {
            label_column: self.label_column.parse().expect("infallible"),
            header: self.header.into(),
            missing: match self.missing {
                MissingArg::Reject => MissingPolicy::Reject,
                MissingArg::Mean => MissingPolicy::MeanImpute,
            },
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct EvolveArgs {
    /// Selection scheme, e.g. agr-rnd, fit-fit, sim-fit*, ads-rnd--fit.
    #[arg(long, default_value = "agr-rnd")]
    pub scheme: String,
    /// Population size [default: 500, or 4000 with --paper-defaults].
    #[arg(long)]
    pub pop: Option<usize>,
    /// Evaluations without improvement before stopping [default: 500, or 4000].
    #[arg(long)]
    pub early_stop: Option<usize>,
    /// Bagged models [default: 5, or 30 with --paper-defaults].
    #[arg(long)]
    pub models: Option<usize>,
    /// Use population 4000, early stop 4000 and 30 models.
    #[arg(long)]
    pub paper_defaults: bool,
    #[arg(long, default_value_t = crate::selection::DEFAULT_TOURNAMENT_SIZE)]
    pub tournament_size: usize,
    #[arg(long, default_value_t = crate::selection::DEFAULT_NOVELTY_K)]
    pub novelty_k: usize,
    /// Fit transforms with slope only.
    #[arg(long)]
    pub no_intercept: bool,
    /// Use sqrt(|x|) instead of discarding negative square roots.
    #[arg(long)]
    pub protected: bool,
    #[arg(long, value_enum, default_value_t = AddColumnsArg::PerClass)]
    pub add_columns: AddColumnsArg,
}

impl EvolveArgs {
    pub fn n_models(&self) -> usize {
        self.models.unwrap_or(if self.paper_defaults {
            PAPER_MODELS
        } else {
            DESK_MODELS
        })
    }

    pub fn config(&self, seed: u64) -> Result<EvolveConfig> {
        let mut scheme: SchemeConfig = self.scheme.parse()?;
        scheme.tournament_size = self.tournament_size;
        scheme.novelty_k = self.novelty_k;
        let (pop, es) = if self.paper_defaults {
            (DEFAULT_POPULATION, DEFAULT_EARLY_STOP)
        } else {
            (DESK_POPULATION, DESK_EARLY_STOP)
        };
        let cfg = EvolveConfig {
            population_size: self.pop.unwrap_or(pop),
            early_stop: self.early_stop.unwrap_or(es),
            scheme,
            seed,
            node_options: NodeOptions {
                intercept: !self.no_intercept,
                protected: self.protected,
                add_columns: match self.add_columns {
                    AddColumnsArg::PerClass => ColumnMode::PerClass,
                    AddColumnsArg::AllOutputs => ColumnMode::AllOutputs,
                },
            },
            ..EvolveConfig::default()
        };
        cfg.validate()?;
        if self.n_models() == 0 {
            return Err(Error::Config("--models must be positive".into()));
        }
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Random seed (falls back to SEMGP_SEED, then 0).
    #[arg(long, env = "SEMGP_SEED", default_value_t = 0)]
    pub seed: u64,
    /// Also write the training report to this file.
    #[arg(long)]
    pub report: Option<PathBuf>,
    #[command(flatten)]
    pub evolve: EvolveArgs,
    #[command(flatten)]
    pub data_args: DataArgs,
}

#[derive(Debug, Clone, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Output file; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Drop this label column from the input before predicting.
    #[arg(long)]
    pub label_column: Option<String>,
    #[arg(long, value_enum, default_value_t = HeaderArg::Auto)]
    pub header: HeaderArg,
    /// Majority vote over models instead of averaging scores.
    #[arg(long)]
    pub vote: bool,
}

#[derive(Debug, Clone, Args)]
pub struct EvaluateArgs {
    /// Labelled CSV with the true classes.
    #[arg(long)]
    pub data: PathBuf,
    /// One predicted class name per line.
    #[arg(long, required_unless_present = "model")]
    pub predictions: Option<PathBuf>,
    /// Model file: supplies the class catalog, and predicts when no
    /// predictions file is given.
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub vote: bool,
    #[command(flatten)]
    pub data_args: DataArgs,
}

#[derive(Debug, Clone, Args)]
pub struct InspectArgs {
    /// Dataset CSV to summarize.
    #[arg(long, conflicts_with = "model", required_unless_present = "model")]
    pub data: Option<PathBuf>,
    /// Model file to export as a DOT graph.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Graph output file; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Export only this bag (0-based).
    #[arg(long)]
    pub bag: Option<usize>,
    #[command(flatten)]
    pub data_args: DataArgs,
}

fn error_kind(e: &Error) -> &'static str {
    match e {
        Error::Io { .. } => "io",
        Error::Csv(_) | Error::Parse { .. } => "parse",
        Error::InvalidDataset(_) | Error::MissingClass(_) | Error::Split(_) => "dataset",
        Error::LengthMismatch { .. } | Error::ColumnMismatch { .. } => "shape",
        Error::Scheme(_) => "scheme",
        Error::Config(_) => "config",
        Error::FormatVersion { .. } => "version",
        Error::ModelFormat(_) | Error::Json(_) => "model",
        Error::UnknownLabel(_) => "label",
        Error::Stats(_) => "stats",
        _ => "training",
    }
}

pub fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = e.to_string().replace('"', "'");
            eprintln!("error kind={} message=\"{msg}\"", error_kind(&e));
            ExitCode::FAILURE
        }
    }
}

pub fn run(cli: Cli) -> Result<()> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(j) = cli.jobs {
        if j == 0 {
            return Err(Error::Config("--jobs must be positive".into()));
        }
        builder = builder.num_threads(j);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    pool.install(|| match cli.command {
        Command::Train(a) => cmd_train(&a),
        Command::Predict(a) => cmd_predict(&a),
        Command::Evaluate(a) => cmd_evaluate(&a),
        Command::Benchmark(a) => benchmark::cmd_benchmark(&a),
        Command::Inspect(a) => inspect::cmd_inspect(&a),
    })
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => write_atomic(p, text.as_bytes()),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(text.as_bytes())
                .and_then(|_| stdout.flush())
                .map_err(|e| Error::io("<stdout>", e))
        }
    }
}

pub fn cmd_train(a: &TrainArgs) -> Result<()> {
    let cfg = a.evolve.config(a.seed)?;
    let ds = load_csv(&a.data, &a.data_args.load_options())?;
    let start = Instant::now();
    let (em, reports) = train_ensemble(&ds, &cfg, a.evolve.n_models(), a.seed)?;
    let wall = start.elapsed().as_secs_f64();
    em.save(&a.out)?;

    let mut report = format!(
        "dataset={} n={} m={} k={} scheme={} pop={} early_stop={} models={} seed={}\n",
        ds.name(),
        ds.n(),
        ds.m(),
        ds.k(),
        cfg.scheme,
        cfg.population_size,
        cfg.early_stop,
        em.models.len(),
        a.seed
    );
    for r in &reports {
        report.push_str(&format!(
            "bag={} seed={} val_macro_f1={:.6} evaluations={} nodes={}{}\n",
            r.index,
            r.seed,
            r.val_fitness,
            r.stats.evaluations,
            r.stats.nodes_created,
            if r.retried { " retried" } else { "" }
        ));
    }
    report.push_str(&format!(
        "wall_seconds={wall:.3} time_per_sample={:.6}\n",
        time_per_sample(wall, ds.n())?
    ));
    report.push_str(&format!("model={}\n", a.out.display()));
    if let Some(p) = &a.report {
        write_atomic(p, report.as_bytes())?;
    }
    emit(None, &report)
}

fn combine(vote: bool) -> Combine {
    if vote {
        Combine::Vote
    } else {
        Combine::Mean
    }
}

pub fn cmd_predict(a: &PredictArgs) -> Result<()> {
    let em = EnsembleModel::load(&a.model)?;
    let drop: Option<LabelColumn> = a
        .label_column
        .as_deref()
        .map(|s| s.parse().expect("infallible"));
    let rows = parse_features(&read_text(&a.data)?, a.header.into(), drop.as_ref())?;
    let mut out = String::new();
    if !rows.is_empty() {
        for l in em.predict(&rows, combine(a.vote))? {
            out.push_str(&em.class_names[l]);
            out.push('\n');
        }
    }
    emit(a.out.as_deref(), &out)
}

/// Aligns truth names and predicted names on `catalog`.
fn encode(names: &[String], catalog: &[String]) -> Result<Vec<usize>> {
    names
        .iter()
        .map(|n| {
            catalog
                .iter()
                .position(|c| c == n)
                .ok_or_else(|| Error::UnknownLabel(n.clone()))
        })
        .collect()
}

pub fn evaluation_report(truth: &[usize], pred: &[usize], catalog: &[String]) -> Result<String> {
    let k = catalog.len();
    let mut out = format!(
        "macro_f1={:.6}\naccuracy={:.6}\n",
        macro_f1(truth, pred, k)?,
        accuracy(truth, pred)?
    );
    for (name, f) in catalog.iter().zip(per_class_f1(truth, pred, k)?) {
        out.push_str(&format!("f1[{name}]={f:.6}\n"));
    }
    out.push_str("confusion (rows=true, columns=predicted)\n");
    out.push_str(&format!("true\\pred,{}\n", catalog.join(",")));
    for (name, row) in catalog.iter().zip(confusion_matrix(truth, pred, k)?) {
        let cells: Vec<String> = row.iter().map(usize::to_string).collect();
        out.push_str(&format!("{name},{}\n", cells.join(",")));
    }
    Ok(out)
}

pub fn cmd_evaluate(a: &EvaluateArgs) -> Result<()> {
    let ds: Dataset = load_csv(&a.data, &a.data_args.load_options())?;
    let em = a.model.as_ref().map(EnsembleModel::load).transpose()?;
    let truth_names: Vec<String> = ds
        .labels()
        .iter()
        .map(|&l| ds.class_names()[l].clone())
        .collect();
    let catalog: Vec<String> = em
        .as_ref()
        .map_or_else(|| ds.class_names().to_vec(), |m| m.class_names.clone());
    let pred_names: Vec<String> = match (&a.predictions, &em) {
        (Some(p), _) => read_text(p)?
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .map(String::from)
            .collect(),
        (None, Some(m)) => m
            .predict(ds.features(), combine(a.vote))?
            .into_iter()
            .map(|l| m.class_names[l].clone())
            .collect(),
        (None, None) => return Err(Error::Config("need --predictions or --model".into())),
    };
    if pred_names.len() != truth_names.len() {
        return Err(Error::LengthMismatch {
            expected: truth_names.len(),
            actual: pred_names.len(),
        });
    }
    let truth = encode(&truth_names, &catalog)?;
    let pred = encode(&pred_names, &catalog)?;
    emit(None, &evaluation_report(&truth, &pred, &catalog)?)
}
