use std::collections::{BTreeMap, HashSet};
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Instant;

use clap::Args;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{DataArgs, EvolveArgs};
use crate::dataset::{load_csv, random_split, Dataset};
use crate::ensemble::{train_ensemble, write_atomic, Combine};
use crate::error::{Error, Result};
use crate::evolution::EvolveConfig;
use crate::metrics::{competition_ranks, macro_f1, rank_scores, statistics_report, ScoreTable};

/// Held-out share when a dataset has no predefined test split.
pub const TEST_FRACTION: f64 = 0.3;
const SPLIT_ATTEMPTS: u64 = 10;
const LEDGER: &str = "ledger.jsonl";

#[derive(Debug, Clone, Args)]
pub struct BenchmarkArgs {
    /// Dataset CSVs (repeat the flag or separate with commas).
    #[arg(long, required = true, num_args = 1.., value_delimiter = ',')]
    pub data: Vec<PathBuf>,
    /// Schemes to compare, comma separated.
    #[arg(long, required = true, value_delimiter = ',')]
    pub schemes: Vec<String>,
    /// Number of seeds per (scheme, dataset) cell.
    #[arg(long, default_value_t = 10)]
    pub seeds: u64,
    /// First seed (falls back to SEMGP_SEED, then 0).
    #[arg(long, env = "SEMGP_SEED", default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = TEST_FRACTION)]
    pub test_fraction: f64,
    /// Nemenyi significance level: 0.05 or 0.10.
    #[arg(long, default_value_t = 0.10)]
    pub alpha: f64,
    #[arg(long)]
    pub out_dir: PathBuf,
    #[command(flatten)]
    pub evolve: EvolveArgs,
    #[command(flatten)]
    pub data_args: DataArgs,
}

/// One ledger line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellRecord {
    pub scheme: String,
    pub dataset: String,
    pub seed: u64,
    pub macro_f1: Option<f64>,
    pub error: Option<String>,
    pub split_seed: Option<u64>,
    pub wall_seconds: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Holdout {
    pub macro_f1: f64,
    pub split_seed: u64,
    pub n_train: usize,
    pub wall_seconds: f64,
}

/// Splits `ds` into train and test parts, trying the next seed while a class
/// is missing from the training part.
pub fn holdout_split(
    ds: &Dataset,
    test_fraction: f64,
    seed: u64,
) -> Result<(Dataset, Dataset, u64)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::Config(format!(
            "test fraction {test_fraction} outside (0, 1)"
        )));
    }
    let mut last = None;
    for attempt in 0..SPLIT_ATTEMPTS {
        let s = seed.wrapping_add(attempt);
        match random_split(ds, 1.0 - test_fraction, s) {
            Ok((train, test)) => return Ok((train, test, s)),
            Err(e) => last = Some(e),
        }
    }
    Err(last.expect("at least one attempt"))
}

/// Trains on a held-out split of `ds` and scores the test part.
pub fn holdout_score(
    ds: &Dataset,
    cfg: &EvolveConfig,
    n_models: usize,
    seed: u64,
    test_fraction: f64,
) -> Result<Holdout> {
    let (train, test, split_seed) = holdout_split(ds, test_fraction, seed)?;
    let cfg = EvolveConfig {
        seed,
        ..cfg.clone()
    };
    let start = Instant::now();
    let (em, _) = train_ensemble(&train, &cfg, n_models, seed)?;
    let wall_seconds = start.elapsed().as_secs_f64();
    let pred = em.predict_columns(&test.columns(), Combine::Mean)?;
    Ok(Holdout {
        macro_f1: macro_f1(test.labels(), &pred, ds.k())?,
        split_seed,
        n_train: train.n(),
        wall_seconds,
    })
}

fn read_ledger(path: &Path) -> Vec<CellRecord> {
    let Ok(text) = fs::read_to_string(path) else {
        return Vec::new();
    };
    text.lines()
        .filter_map(|l| serde_json::from_str(l).ok())
        .collect()
}

pub fn cmd_benchmark(a: &BenchmarkArgs) -> Result<()> {
    if a.seeds == 0 {
        return Err(Error::Config("--seeds must be positive".into()));
    }
    let mut schemes = Vec::new();
    for s in &a.schemes {
        let cfg = a.evolve.config(0).map(|mut c| {
            c.scheme = s.parse()?;
            c.scheme.tournament_size = a.evolve.tournament_size;
            c.scheme.novelty_k = a.evolve.novelty_k;
            Ok::<_, Error>(c)
        })??;
        schemes.push((cfg.scheme.to_string(), cfg));
    }
    let opts = a.data_args.load_options();
    let datasets: Vec<Dataset> = a
        .data
        .iter()
        .map(|p| load_csv(p, &opts))
        .collect::<Result<_>>()?;
    fs::create_dir_all(&a.out_dir).map_err(|e| Error::io(&a.out_dir, e))?;

    let ledger_path = a.out_dir.join(LEDGER);
    let done: HashSet<(String, String, u64)> = read_ledger(&ledger_path)
        .into_iter()
        .map(|r| (r.scheme, r.dataset, r.seed))
        .collect();
    let seeds: Vec<u64> = (0..a.seeds).map(|i| a.seed.wrapping_add(i)).collect();
    let mut todo = Vec::new();
    for ds in &datasets {
        for (name, cfg) in &schemes {
            for &seed in &seeds {
                if !done.contains(&(name.clone(), ds.name().to_string(), seed)) {
                    todo.push((ds, name, cfg, seed));
                }
            }
        }
    }
    let ledger = Mutex::new(
        OpenOptions::new()
            .create(true)
            .append(true)
            .open(&ledger_path)
            .map_err(|e| Error::io(&ledger_path, e))?,
    );
    let n_models = a.evolve.n_models();
    todo.par_iter()
        .try_for_each(|(ds, name, cfg, seed)| -> Result<()> {
            let start = Instant::now();
            let outcome = holdout_score(ds, cfg, n_models, *seed, a.test_fraction);
            let record = CellRecord {
                scheme: (*name).clone(),
                dataset: ds.name().to_string(),
                seed: *seed,
                macro_f1: outcome.as_ref().ok().map(|h| h.macro_f1),
                error: outcome.as_ref().err().map(|e| e.to_string()),
                split_seed: outcome.as_ref().ok().map(|h| h.split_seed),
                wall_seconds: start.elapsed().as_secs_f64(),
            };
            let mut line = serde_json::to_string(&record)?;
            line.push('\n');
            let mut f = ledger.lock().expect("ledger lock");
            f.write_all(line.as_bytes())
                .and_then(|_| f.flush())
                .map_err(|e| Error::io(&ledger_path, e))
        })?;

    let records = read_ledger(&ledger_path);
    let mut cell: BTreeMap<(String, String, u64), Option<f64>> = BTreeMap::new();
    for r in records {
        cell.insert((r.scheme, r.dataset, r.seed), r.macro_f1);
    }
    let names: Vec<String> = schemes.iter().map(|(n, _)| n.clone()).collect();
    let ds_names: Vec<String> = datasets.iter().map(|d| d.name().to_string()).collect();
    let get = |s: &str, d: &str, seed: u64| {
        cell.get(&(s.to_string(), d.to_string(), seed))
            .copied()
            .flatten()
    };

    let values: Vec<Vec<Option<f64>>> = names
        .iter()
        .map(|s| {
            ds_names
                .iter()
                .map(|d| {
                    let got: Vec<f64> = seeds.iter().filter_map(|&seed| get(s, d, seed)).collect();
                    (!got.is_empty()).then(|| got.iter().sum::<f64>() / got.len() as f64)
                })
                .collect()
        })
        .collect();
    let st = ScoreTable::new(names.clone(), ds_names.clone(), values)?;
    let rt = rank_scores(&st)?;

    let mut cells_csv = String::from("scheme,dataset,seed,macro_f1,rank\n");
    for d in &ds_names {
        for &seed in &seeds {
            let scores: Vec<Option<f64>> = names.iter().map(|s| get(s, d, seed)).collect();
            let present: Vec<f64> = scores.iter().flatten().copied().collect();
            let ranks = competition_ranks(&present);
            let mut it = ranks.into_iter();
            for (s, v) in names.iter().zip(&scores) {
                let (f, r) = match v {
                    Some(v) => (format!("{v:.6}"), it.next().expect("rank per score")),
                    None => (String::new(), names.len()),
                };
                cells_csv.push_str(&format!("{s},{d},{seed},{f},{r}\n"));
            }
        }
    }
    let failed = cell.values().filter(|v| v.is_none()).count();
    let mut report = format!(
        "schemes={} datasets={} seeds={} cells={} failed={failed}\n",
        names.len(),
        ds_names.len(),
        seeds.len(),
        names.len() * ds_names.len() * seeds.len()
    );
    report.push_str(&statistics_report(&rt, a.alpha));

    write_atomic(&a.out_dir.join("scores.csv"), st.to_csv().as_bytes())?;
    write_atomic(&a.out_dir.join("ranks.csv"), rt.to_csv().as_bytes())?;
    write_atomic(&a.out_dir.join("cells.csv"), cells_csv.as_bytes())?;
    write_atomic(&a.out_dir.join("report.txt"), report.as_bytes())?;
    print!("{report}");
    Ok(())
}
