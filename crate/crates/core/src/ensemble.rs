//! Bagged ensembles of evolved models and their file format.

use std::fs;
use std::io::Write;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{split_indices, Dataset};
use crate::error::{Error, Result};
use crate::evolution::{evolve_with_split, to_columns, EvolveConfig, Model, RunStats};
use crate::semantics::Semantics;

pub const FORMAT_VERSION: u32 = 1;
pub const DEFAULT_MODELS: usize = 30;
/// Seed offset for the single retry of a failed bag.
const RETRY_OFFSET: u64 = 1_000_003;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Combine {
    /// Mean of the class scores.
    #[default]
    Mean,
    /// Majority of the per-model labels, ties to the lowest class.
    Vote,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleModel {
    pub models: Vec<Model>,
    pub class_names: Vec<String>,
    pub m: usize,
    pub scheme: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BagReport {
    pub index: usize,
    pub seed: u64,
    pub val_fitness: f64,
    pub stats: RunStats,
    pub retried: bool,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format_version: u32,
    scheme: String,
    class_names: Vec<String>,
    m: usize,
    models: Vec<Model>,
}

fn bag(ds: &Dataset, cfg: &EvolveConfig, seed: u64) -> Result<(Model, RunStats)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (a, b) = split_indices(ds.n(), ds.n() / 2, &mut rng);
    let train = ds.subset(&a);
    let val = ds.subset(&b);
    let cfg = EvolveConfig {
        seed,
        ..cfg.clone()
    };
    evolve_with_split(&train, &val, &cfg)
}

/// Bag index, seed used, result, and whether the bag was retried.
type BagOutcome = (usize, u64, Result<(Model, RunStats)>, bool);

/// Trains `n_models` bags in parallel; bag `b` (from 1) uses seed `seed + b`.
pub fn train_ensemble(
    ds: &Dataset,
    cfg: &EvolveConfig,
    n_models: usize,
    seed: u64,
) -> Result<(EnsembleModel, Vec<BagReport>)> {
    if n_models == 0 {
        return Err(Error::Config("ensemble needs at least one model".into()));
    }
    cfg.validate()?;
    ds.require_all_classes()?;
    if ds.n() < 4 {
        return Err(Error::InvalidDataset(
            "bagging needs at least 4 rows".into(),
        ));
    }
    let results: Vec<BagOutcome> = (1..=n_models)
        .into_par_iter()
        .map(|b| {
            let s = seed.wrapping_add(b as u64);
            match bag(ds, cfg, s) {
                Ok(r) => (b, s, Ok(r), false),
                Err(_) => {
                    let s2 = s.wrapping_add(RETRY_OFFSET);
                    (b, s2, bag(ds, cfg, s2), true)
                }
            }
        })
        .collect();
    let allowed = (n_models / 5).max(1);
    let failed = results.iter().filter(|r| r.2.is_err()).count();
    if failed > allowed || failed == n_models {
        let first = results
            .into_iter()
            .find_map(|r| r.2.err())
            .expect("at least one failure");
        return Err(Error::Training(format!(
            "{failed} of {n_models} bags failed after retry; first error: {first}"
        )));
    }
    let mut models = Vec::with_capacity(n_models);
    let mut reports = Vec::with_capacity(n_models);
    for (index, seed, res, retried) in results {
        if let Ok((model, stats)) = res {
            reports.push(BagReport {
                index,
                seed,
                val_fitness: model.val_fitness,
                stats,
                retried,
            });
            models.push(model);
        }
    }
    Ok((
        EnsembleModel {
            models,
            class_names: ds.class_names().to_vec(),
            m: ds.m(),
            scheme: cfg.scheme.to_string(),
        },
        reports,
    ))
}

impl EnsembleModel {
    pub fn k(&self) -> usize {
        self.class_names.len()
    }

    pub fn val_fitness(&self) -> Vec<f64> {
        self.models.iter().map(|m| m.val_fitness).collect()
    }

    pub fn seeds(&self) -> Vec<u64> {
        self.models.iter().map(|m| m.seed).collect()
    }

    /// Mean class scores over models for column-major features.
    pub fn decision_columns(&self, columns: &[Vec<f64>]) -> Result<Semantics> {
        let n = columns.first().map_or(0, Vec::len);
        let mut acc = vec![vec![0.0; n]; self.k()];
        for model in &self.models {
            let s = model.decision_columns(columns)?;
            for (a, v) in acc.iter_mut().zip(s.scores()) {
                for (x, y) in a.iter_mut().zip(v) {
                    *x += y;
                }
            }
        }
        let count = self.models.len() as f64;
        for v in acc.iter_mut().flatten() {
            *v /= count;
        }
        Semantics::from_raw(acc)
    }

    /// Class labels under `combine`.
    pub fn predict_columns(&self, columns: &[Vec<f64>], combine: Combine) -> Result<Vec<usize>> {
        if columns.len() != self.m {
            return Err(Error::ColumnMismatch {
                expected: self.m,
                actual: columns.len(),
            });
        }
        match combine {
            Combine::Mean => Ok(self.decision_columns(columns)?.argmax()),
            Combine::Vote => {
                let n = columns.first().map_or(0, Vec::len);
                let mut votes = vec![vec![0usize; self.k()]; n];
                for model in &self.models {
                    for (i, l) in model
                        .decision_columns(columns)?
                        .argmax()
                        .into_iter()
                        .enumerate()
                    {
                        votes[i][l] += 1;
                    }
                }
                Ok(votes
                    .iter()
                    .map(|v| {
                        let mut best = 0;
                        for c in 1..v.len() {
                            if v[c] > v[best] {
                                best = c;
                            }
                        }
                        best
                    })
                    .collect())
            }
        }
    }

    pub fn predict(&self, rows: &[Vec<f64>], combine: Combine) -> Result<Vec<usize>> {
        self.predict_columns(&to_columns(rows, self.m)?, combine)
    }

    pub fn to_json(&self) -> Result<String> {
        let file = ModelFile {
            format_version: FORMAT_VERSION,
            scheme: self.scheme.clone(),
            class_names: self.class_names.clone(),
            m: self.m,
            models: self.models.clone(),
        };
        let mut s = serde_json::to_string_pretty(&file)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text)?;
        let version = value
            .get("format_version")
            .and_then(serde_json::Value::as_u64)
            .ok_or_else(|| Error::ModelFormat("missing format_version".into()))?;
        if version != u64::from(FORMAT_VERSION) {
            return Err(Error::FormatVersion {
                found: u32::try_from(version).unwrap_or(u32::MAX),
                expected: FORMAT_VERSION,
            });
        }
        let file: ModelFile = serde_json::from_value(value)?;
        if file.models.is_empty() {
            return Err(Error::ModelFormat("no models".into()));
        }
        if file.class_names.len() < 2 {
            return Err(Error::ModelFormat("fewer than two classes".into()));
        }
        let mut models = file.models;
        for model in &mut models {
            model.class_names = file.class_names.clone();
            model.m = file.m;
            model.validate()?;
            check_output_width(model)?;
        }
        Ok(Self {
            models,
            class_names: file.class_names,
            m: file.m,
            scheme: file.scheme,
        })
    }

    /// Writes through a temporary file and renames it into place.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_atomic(path.as_ref(), self.to_json()?.as_bytes())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

fn check_output_width(model: &Model) -> Result<()> {
    use crate::nodes::Params;
    let k = model.k();
    for node in &model.nodes {
        let width = match &node.params {
            Params::Terminal { coef, .. } => coef.len(),
            Params::Linear { coef, .. } => coef.len(),
            Params::Affine { coef, .. } => coef.len(),
            Params::Classifier(_) => k,
        };
        if width != k {
            return Err(Error::ModelFormat(format!(
                "node {} has {width} outputs for {k} classes",
                node.id
            )));
        }
    }
    Ok(())
}

pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    let name = path
        .file_name()
        .ok_or_else(|| Error::Config(format!("not a file path: {}", path.display())))?;
    let tmp = dir.join(format!(
        ".{}.tmp{}",
        name.to_string_lossy(),
        std::process::id()
    ));
    let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    f.write_all(bytes).map_err(|e| Error::io(&tmp, e))?;
    f.sync_all().map_err(|e| Error::io(&tmp, e))?;
    drop(f);
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}
