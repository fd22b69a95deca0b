//! Classification datasets: CSV loading, random splits, class-balance
//! entropy and one-vs-rest target construction.

use std::collections::HashMap;
use std::fs::File;
use std::io::Read;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Feature matrix with categorical labels.
///
/// `labels[i]` indexes `class_names`. Parts produced by [`random_split`] keep
/// the full class catalog, so a held-out part may not contain every class;
/// use [`Dataset::require_all_classes`] where a fit needs each class.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Vec<Vec<f64>>,
    labels: Vec<usize>,
    class_names: Vec<String>,
    name: String,
}

impl Dataset {
    pub fn new(
        features: Vec<Vec<f64>>,
        labels: Vec<usize>,
        class_names: Vec<String>,
        name: impl Into<String>,
    ) -> Result<Self> {
        if features.len() != labels.len() {
            return Err(Error::LengthMismatch {
                expected: features.len(),
                actual: labels.len(),
            });
        }
        if class_names.len() < 2 {
            return Err(Error::InvalidDataset(format!(
                "need at least 2 classes, found {}",
                class_names.len()
            )));
        }
        let m = features.first().map_or(0, Vec::len);
        for (i, row) in features.iter().enumerate() {
            if row.len() != m {
                return Err(Error::InvalidDataset(format!(
                    "row {i} has {} features, expected {m}",
                    row.len()
                )));
            }
            if let Some(j) = row.iter().position(|v| !v.is_finite()) {
                return Err(Error::InvalidDataset(format!(
                    "non-finite feature at row {i}, column {j}"
                )));
            }
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= class_names.len()) {
            return Err(Error::InvalidDataset(format!(
                "label index {bad} outside catalog of {} classes",
                class_names.len()
            )));
        }
        Ok(Self {
            features,
            labels,
            class_names,
            name: name.into(),
        })
    }

    /// Builds a dataset from string labels, mapping them to dense indices in
    /// first-appearance order.
    pub fn from_string_labels(
        features: Vec<Vec<f64>>,
        labels: &[impl AsRef<str>],
        name: impl Into<String>,
    ) -> Result<Self> {
        let mut catalog: Vec<String> = Vec::new();
        let mut index: HashMap<String, usize> = HashMap::new();
        let dense = labels
            .iter()
            .map(|l| {
                let l = l.as_ref();
                *index.entry(l.to_string()).or_insert_with(|| {
                    catalog.push(l.to_string());
                    catalog.len() - 1
                })
            })
            .collect();
        let ds = Self::new(features, dense, catalog, name)?;
        if ds.is_empty() || ds.m() == 0 {
            return Err(Error::InvalidDataset(
                "dataset needs at least 1 row and 1 feature".into(),
            ));
        }
        Ok(ds)
    }

    pub fn n(&self) -> usize {
        self.labels.len()
    }

    pub fn len(&self) -> usize {
        self.n()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn m(&self) -> usize {
        self.features.first().map_or(0, Vec::len)
    }

    pub fn k(&self) -> usize {
        self.class_names.len()
    }

    pub fn features(&self) -> &[Vec<f64>] {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// Column-major copy of the features.
    pub fn columns(&self) -> Vec<Vec<f64>> {
        (0..self.m())
            .map(|j| self.features.iter().map(|r| r[j]).collect())
            .collect()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.k()];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    pub fn require_all_classes(&self) -> Result<()> {
        match self.class_counts().iter().position(|&c| c == 0) {
            Some(c) => Err(Error::MissingClass(self.class_names[c].clone())),
            None => Ok(()),
        }
    }

    /// Rows selected by `indices`, in the given order, with the same catalog.
    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            features: indices.iter().map(|&i| self.features[i].clone()).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            class_names: self.class_names.clone(),
            name: self.name.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum LabelColumn {
    #[default]
    Last,
    Index(usize),
    Name(String),
}

impl std::str::FromStr for LabelColumn {
    type Err = std::convert::Infallible;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Ok(match s.parse::<usize>() {
            Ok(i) => LabelColumn::Index(i),
            Err(_) if s == "last" => LabelColumn::Last,
            Err(_) => LabelColumn::Name(s.to_string()),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum HeaderMode {
    /// Header present when the first row has a non-numeric feature cell.
    #[default]
    Auto,
    Present,
    Absent,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MissingPolicy {
    #[default]
    Reject,
    MeanImpute,
}

#[derive(Debug, Clone, Default)]
pub struct LoadOptions {
    pub label_column: LabelColumn,
    pub header: HeaderMode,
    pub missing: MissingPolicy,
}

const MISSING_TOKENS: &[&str] = &["", "?", "na", "n/a", "nan", "null", "none"];

enum Cell {
    Value(f64),
    Missing,
    Invalid,
}

fn parse_cell(raw: &str) -> Cell {
    let s = raw.trim();
    if MISSING_TOKENS.contains(&s.to_ascii_lowercase().as_str()) {
        return Cell::Missing;
    }
    match s.parse::<f64>() {
        Ok(v) if v.is_finite() => Cell::Value(v),
        Ok(_) => Cell::Missing,
        Err(_) => Cell::Invalid,
    }
}

pub fn load_csv(path: impl AsRef<Path>, opts: &LoadOptions) -> Result<Dataset> {
    let path = path.as_ref();
    let mut text = String::new();
    File::open(path)
        .and_then(|mut f| f.read_to_string(&mut text))
        .map_err(|e| Error::io(path, e))?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    parse_csv(&text, &name, opts)
}

/// Parses CSV text. Row numbers in errors are 1-based file lines; column
/// numbers are 1-based.
pub fn parse_csv(text: &str, name: &str, opts: &LoadOptions) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut records = Vec::new();
    for rec in reader.records() {
        let rec = rec?;
        if rec.iter().all(|c| c.is_empty()) {
            continue;
        }
        let line = rec
            .position()
            .map_or(records.len() + 1, |p| p.line() as usize);
        records.push((line, rec));
    }
    if records.is_empty() {
        return Err(Error::InvalidDataset("empty CSV".into()));
    }
    let width = records[0].1.len();
    if width < 2 {
        return Err(Error::InvalidDataset(
            "need at least one feature column and one label column".into(),
        ));
    }

    let has_header = match opts.header {
        HeaderMode::Present => true,
        HeaderMode::Absent => false,
        HeaderMode::Auto => {
            let first = &records[0].1;
            let label_guess = match &opts.label_column {
                LabelColumn::Last => width - 1,
                LabelColumn::Index(i) => *i,
                LabelColumn::Name(_) => usize::MAX,
            };
            matches!(opts.label_column, LabelColumn::Name(_))
                || first
                    .iter()
                    .enumerate()
                    .any(|(j, c)| j != label_guess && matches!(parse_cell(c), Cell::Invalid))
        }
    };

    let label_idx = match &opts.label_column {
        LabelColumn::Last => width - 1,
        LabelColumn::Index(i) if *i < width => *i,
        LabelColumn::Index(i) => {
            return Err(Error::InvalidDataset(format!(
                "label column {i} out of range for {width} columns"
            )))
        }
        LabelColumn::Name(n) => {
            if !has_header {
                return Err(Error::InvalidDataset(format!(
                    "label column `{n}` named but the file has no header"
                )));
            }
            records[0]
                .1
                .iter()
                .position(|c| c == n)
                .ok_or_else(|| Error::InvalidDataset(format!("no column named `{n}`")))?
        }
    };

    let body = if has_header {
        &records[1..]
    } else {
        &records[..]
    };
    let mut features: Vec<Vec<f64>> = Vec::with_capacity(body.len());
    let mut missing: Vec<(usize, usize)> = Vec::new();
    let mut labels: Vec<String> = Vec::with_capacity(body.len());
    for (line, rec) in body {
        if rec.len() != width {
            return Err(Error::Parse {
                row: *line,
                column: rec.len().min(width) + 1,
                message: format!("expected {width} fields, found {}", rec.len()),
            });
        }
        let mut row = Vec::with_capacity(width - 1);
        for (j, cell) in rec.iter().enumerate() {
            if j == label_idx {
                if cell.is_empty() {
                    return Err(Error::Parse {
                        row: *line,
                        column: j + 1,
                        message: "empty label".into(),
                    });
                }
                labels.push(cell.to_string());
                continue;
            }
            match parse_cell(cell) {
                Cell::Value(v) => row.push(v),
                Cell::Missing => match opts.missing {
                    MissingPolicy::Reject => {
                        return Err(Error::Parse {
                            row: *line,
                            column: j + 1,
                            message: format!("missing or non-finite value `{cell}`"),
                        })
                    }
                    MissingPolicy::MeanImpute => {
                        missing.push((features.len(), row.len()));
                        row.push(f64::NAN);
                    }
                },
                Cell::Invalid => {
                    return Err(Error::Parse {
                        row: *line,
                        column: j + 1,
                        message: format!("non-numeric value `{cell}`"),
                    })
                }
            }
        }
        features.push(row);
    }
    if features.is_empty() {
        return Err(Error::InvalidDataset("no data rows".into()));
    }
    if !missing.is_empty() {
        impute_means(&mut features, &missing)?;
    }
    let ds = Dataset::from_string_labels(features, &labels, name)?;
    Ok(ds)
}

/// Feature rows without labels, for prediction. `drop` removes a label
/// column when the file still has one. Empty input yields no rows.
pub fn parse_features(
    text: &str,
    header: HeaderMode,
    drop: Option<&LabelColumn>,
) -> Result<Vec<Vec<f64>>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut records = Vec::new();
    for rec in reader.records() {
        let rec = rec?;
        if rec.iter().all(|c| c.is_empty()) {
            continue;
        }
        let line = rec
            .position()
            .map_or(records.len() + 1, |p| p.line() as usize);
        records.push((line, rec));
    }
    let Some((_, first)) = records.first() else {
        return Ok(Vec::new());
    };
    let width = first.len();
    let has_header = match header {
        HeaderMode::Present => true,
        HeaderMode::Absent => false,
        HeaderMode::Auto => {
            matches!(drop, Some(LabelColumn::Name(_)))
                || first.iter().enumerate().any(|(j, c)| {
                    let is_label = match drop {
                        Some(LabelColumn::Last) => j + 1 == width,
                        Some(LabelColumn::Index(i)) => j == *i,
                        _ => false,
                    };
                    !is_label && matches!(parse_cell(c), Cell::Invalid)
                })
        }
    };
    let skip = match drop {
        None => None,
        Some(LabelColumn::Last) => Some(width - 1),
        Some(LabelColumn::Index(i)) if *i < width => Some(*i),
        Some(LabelColumn::Index(i)) => {
            return Err(Error::InvalidDataset(format!(
                "label column {i} out of range for {width} columns"
            )))
        }
        Some(LabelColumn::Name(n)) => Some(
            first
                .iter()
                .position(|c| c == n)
                .ok_or_else(|| Error::InvalidDataset(format!("no column named `{n}`")))?,
        ),
    };
    let body = if has_header {
        &records[1..]
    } else {
        &records[..]
    };
    let mut rows = Vec::with_capacity(body.len());
    for (line, rec) in body {
        if rec.len() != width {
            return Err(Error::Parse {
                row: *line,
                column: rec.len().min(width) + 1,
                message: format!("expected {width} fields, found {}", rec.len()),
            });
        }
        let mut row = Vec::with_capacity(width);
        for (j, cell) in rec.iter().enumerate() {
            if Some(j) == skip {
                continue;
            }
            match parse_cell(cell) {
                Cell::Value(v) => row.push(v),
                _ => {
                    return Err(Error::Parse {
                        row: *line,
                        column: j + 1,
                        message: format!("invalid feature value `{cell}`"),
                    })
                }
            }
        }
        rows.push(row);
    }
    Ok(rows)
}

fn impute_means(features: &mut [Vec<f64>], missing: &[(usize, usize)]) -> Result<()> {
    let m = features[0].len();
    for j in 0..m {
        let (sum, count) = features
            .iter()
            .map(|r| r[j])
            .filter(|v| v.is_finite())
            .fold((0.0, 0usize), |(s, c), v| (s + v, c + 1));
        if count == 0 && missing.iter().any(|&(_, c)| c == j) {
            return Err(Error::InvalidDataset(format!(
                "column {} has no observed values to impute from",
                j + 1
            )));
        }
        let mean = if count > 0 { sum / count as f64 } else { 0.0 };
        for &(i, c) in missing.iter().filter(|&&(_, c)| c == j) {
            features[i][c] = mean;
        }
    }
    Ok(())
}

/// Uniform random permutation of `0..n` split into the first `n_first`
/// indices and the rest; both parts sorted ascending.
pub fn split_indices(n: usize, n_first: usize, rng: &mut ChaCha8Rng) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    let mut first = idx[..n_first].to_vec();
    let mut second = idx[n_first..].to_vec();
    first.sort_unstable();
    second.sort_unstable();
    (first, second)
}

/// Unstratified random split. The first part holds `round(fraction * n)`
/// rows and must contain every class.
pub fn random_split(ds: &Dataset, fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::Split(format!("fraction {fraction} not in (0, 1)")));
    }
    let n = ds.n();
    let n_first = (fraction * n as f64).round() as usize;
    if n_first == 0 || n_first >= n {
        return Err(Error::Split(format!(
            "fraction {fraction} of {n} rows leaves an empty part"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (first, second) = split_indices(n, n_first, &mut rng);
    let train = ds.subset(&first);
    train.require_all_classes()?;
    Ok((train, ds.subset(&second)))
}

/// Shannon entropy of the class frequencies with logarithm base k.
pub fn class_entropy(ds: &Dataset) -> f64 {
    entropy_of_counts(&ds.class_counts())
}

pub fn entropy_of_counts(counts: &[usize]) -> f64 {
    let k = counts.len();
    let total: usize = counts.iter().sum();
    if k < 2 || total == 0 {
        return 0.0;
    }
    let base = (k as f64).ln();
    -counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / total as f64;
            p * p.ln() / base
        })
        .sum::<f64>()
}

/// One-vs-rest targets: `targets[c][i]` is +1 when sample i has class c,
/// -1 otherwise.
#[derive(Debug, Clone, PartialEq)]
pub struct OvrTargets {
    pub targets: Vec<Vec<f64>>,
}

impl OvrTargets {
    pub fn from_labels(labels: &[usize], k: usize) -> Self {
        let targets = (0..k)
            .map(|c| {
                labels
                    .iter()
                    .map(|&l| if l == c { 1.0 } else { -1.0 })
                    .collect()
            })
            .collect();
        Self { targets }
    }

    pub fn k(&self) -> usize {
        self.targets.len()
    }

    pub fn len(&self) -> usize {
        self.targets.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn class(&self, c: usize) -> &[f64] {
        &self.targets[c]
    }
}

pub fn ovr_targets(ds: &Dataset) -> OvrTargets {
    OvrTargets::from_labels(ds.labels(), ds.k())
}
