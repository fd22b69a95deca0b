//! Embedded classifiers used as function-set members: Gaussian and
//! multinomial naive Bayes, and nearest centroid. Each emits one score per
//! class, higher meaning more likely.

use serde::{Deserialize, Serialize};

/// Laplace smoothing for the multinomial event model.
pub const MULTINOMIAL_ALPHA: f64 = 1.0;
/// Variance floor relative to (largest column variance + 1).
pub const VARIANCE_FLOOR: f64 = 1e-9;

fn class_indices(labels: &[usize], k: usize) -> Vec<Vec<usize>> {
    let mut groups = vec![Vec::new(); k];
    for (i, &l) in labels.iter().enumerate() {
        groups[l].push(i);
    }
    groups
}

fn log_priors(groups: &[Vec<usize>], n: usize) -> Vec<f64> {
    groups
        .iter()
        .map(|g| (g.len() as f64 / n as f64).ln())
        .collect()
}

fn n_rows(columns: &[&[f64]]) -> usize {
    columns.first().map_or(0, |c| c.len())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianNb {
    pub log_prior: Vec<f64>,
    /// `means[c][j]`
    pub means: Vec<Vec<f64>>,
    pub variances: Vec<Vec<f64>>,
}

impl GaussianNb {
    /// Every class in `0..k` must occur in `labels`.
    pub fn fit(columns: &[&[f64]], labels: &[usize], k: usize) -> Self {
        let n = labels.len();
        let groups = class_indices(labels, k);
        let max_var = columns
            .iter()
            .map(|col| {
                let mean = col.iter().sum::<f64>() / n as f64;
                col.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n as f64
            })
            .fold(0.0, f64::max);
        let floor = VARIANCE_FLOOR * (max_var + 1.0);
        let mut means = Vec::with_capacity(k);
        let mut variances = Vec::with_capacity(k);
        for g in &groups {
            let cnt = g.len().max(1) as f64;
            let (mu, var): (Vec<f64>, Vec<f64>) = columns
                .iter()
                .map(|col| {
                    let mean = g.iter().map(|&i| col[i]).sum::<f64>() / cnt;
                    let var = g.iter().map(|&i| (col[i] - mean).powi(2)).sum::<f64>() / cnt;
                    (mean, var + floor)
                })
                .unzip();
            means.push(mu);
            variances.push(var);
        }
        Self {
            log_prior: log_priors(&groups, n),
            means,
            variances,
        }
    }

    /// Joint log-likelihood per class.
    pub fn predict(&self, columns: &[&[f64]]) -> Vec<Vec<f64>> {
        let n = n_rows(columns);
        let ln_2pi = (2.0 * std::f64::consts::PI).ln();
        self.log_prior
            .iter()
            .enumerate()
            .map(|(c, &prior)| {
                let mut out = vec![prior; n];
                for (j, col) in columns.iter().enumerate() {
                    let mu = self.means[c][j];
                    let var = self.variances[c][j];
                    let norm = -0.5 * (ln_2pi + var.ln());
                    for (o, &x) in out.iter_mut().zip(col.iter()) {
                        *o += norm - (x - mu) * (x - mu) / (2.0 * var);
                    }
                }
                out
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultinomialNb {
    pub log_prior: Vec<f64>,
    /// Training-set minimum per column, subtracted before scoring.
    pub shift: Vec<f64>,
    /// `log_prob[c][j]`
    pub log_prob: Vec<Vec<f64>>,
}

impl MultinomialNb {
    pub fn fit(columns: &[&[f64]], labels: &[usize], k: usize) -> Self {
        let n = labels.len();
        let groups = class_indices(labels, k);
        let shift: Vec<f64> = columns
            .iter()
            .map(|col| col.iter().copied().fold(f64::INFINITY, f64::min))
            .collect();
        let p = columns.len();
        let log_prob = groups
            .iter()
            .map(|g| {
                let counts: Vec<f64> = columns
                    .iter()
                    .zip(&shift)
                    .map(|(col, s)| g.iter().map(|&i| col[i] - s).sum::<f64>())
                    .collect();
                let total: f64 = counts.iter().sum::<f64>() + MULTINOMIAL_ALPHA * p as f64;
                counts
                    .iter()
                    .map(|c| ((c + MULTINOMIAL_ALPHA) / total).ln())
                    .collect()
            })
            .collect();
        Self {
            log_prior: log_priors(&groups, n),
            shift,
            log_prob,
        }
    }

    pub fn predict(&self, columns: &[&[f64]]) -> Vec<Vec<f64>> {
        let n = n_rows(columns);
        self.log_prior
            .iter()
            .zip(&self.log_prob)
            .map(|(&prior, lp)| {
                let mut out = vec![prior; n];
                for ((col, s), w) in columns.iter().zip(&self.shift).zip(lp) {
                    for (o, &x) in out.iter_mut().zip(col.iter()) {
                        *o += (x - s) * w;
                    }
                }
                out
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NearestCentroid {
    /// `centroids[c][j]`
    pub centroids: Vec<Vec<f64>>,
}

impl NearestCentroid {
    pub fn fit(columns: &[&[f64]], labels: &[usize], k: usize) -> Self {
        let groups = class_indices(labels, k);
        let centroids = groups
            .iter()
            .map(|g| {
                let cnt = g.len().max(1) as f64;
                columns
                    .iter()
                    .map(|col| g.iter().map(|&i| col[i]).sum::<f64>() / cnt)
                    .collect()
            })
            .collect();
        Self { centroids }
    }

    /// Negated Euclidean distance to each centroid.
    pub fn predict(&self, columns: &[&[f64]]) -> Vec<Vec<f64>> {
        let n = n_rows(columns);
        self.centroids
            .iter()
            .map(|centroid| {
                let mut sq = vec![0.0; n];
                for (col, mu) in columns.iter().zip(centroid) {
                    for (s, &x) in sq.iter_mut().zip(col.iter()) {
                        *s += (x - mu) * (x - mu);
                    }
                }
                sq.into_iter().map(|d| -d.sqrt()).collect()
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum ClassifierState {
    GaussianNb(GaussianNb),
    MultinomialNb(MultinomialNb),
    NearestCentroid(NearestCentroid),
}

impl ClassifierState {
    pub fn predict(&self, columns: &[&[f64]]) -> Vec<Vec<f64>> {
        match self {
            ClassifierState::GaussianNb(m) => m.predict(columns),
            ClassifierState::MultinomialNb(m) => m.predict(columns),
            ClassifierState::NearestCentroid(m) => m.predict(columns),
        }
    }

    pub fn is_finite(&self) -> bool {
        let all = |v: &[Vec<f64>]| v.iter().flatten().all(|x| x.is_finite());
        match self {
            ClassifierState::GaussianNb(m) => {
                m.log_prior.iter().all(|x| x.is_finite()) && all(&m.means) && all(&m.variances)
            }
            ClassifierState::MultinomialNb(m) => {
                m.log_prior.iter().all(|x| x.is_finite())
                    && m.shift.iter().all(|x| x.is_finite())
                    && all(&m.log_prob)
            }
            ClassifierState::NearestCentroid(m) => all(&m.centroids),
        }
    }
}
