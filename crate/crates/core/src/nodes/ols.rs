//! Minimum-norm ordinary least squares.

use faer::Mat;

use crate::error::{Error, Result};

/// Singular values below this fraction of the largest are treated as zero.
pub const RANK_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct OlsResult {
    pub coefficients: Vec<f64>,
    pub fitted: Vec<f64>,
    pub residual_ss: f64,
}

fn check_finite(columns: &[&[f64]], targets: &[&[f64]]) -> Result<usize> {
    let n = targets
        .first()
        .map(|t| t.len())
        .or_else(|| columns.first().map(|c| c.len()))
        .unwrap_or(0);
    if n == 0 || columns.is_empty() {
        return Err(Error::InvalidDataset("OLS needs n >= 1 and p >= 1".into()));
    }
    for v in columns.iter().chain(targets) {
        if v.len() != n {
            return Err(Error::LengthMismatch {
                expected: n,
                actual: v.len(),
            });
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("OLS input"));
        }
    }
    Ok(n)
}

fn finish(columns: &[&[f64]], target: &[f64], coefficients: Vec<f64>) -> OlsResult {
    let n = target.len();
    let mut fitted = vec![0.0; n];
    for (col, &w) in columns.iter().zip(&coefficients) {
        if w != 0.0 {
            for (f, x) in fitted.iter_mut().zip(col.iter()) {
                *f += w * x;
            }
        }
    }
    let residual_ss = target
        .iter()
        .zip(&fitted)
        .map(|(t, f)| (t - f) * (t - f))
        .sum();
    OlsResult {
        coefficients,
        fitted,
        residual_ss,
    }
}

/// Least-squares fit of `target` on the design given as columns.
///
/// Rank-deficient designs get the minimum-norm solution.
pub fn ols_fit(columns: &[&[f64]], target: &[f64]) -> Result<OlsResult> {
    Ok(ols_fit_many(columns, &[target])?.pop().expect("one target"))
}

/// Fits several targets against the same design with a single decomposition.
pub fn ols_fit_many(columns: &[&[f64]], targets: &[&[f64]]) -> Result<Vec<OlsResult>> {
    let n = check_finite(columns, targets)?;
    let p = columns.len();

    if p == 1 {
        let col = columns[0];
        let norm2: f64 = col.iter().map(|x| x * x).sum();
        return Ok(targets
            .iter()
            .map(|t| {
                let w = if norm2 > 0.0 {
                    col.iter().zip(t.iter()).map(|(x, y)| x * y).sum::<f64>() / norm2
                } else {
                    0.0
                };
                finish(columns, t, vec![w])
            })
            .collect());
    }

    let design = Mat::<f64>::from_fn(n, p, |i, j| columns[j][i]);
    let svd = design
        .thin_svd()
        .map_err(|e| Error::Training(format!("OLS decomposition failed: {e:?}")))?;
    let (u, v) = (svd.U(), svd.V());
    let sigma = svd.S().column_vector();
    let r = sigma.nrows();
    let sigma_max = (0..r).map(|i| sigma[i]).fold(0.0, f64::max);
    let cutoff = RANK_TOLERANCE * sigma_max;

    let mut out = Vec::with_capacity(targets.len());
    for t in targets {
        let mut coefficients = vec![0.0; p];
        for l in 0..r {
            let s = sigma[l];
            if !(s > cutoff && s > 0.0) {
                continue;
            }
            let w = (0..n).map(|i| u[(i, l)] * t[i]).sum::<f64>() / s;
            for (j, c) in coefficients.iter_mut().enumerate() {
                *c += v[(j, l)] * w;
            }
        }
        if coefficients.iter().any(|c| !c.is_finite()) {
            return Err(Error::NonFinite("OLS coefficients"));
        }
        out.push(finish(columns, t, coefficients));
    }
    Ok(out)
}
