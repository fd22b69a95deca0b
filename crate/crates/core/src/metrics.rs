//! Classification scores, cross-system ranking and the Friedman / Nemenyi
//! tests.

use std::collections::BTreeMap;

use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};

fn check_len(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::LengthMismatch {
            expected: a,
            actual: b,
        });
    }
    Ok(())
}

/// `confusion[true][pred]`
pub fn confusion_matrix(y_true: &[usize], y_pred: &[usize], k: usize) -> Result<Vec<Vec<usize>>> {
    check_len(y_true.len(), y_pred.len())?;
    let mut m = vec![vec![0usize; k]; k];
    for (&t, &p) in y_true.iter().zip(y_pred) {
        if t >= k || p >= k {
            return Err(Error::InvalidDataset(format!(
                "label {} outside 0..{k}",
                t.max(p)
            )));
        }
        m[t][p] += 1;
    }
    Ok(m)
}

/// F1 per class; 0 when precision + recall is 0.
pub fn per_class_f1(y_true: &[usize], y_pred: &[usize], k: usize) -> Result<Vec<f64>> {
    let m = confusion_matrix(y_true, y_pred, k)?;
    Ok((0..k)
        .map(|c| {
            let tp = m[c][c] as f64;
            let actual: usize = m[c].iter().sum();
            let predicted: usize = m.iter().map(|row| row[c]).sum();
            if tp == 0.0 {
                return 0.0;
            }
            let p = tp / predicted as f64;
            let r = tp / actual as f64;
            2.0 * p * r / (p + r)
        })
        .collect())
}

/// Unweighted mean of the per-class F1 over all `k` classes.
pub fn macro_f1(y_true: &[usize], y_pred: &[usize], k: usize) -> Result<f64> {
    let f1 = per_class_f1(y_true, y_pred, k)?;
    Ok(f1.iter().sum::<f64>() / k as f64)
}

pub fn accuracy(y_true: &[usize], y_pred: &[usize]) -> Result<f64> {
    check_len(y_true.len(), y_pred.len())?;
    if y_true.is_empty() {
        return Err(Error::InvalidDataset("accuracy of an empty sample".into()));
    }
    let hits = y_true.iter().zip(y_pred).filter(|(a, b)| a == b).count();
    Ok(hits as f64 / y_true.len() as f64)
}

pub fn time_per_sample(wall_seconds: f64, n_train: usize) -> Result<f64> {
    if n_train == 0 {
        return Err(Error::Config("time per sample needs n_train > 0".into()));
    }
    if wall_seconds < 0.0 || !wall_seconds.is_finite() {
        return Err(Error::Config(format!("invalid wall time {wall_seconds}")));
    }
    Ok(wall_seconds / n_train as f64)
}

/// Rows are systems, columns datasets. `None` marks a missing result.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreTable {
    pub systems: Vec<String>,
    pub datasets: Vec<String>,
    pub values: Vec<Vec<Option<f64>>>,
}

impl ScoreTable {
    pub fn new(
        systems: Vec<String>,
        datasets: Vec<String>,
        values: Vec<Vec<Option<f64>>>,
    ) -> Result<Self> {
        if values.len() != systems.len() {
            return Err(Error::LengthMismatch {
                expected: systems.len(),
                actual: values.len(),
            });
        }
        for row in &values {
            check_len(datasets.len(), row.len())?;
        }
        Ok(Self {
            systems,
            datasets,
            values,
        })
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("system");
        for d in &self.datasets {
            out.push(',');
            out.push_str(d);
        }
        out.push('\n');
        for (s, row) in self.systems.iter().zip(&self.values) {
            out.push_str(s);
            for v in row {
                out.push(',');
                if let Some(v) = v {
                    out.push_str(&format!("{v:.6}"));
                }
            }
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankTable {
    pub systems: Vec<String>,
    pub datasets: Vec<String>,
    /// `ranks[system][dataset]`
    pub ranks: Vec<Vec<f64>>,
    pub mean_rank: Vec<f64>,
    /// Systems that had a score (and not the fallback rank) on each dataset.
    pub present: Vec<Vec<bool>>,
    /// Tie-averaged ranks, used by the Friedman statistic.
    pub fractional: Vec<Vec<f64>>,
}

impl RankTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("system");
        for d in &self.datasets {
            out.push(',');
            out.push_str(d);
        }
        out.push_str(",mean_rank\n");
        for (i, s) in self.systems.iter().enumerate() {
            out.push_str(s);
            for r in &self.ranks[i] {
                out.push_str(&format!(",{r}"));
            }
            out.push_str(&format!(",{:.4}\n", self.mean_rank[i]));
        }
        out
    }

    pub fn s(&self) -> usize {
        self.systems.len()
    }

    pub fn d(&self) -> usize {
        self.datasets.len()
    }
}

/// Competition ranking of `values`, highest first: ties share the best rank
/// and the next rank skips by the tie count.
pub fn competition_ranks(values: &[f64]) -> Vec<usize> {
    values
        .iter()
        .map(|v| 1 + values.iter().filter(|w| *w > v).count())
        .collect()
}

/// Ranking where tied values share the mean of the positions they span.
pub fn fractional_ranks(values: &[f64]) -> Vec<f64> {
    values
        .iter()
        .map(|v| {
            let above = values.iter().filter(|w| *w > v).count();
            let equal = values.iter().filter(|w| *w == v).count();
            above as f64 + (equal as f64 + 1.0) / 2.0
        })
        .collect()
}

/// Ranks every dataset column. Missing entries get rank `s`; the mean rank is
/// taken over the datasets where the system has a value.
pub fn rank_scores(st: &ScoreTable) -> Result<RankTable> {
    let s = st.systems.len();
    let d = st.datasets.len();
    if s == 0 || d == 0 {
        return Err(Error::Stats("empty score table".into()));
    }
    let mut ranks = vec![vec![0.0; d]; s];
    let mut present = vec![vec![false; d]; s];
    let mut fractional = vec![vec![0.0; d]; s];
    for j in 0..d {
        let idx: Vec<usize> = (0..s).filter(|&i| st.values[i][j].is_some()).collect();
        let vals: Vec<f64> = idx.iter().map(|&i| st.values[i][j].unwrap()).collect();
        let r = competition_ranks(&vals);
        let fr = fractional_ranks(&vals);
        for row in ranks.iter_mut().chain(fractional.iter_mut()) {
            row[j] = s as f64;
        }
        for ((&i, &ri), &fi) in idx.iter().zip(&r).zip(&fr) {
            ranks[i][j] = ri as f64;
            fractional[i][j] = fi;
            present[i][j] = true;
        }
    }
    let mean_rank = (0..s)
        .map(|i| {
            let (sum, cnt) = (0..d)
                .filter(|&j| present[i][j])
                .fold((0.0, 0usize), |(a, c), j| (a + ranks[i][j], c + 1));
            if cnt == 0 {
                s as f64
            } else {
                sum / cnt as f64
            }
        })
        .collect();
    Ok(RankTable {
        systems: st.systems.clone(),
        datasets: st.datasets.clone(),
        ranks,
        mean_rank,
        present,
        fractional,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FriedmanResult {
    pub statistic: f64,
    pub p_value: f64,
}

/// `χ² = 12d / (s(s+1)) · (Σ R_j² − s(s+1)²/4)` over the tie-averaged mean
/// ranks `R_j`.
pub fn friedman_test(rt: &RankTable) -> Result<FriedmanResult> {
    let s = rt.s();
    let d = rt.d();
    if s < 2 || d < 2 {
        return Err(Error::Stats(format!(
            "Friedman test needs at least 2 systems and 2 datasets, got {s}x{d}"
        )));
    }
    if rt.present.iter().flatten().any(|p| !p) {
        return Err(Error::Stats("Friedman test with missing ranks".into()));
    }
    let sf = s as f64;
    let df = d as f64;
    let sum_sq: f64 = rt
        .fractional
        .iter()
        .map(|row| {
            let r = row.iter().sum::<f64>() / df;
            r * r
        })
        .sum();
    let statistic =
        (12.0 * df / (sf * (sf + 1.0)) * (sum_sq - sf * (sf + 1.0).powi(2) / 4.0)).max(0.0);
    let chi = ChiSquared::new(sf - 1.0).map_err(|e| Error::Stats(e.to_string()))?;
    let p_value = if statistic == 0.0 {
        1.0
    } else {
        chi.sf(statistic)
    };
    Ok(FriedmanResult { statistic, p_value })
}

/// Studentized range q_α / √2 for 2..=25 systems.
const Q_05: [f64; 24] = [
    1.959964, 2.343701, 2.569032, 2.727774, 2.849705, 2.94832, 3.030878, 3.10173, 3.163684,
    3.218654, 3.268004, 3.312739, 3.353618, 3.39123, 3.426041, 3.458425, 3.488685, 3.517073,
    3.543799, 3.56904, 3.592946, 3.615646, 3.637252, 3.657861,
];
const Q_10: [f64; 24] = [
    1.644854, 2.052293, 2.291341, 2.459516, 2.588521, 2.692732, 2.779884, 2.854606, 2.919889,
    2.977768, 3.029694, 3.076733, 3.119693, 3.159199, 3.195743, 3.229723, 3.261461, 3.291224,
    3.319233, 3.345676, 3.370712, 3.394477, 3.417089, 3.438651,
];

pub fn nemenyi_q(s: usize, alpha: f64) -> Result<f64> {
    let table = if (alpha - 0.05).abs() < 1e-12 {
        &Q_05
    } else if (alpha - 0.10).abs() < 1e-12 {
        &Q_10
    } else {
        return Err(Error::Stats(format!(
            "no Nemenyi table for alpha {alpha} (use 0.05 or 0.10)"
        )));
    };
    if !(2..=25).contains(&s) {
        return Err(Error::Stats(format!(
            "Nemenyi table covers 2..=25 systems, got {s}"
        )));
    }
    Ok(table[s - 2])
}

pub fn critical_difference(s: usize, d: usize, alpha: f64) -> Result<f64> {
    if d == 0 {
        return Err(Error::Stats("critical difference needs d > 0".into()));
    }
    let q = nemenyi_q(s, alpha)?;
    Ok(q * (s as f64 * (s as f64 + 1.0) / (6.0 * d as f64)).sqrt())
}

#[derive(Debug, Clone, PartialEq)]
pub struct NemenyiResult {
    pub critical_difference: f64,
    /// Indices into the rank table's systems, each sorted by mean rank.
    pub groups: Vec<Vec<usize>>,
}

/// Maximal runs of systems, ordered by mean rank, whose extremes differ by
/// less than `cd`. Singletons are kept.
pub fn group_by_cd(mean_rank: &[f64], cd: f64) -> Vec<Vec<usize>> {
    let s = mean_rank.len();
    let mut order: Vec<usize> = (0..s).collect();
    order.sort_by(|&a, &b| mean_rank[a].total_cmp(&mean_rank[b]).then(a.cmp(&b)));
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut last_end = 0;
    for start in 0..s {
        let mut end = start;
        while end + 1 < s && mean_rank[order[end + 1]] - mean_rank[order[start]] < cd {
            end += 1;
        }
        if start == 0 || end > last_end {
            groups.push(order[start..=end].to_vec());
            last_end = end;
        }
    }
    groups
}

pub fn nemenyi_groups(rt: &RankTable, alpha: f64) -> Result<NemenyiResult> {
    let cd = critical_difference(rt.s(), rt.d(), alpha)?;
    Ok(NemenyiResult {
        critical_difference: cd,
        groups: group_by_cd(&rt.mean_rank, cd),
    })
}

/// Plain-text summary of mean ranks, the Friedman test and Nemenyi groups.
pub fn statistics_report(rt: &RankTable, alpha: f64) -> String {
    let mut out = String::new();
    let mut by_rank: BTreeMap<(u64, usize), &str> = BTreeMap::new();
    for (i, s) in rt.systems.iter().enumerate() {
        by_rank.insert(((rt.mean_rank[i] * 1e9).round() as u64, i), s);
    }
    out.push_str("mean ranks:\n");
    for ((_, i), s) in &by_rank {
        out.push_str(&format!("  {s}: {:.4}\n", rt.mean_rank[*i]));
    }
    match friedman_test(rt) {
        Ok(f) => out.push_str(&format!(
            "friedman: statistic={:.6} p_value={:.6} (df={})\n",
            f.statistic,
            f.p_value,
            rt.s().saturating_sub(1)
        )),
        Err(e) => out.push_str(&format!("friedman: not computed ({e})\n")),
    }
    match nemenyi_groups(rt, alpha) {
        Ok(n) => {
            out.push_str(&format!(
                "nemenyi: alpha={alpha} critical_difference={:.6}\n",
                n.critical_difference
            ));
            for g in &n.groups {
                let names: Vec<&str> = g.iter().map(|&i| rt.systems[i].as_str()).collect();
                out.push_str(&format!("  group: {}\n", names.join(" ")));
            }
        }
        Err(e) => out.push_str(&format!("nemenyi: not computed ({e})\n")),
    }
    out
}
