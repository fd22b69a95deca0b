//! Per-class output vectors of an individual and the similarity measures
//! compared across individuals during selection.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Class decision values of one individual over a sample set: `k` vectors of
/// equal length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Semantics {
    scores: Vec<Vec<f64>>,
}

impl Semantics {
    pub fn new(scores: Vec<Vec<f64>>) -> Result<Self> {
        let s = Self::from_raw(scores)?;
        if !s.is_finite() {
            return Err(Error::NonFinite("semantics"));
        }
        Ok(s)
    }

    /// Shape-checked, but entries may be non-finite.
    pub(crate) fn from_raw(scores: Vec<Vec<f64>>) -> Result<Self> {
        if scores.is_empty() {
            return Err(Error::InvalidDataset(
                "semantics needs at least one class".into(),
            ));
        }
        let n = scores[0].len();
        if let Some(bad) = scores.iter().find(|v| v.len() != n) {
            return Err(Error::LengthMismatch {
                expected: n,
                actual: bad.len(),
            });
        }
        Ok(Self { scores })
    }

    pub fn k(&self) -> usize {
        self.scores.len()
    }

    pub fn len(&self) -> usize {
        self.scores[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn class(&self, c: usize) -> &[f64] {
        &self.scores[c]
    }

    pub fn scores(&self) -> &[Vec<f64>] {
        &self.scores
    }

    pub fn into_scores(self) -> Vec<Vec<f64>> {
        self.scores
    }

    pub fn is_finite(&self) -> bool {
        self.scores.iter().flatten().all(|v| v.is_finite())
    }

    /// Replaces every non-finite entry with 0.
    pub(crate) fn zero_non_finite(&mut self) {
        for v in self.scores.iter_mut().flatten() {
            if !v.is_finite() {
                *v = 0.0;
            }
        }
    }

    /// Argmax over classes per sample; ties go to the lowest class index.
    pub fn to_labels(&self) -> Result<Vec<usize>> {
        if self.k() < 2 {
            return Err(Error::InvalidDataset(
                "labels need at least two class outputs".into(),
            ));
        }
        Ok(self.argmax())
    }

    pub(crate) fn argmax(&self) -> Vec<usize> {
        (0..self.len())
            .map(|i| {
                let mut best = 0;
                for c in 1..self.k() {
                    if self.scores[c][i] > self.scores[best][i] {
                        best = c;
                    }
                }
                best
            })
            .collect()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn check_lengths(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::LengthMismatch {
            expected: a,
            actual: b,
        });
    }
    Ok(())
}

pub fn cosine_similarity(v1: &[f64], v2: &[f64]) -> Result<f64> {
    check_lengths(v1.len(), v2.len())?;
    let n1 = dot(v1, v1).sqrt();
    let n2 = dot(v2, v2).sqrt();
    if !(n1 > 0.0 && n2 > 0.0) || !(n1.is_finite() && n2.is_finite()) {
        return Err(Error::UndefinedSimilarity("zero-norm vector"));
    }
    Ok((dot(v1, v2) / (n1 * n2)).clamp(-1.0, 1.0))
}

fn centered(v: &[f64]) -> Vec<f64> {
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    v.iter().map(|x| x - mean).collect()
}

pub fn pearson(v1: &[f64], v2: &[f64]) -> Result<f64> {
    check_lengths(v1.len(), v2.len())?;
    if v1.len() < 2 {
        return Err(Error::UndefinedSimilarity("correlation needs two samples"));
    }
    cosine_similarity(&centered(v1), &centered(v2))
        .map_err(|_| Error::UndefinedSimilarity("constant vector"))
}

/// Fraction of positions where the two label vectors agree.
pub fn agreement(l1: &[usize], l2: &[usize]) -> Result<f64> {
    check_lengths(l1.len(), l2.len())?;
    if l1.is_empty() {
        return Err(Error::LengthMismatch {
            expected: 1,
            actual: 0,
        });
    }
    let same = l1.iter().zip(l2).filter(|(a, b)| a == b).count();
    Ok(same as f64 / l1.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Measure {
    Cosine,
    Pearson,
}

impl Measure {
    pub fn apply(self, v1: &[f64], v2: &[f64]) -> Result<f64> {
        match self {
            Measure::Cosine => cosine_similarity(v1, v2),
            Measure::Pearson => pearson(v1, v2),
        }
    }
}

/// Mean over classes of the absolute per-class similarity.
pub fn mean_abs_similarity(s1: &Semantics, s2: &Semantics, measure: Measure) -> Result<f64> {
    check_lengths(s1.k(), s2.k())?;
    check_lengths(s1.len(), s2.len())?;
    let mut total = 0.0;
    for c in 0..s1.k() {
        total += measure.apply(s1.class(c), s2.class(c))?.abs();
    }
    Ok(total / s1.k() as f64)
}

/// Angle between the error vectors `t - p1` and `t - p2`.
pub fn relative_angle(t: &[f64], p1: &[f64], p2: &[f64]) -> Result<f64> {
    check_lengths(t.len(), p1.len())?;
    check_lengths(t.len(), p2.len())?;
    let e1: Vec<f64> = t.iter().zip(p1).map(|(a, b)| a - b).collect();
    let e2: Vec<f64> = t.iter().zip(p2).map(|(a, b)| a - b).collect();
    let n1 = dot(&e1, &e1).sqrt();
    let n2 = dot(&e2, &e2).sqrt();
    if !(n1 > 0.0 && n2 > 0.0) {
        return Err(Error::UndefinedSimilarity("parent coincides with target"));
    }
    Ok((dot(&e1, &e2) / (n1 * n2)).clamp(-1.0, 1.0).acos())
}

/// Per-class mean of [`relative_angle`]; `targets[c]` is the class-c target.
pub fn mean_relative_angle(targets: &[Vec<f64>], p1: &Semantics, p2: &Semantics) -> Result<f64> {
    check_lengths(targets.len(), p1.k())?;
    check_lengths(targets.len(), p2.k())?;
    let mut total = 0.0;
    for (c, t) in targets.iter().enumerate() {
        total += relative_angle(t, p1.class(c), p2.class(c))?;
    }
    Ok(total / targets.len() as f64)
}

/// Binary correctness vector: bit i set when sample i is labelled correctly.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BehaviorVector {
    words: Vec<u64>,
    len: usize,
}

impl BehaviorVector {
    pub fn from_bits(bits: &[bool]) -> Self {
        let mut words = vec![0u64; bits.len().div_ceil(64)];
        for (i, &b) in bits.iter().enumerate() {
            if b {
                words[i / 64] |= 1 << (i % 64);
            }
        }
        Self {
            words,
            len: bits.len(),
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn get(&self, i: usize) -> bool {
        self.words[i / 64] >> (i % 64) & 1 == 1
    }

    pub fn bits(&self) -> Vec<bool> {
        (0..self.len).map(|i| self.get(i)).collect()
    }

    pub fn count_ones(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn hamming(&self, other: &Self) -> usize {
        self.words
            .iter()
            .zip(&other.words)
            .map(|(a, b)| (a ^ b).count_ones() as usize)
            .sum()
    }
}

pub fn behavior_from_labels(predicted: &[usize], truth: &[usize]) -> Result<BehaviorVector> {
    check_lengths(truth.len(), predicted.len())?;
    let bits: Vec<bool> = predicted.iter().zip(truth).map(|(p, t)| p == t).collect();
    Ok(BehaviorVector::from_bits(&bits))
}

pub fn behavior_vector(s: &Semantics, true_labels: &[usize]) -> Result<BehaviorVector> {
    check_lengths(true_labels.len(), s.len())?;
    behavior_from_labels(&s.to_labels()?, true_labels)
}

/// Mean Hamming distance from `b` to its `k_nn` nearest archive members.
pub fn novelty_score<'a, I>(b: &BehaviorVector, archive: I, k_nn: usize) -> Result<f64>
where
    I: IntoIterator<Item = &'a BehaviorVector>,
{
    if k_nn == 0 {
        return Err(Error::Config("novelty k must be positive".into()));
    }
    let mut dists = Vec::new();
    for other in archive {
        check_lengths(b.len(), other.len())?;
        dists.push(b.hamming(other));
    }
    if dists.is_empty() {
        return Err(Error::Selection("novelty archive is empty".into()));
    }
    let take = k_nn.min(dists.len());
    if take < dists.len() {
        dists.select_nth_unstable(take - 1);
    }
    Ok(dists[..take].iter().sum::<usize>() as f64 / take as f64)
}
