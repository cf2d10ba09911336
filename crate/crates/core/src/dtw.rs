//! Multidimensional dynamic time warping and nearest-neighbour labelling.

use crate::error::{Error, Result};
use crate::types::{FeatureSequence, StateLabel};

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

fn check_pair(a: &FeatureSequence, b: &FeatureSequence) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            found: b.dim(),
        });
    }
    if a.is_empty() || b.is_empty() {
        return Err(Error::validation("DTW needs non-empty sequences"));
    }
    Ok(())
}

/// Minimal cumulative Euclidean cost over monotone warping paths from
/// `(0, 0)` to `(La-1, Lb-1)` with unit-weight horizontal, vertical and
/// diagonal steps. No window, no length normalization.
pub fn mddtw_distance(a: &FeatureSequence, b: &FeatureSequence) -> Result<f64> {
    check_pair(a, b)?;
    let (la, lb) = (a.len(), b.len());
    // Two rolling rows over b.
    let mut prev = vec![f64::INFINITY; lb];
    let mut cur = vec![f64::INFINITY; lb];
    for i in 0..la {
        let ai = a.step(i);
        for j in 0..lb {
            let c = euclidean(ai, b.step(j));
            cur[j] = if i == 0 && j == 0 {
                c
            } else {
                let mut best = f64::INFINITY;
                if i > 0 {
                    best = best.min(prev[j]);
                    if j > 0 {
                        best = best.min(prev[j - 1]);
                    }
                }
                if j > 0 {
                    best = best.min(cur[j - 1]);
                }
                best + c
            };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    Ok(prev[lb - 1])
}

/// Pooled per-dimension standardization statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct ZNorm {
    mean: Vec<f64>,
    /// `None` marks a zero-variance dimension, which passes through untouched.
    scale: Vec<Option<f64>>,
}

impl ZNorm {
    /// Mean and population standard deviation of each dimension pooled over
    /// every step of every sequence.
    pub fn fit<'a, I>(seqs: I) -> Result<Self>
    where
        I: IntoIterator<Item = &'a FeatureSequence>,
    {
        let seqs: Vec<&FeatureSequence> = seqs.into_iter().collect();
        let Some(first) = seqs.first() else {
            return Err(Error::validation(
                "cannot fit normalization on no sequences",
            ));
        };
        let dim = first.dim();
        if let Some(s) = seqs.iter().find(|s| s.dim() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: s.dim(),
            });
        }
        let count: usize = seqs.iter().map(|s| s.len()).sum();
        let mut mean = vec![0.0; dim];
        for s in &seqs {
            for step in s.steps() {
                for (m, v) in mean.iter_mut().zip(step) {
                    *m += v;
                }
            }
        }
        mean.iter_mut().for_each(|m| *m /= count as f64);
        let mut var = vec![0.0; dim];
        for s in &seqs {
            for step in s.steps() {
                for ((acc, v), m) in var.iter_mut().zip(step).zip(&mean) {
                    *acc += (v - m) * (v - m);
                }
            }
        }
        let scale = var
            .iter()
            .zip(&mean)
            .map(|(v, m)| {
                let sd = (v / count as f64).sqrt();
                // Spread at rounding level of the mean counts as constant.
                (sd > 1e-12 * m.abs().max(1.0)).then_some(sd)
            })
            .collect();
        Ok(ZNorm { mean, scale })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn apply(&self, seq: &FeatureSequence) -> Result<FeatureSequence> {
        if seq.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: seq.dim(),
            });
        }
        Ok(seq.map_values(|d, v| match self.scale[d] {
            Some(sd) => (v - self.mean[d]) / sd,
            None => v,
        }))
    }
}

/// Standardizes every sequence with statistics pooled over the whole
/// collection.
pub fn zscore_per_dim(seqs: &[FeatureSequence]) -> Result<Vec<FeatureSequence>> {
    let norm = ZNorm::fit(seqs)?;
    seqs.iter().map(|s| norm.apply(s)).collect()
}

/// Index and distance of the training sequence closest to `test`; ties go
/// to the earliest index.
pub fn nearest<'a, I>(test: &FeatureSequence, train: I) -> Result<(usize, f64)>
where
    I: IntoIterator<Item = &'a FeatureSequence>,
{
    let mut best: Option<(usize, f64)> = None;
    for (i, s) in train.into_iter().enumerate() {
        let d = mddtw_distance(test, s)?;
        if best.is_none_or(|(_, bd)| d < bd) {
            best = Some((i, d));
        }
    }
    best.ok_or_else(|| Error::validation("nearest-neighbour search over an empty training set"))
}

/// Label of the training sequence with the smallest MD-DTW distance.
pub fn nn_classify(
    test: &FeatureSequence,
    train: &[(FeatureSequence, StateLabel)],
) -> Result<StateLabel> {
    let (i, _) = nearest(test, train.iter().map(|(s, _)| s))?;
    Ok(train[i].1)
}
