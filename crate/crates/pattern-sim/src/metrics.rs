//! Pattern-similarity metrics: Hamming-cost dynamic time warping and
//! KL divergence over empirical class distributions.
//!
//! DTW here is the plain symmetric form: cumulative cost
//! `D(i,j) = cost(i,j) + min(D(i-1,j-1), D(i,j-1), D(i-1,j))` with the first
//! row and column accumulating along their only predecessor, no band and no
//! step weights. The per-pair cost is Hamming (0 when the classes match,
//! 1 otherwise), so the distance counts mismatched alignment pairs.
//!
//! KL divergence uses the natural logarithm. Both distributions receive
//! additive smoothing (`KL_SMOOTHING_EPSILON` added to every entry, then
//! renormalized) before the sum, so classes present in one pattern but not
//! the other produce large finite values instead of infinities.

use thiserror::Error;

use crate::pattern::{ClassId, ConsumptionPattern};

/// Additive smoothing applied to both distributions before the KL sum.
pub const KL_SMOOTHING_EPSILON: f64 = 1e-6;

#[derive(Debug, Error, PartialEq)]
pub enum MetricError {
    #[error("empty sequence")]
    EmptySequence,
    #[error("empty support")]
    EmptySupport,
    #[error("class {0} not in declared support")]
    OutsideSupport(ClassId),
    #[error("mismatched supports: left has {left} classes, right has {right}")]
    MismatchedSupports { left: usize, right: usize },
}

/// 0 when the classes match, 1 otherwise.
pub fn hamming(a: ClassId, b: ClassId) -> f64 {
    if a == b {
        0.0
    } else {
        1.0
    }
}

/// Result of a DTW comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct DtwResult {
    pub distance: f64,
    /// Monotone warping path from `(0,0)` to `(m-1,n-1)`, present when
    /// requested via [`dtw_distance_with_path`].
    pub path: Option<Vec<(usize, usize)>>,
}

fn dtw_matrix(a: &[ClassId], b: &[ClassId]) -> Vec<Vec<f64>> {
    let (m, n) = (a.len(), b.len());
    let mut d = vec![vec![0.0; n]; m];
    d[0][0] = hamming(a[0], b[0]);
    for j in 1..n {
        d[0][j] = hamming(a[0], b[j]) + d[0][j - 1];
    }
    for i in 1..m {
        d[i][0] = hamming(a[i], b[0]) + d[i - 1][0];
    }
    for i in 1..m {
        for j in 1..n {
            let best = d[i - 1][j - 1].min(d[i][j - 1]).min(d[i - 1][j]);
            d[i][j] = hamming(a[i], b[j]) + best;
        }
    }
    d
}

/// Hamming-cost DTW distance between two event sequences.
pub fn dtw_distance(a: &[ClassId], b: &[ClassId]) -> Result<DtwResult, MetricError> {
    if a.is_empty() || b.is_empty() {
        return Err(MetricError::EmptySequence);
    }
    let d = dtw_matrix(a, b);
    Ok(DtwResult {
        distance: d[a.len() - 1][b.len() - 1],
        path: None,
    })
}

/// As [`dtw_distance`] but also backtracks one optimal warping path.
/// Diagonal moves are preferred on cost ties.
pub fn dtw_distance_with_path(a: &[ClassId], b: &[ClassId]) -> Result<DtwResult, MetricError> {
    if a.is_empty() || b.is_empty() {
        return Err(MetricError::EmptySequence);
    }
    let d = dtw_matrix(a, b);
    let mut path = Vec::new();
    let (mut i, mut j) = (a.len() - 1, b.len() - 1);
    path.push((i, j));
    while i > 0 || j > 0 {
        if i == 0 {
            j -= 1;
        } else if j == 0 {
            i -= 1;
        } else {
            let diag = d[i - 1][j - 1];
            let left = d[i][j - 1];
            let up = d[i - 1][j];
            if diag <= left && diag <= up {
                i -= 1;
                j -= 1;
            } else if left <= up {
                j -= 1;
            } else {
                i -= 1;
            }
        }
        path.push((i, j));
    }
    path.reverse();
    Ok(DtwResult {
        distance: d[a.len() - 1][b.len() - 1],
        path: Some(path),
    })
}

/// Class frequencies of a pattern over a declared, ordered support.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalDistribution {
    pub probs: Vec<f64>,
    pub support: Vec<ClassId>,
}

/// Frequency of each support class in the pattern, normalized by pattern
/// length. A pattern event outside the support is an error.
pub fn empirical_distribution(
    pattern: &ConsumptionPattern,
    support: &[ClassId],
) -> Result<EmpiricalDistribution, MetricError> {
    if support.is_empty() {
        return Err(MetricError::EmptySupport);
    }
    if pattern.is_empty() {
        return Err(MetricError::EmptySequence);
    }
    let mut counts = vec![0usize; support.len()];
    for &event in &pattern.events {
        let slot = support
            .iter()
            .position(|&c| c == event)
            .ok_or(MetricError::OutsideSupport(event))?;
        counts[slot] += 1;
    }
    let total = pattern.len() as f64;
    Ok(EmpiricalDistribution {
        probs: counts.iter().map(|&c| c as f64 / total).collect(),
        support: support.to_vec(),
    })
}

/// Distinct classes appearing in either pattern, ascending by id. The usual
/// shared support for [`kl_divergence`].
pub fn union_support(a: &ConsumptionPattern, b: &ConsumptionPattern) -> Vec<ClassId> {
    let mut support: Vec<ClassId> = a.events.iter().chain(b.events.iter()).copied().collect();
    support.sort_unstable();
    support.dedup();
    support
}

/// `sum_i p_i ln(p_i / q_i)` after epsilon-smoothing both distributions.
pub fn kl_divergence(
    p: &EmpiricalDistribution,
    q: &EmpiricalDistribution,
) -> Result<f64, MetricError> {
    if p.support != q.support {
        return Err(MetricError::MismatchedSupports {
            left: p.support.len(),
            right: q.support.len(),
        });
    }
    let smooth = |probs: &[f64]| -> Vec<f64> {
        let total: f64 = probs.iter().map(|x| x + KL_SMOOTHING_EPSILON).sum();
        probs
            .iter()
            .map(|x| (x + KL_SMOOTHING_EPSILON) / total)
            .collect()
    };
    let ps = smooth(&p.probs);
    let qs = smooth(&q.probs);
    Ok(ps
        .iter()
        .zip(qs.iter())
        .map(|(&pi, &qi)| pi * (pi / qi).ln())
        .sum())
}
