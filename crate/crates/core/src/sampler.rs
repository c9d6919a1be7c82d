//! Unbiased rounding of a weighted bi-adjacency matrix to a binary one.
//!
//! Given weights x ∈ [0,1]^N with 1ᵀx = m, the constrained-sum sampler draws
//! exactly m indices with P(i selected) = x_i. Indices are greedily merged
//! into contiguous groups whose sums stay ≤ 1; sampling which groups survive
//! reduces to the same problem on the complement weights 1 − group_sums with
//! target L − m, and each surviving group contributes one index drawn
//! proportionally to its weights. The recursion shrinks geometrically, so the
//! total work is linear in N. Naive sequential weighted draws without
//! replacement do not have this marginal property; see the bias tests.
//!
//! One-to-many relations instead round each row of a row-stochastic matrix
//! independently to a single 1.

use rand::Rng;
use thiserror::Error;

use crate::relational::{DenseMatrix, WeightedBiAdjacency};

#[derive(Debug, Error)]
pub enum SamplerError {
    #[error("weight at index {index} is {value}, outside [0, 1]")]
    WeightOutOfBox { index: usize, value: f64 },
    #[error("weights sum to {sum}, expected {target}")]
    SumMismatch { sum: f64, target: f64 },
    #[error("cannot select {m} indices from {n} weights")]
    TargetOutOfRange { m: usize, n: usize },
    #[error("categorical draw over non-positive total weight")]
    DegenerateWeights,
    #[error("adjacency target sum {target} does not match requested edge count {m}")]
    EdgeCountMismatch { target: f64, m: usize },
    #[error("row {row} sums to {sum}, expected 1")]
    RowSumViolation { row: usize, sum: f64 },
}

/// Contiguous grouping of weight indices with per-group sums ≤ 1.
/// `boundaries` holds L+1 cut points 0 = z_0 < z_1 < ... < z_L = N; group j
/// covers indices [z_j, z_{j+1}).
#[derive(Debug, Clone, PartialEq)]
pub struct GroupPartition {
    boundaries: Vec<usize>,
    group_sums: Vec<f64>,
}

impl GroupPartition {
    pub fn len(&self) -> usize {
        self.group_sums.len()
    }

    pub fn is_empty(&self) -> bool {
        self.group_sums.is_empty()
    }

    pub fn boundaries(&self) -> &[usize] {
        &self.boundaries
    }

    pub fn group_sums(&self) -> &[f64] {
        &self.group_sums
    }

    pub fn group(&self, j: usize) -> std::ops::Range<usize> {
        self.boundaries[j]..self.boundaries[j + 1]
    }
}

/// Greedy left-to-right grouping: an index joins the current group only if
/// the running sum stays ≤ 1, otherwise it starts the next group. The result
/// is maximal: merging two adjacent groups would push their sum above 1.
pub fn merge_groups(x: &[f64]) -> Result<GroupPartition, SamplerError> {
    let x = validate_box(x)?;
    Ok(merge_clamped(&x))
}

fn merge_clamped(x: &[f64]) -> GroupPartition {
    let mut boundaries = vec![0];
    let mut group_sums = Vec::new();
    let mut running = 0.0;
    for (i, &xi) in x.iter().enumerate() {
        // Close the current group only if it is non-empty; a single weight
        // never exceeds 1 on its own after clamping.
        if running + xi > 1.0 && i > *boundaries.last().expect("non-empty") {
            boundaries.push(i);
            group_sums.push(running);
            running = xi;
        } else {
            running += xi;
        }
    }
    if !x.is_empty() {
        boundaries.push(x.len());
        group_sums.push(running);
    }
    GroupPartition { boundaries, group_sums }
}

/// Clamps weights into [0, 1], rejecting violations beyond 1e-9.
fn validate_box(x: &[f64]) -> Result<Vec<f64>, SamplerError> {
    x.iter()
        .enumerate()
        .map(|(index, &value)| {
            if !(-1e-9..=1.0 + 1e-9).contains(&value) {
                Err(SamplerError::WeightOutOfBox { index, value })
            } else {
                Ok(value.clamp(0.0, 1.0))
            }
        })
        .collect()
}

/// Folds the residual `target` − Σx into the largest strictly-interior
/// weight that can absorb it. Best effort by design: left-to-right summation
/// re-rounds behind the edited coordinate, so the final ulp cannot always be
/// forced, and the sampler only needs each recursion level to sit deep
/// inside its sum tolerance, which a single pass guarantees.
fn repair_total(x: &mut [f64], target: f64) {
    let residual = target - x.iter().sum::<f64>();
    if residual == 0.0 {
        return;
    }
    let best = x
        .iter()
        .enumerate()
        .filter(|&(_, &v)| v > 0.0 && v < 1.0 && (0.0..=1.0).contains(&(v + residual)))
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i);
    if let Some(i) = best {
        x[i] += residual;
    }
}

/// One draw from an unnormalized weight vector; zero-weight entries are never
/// returned. The cumulative walk matches the summation order used for group
/// sums, so the draw always lands inside the support.
pub(crate) fn categorical<R: Rng + ?Sized>(
    weights: &[f64],
    rng: &mut R,
) -> Result<usize, SamplerError> {
    let total: f64 = weights.iter().sum();
    if total.is_nan() || total <= 0.0 {
        return Err(SamplerError::DegenerateWeights);
    }
    let u = rng.gen::<f64>() * total;
    let mut acc = 0.0;
    let mut last_positive = None;
    for (i, &w) in weights.iter().enumerate() {
        acc += w;
        if w > 0.0 {
            last_positive = Some(i);
            if u < acc {
                return Ok(i);
            }
        }
    }
    Ok(last_positive.expect("positive total implies a positive weight"))
}

/// Draws exactly `m` distinct indices with P(i selected) = x_i, in sorted
/// order. Requires 0 ≤ x ≤ 1 (within 1e-9) and 1ᵀx = m (within 1e-6·N).
pub fn ubs<R: Rng + ?Sized>(x: &[f64], m: usize, rng: &mut R) -> Result<Vec<usize>, SamplerError> {
    let mut x = validate_box(x)?;
    if m > x.len() {
        return Err(SamplerError::TargetOutOfRange { m, n: x.len() });
    }
    let sum: f64 = x.iter().sum();
    if (sum - m as f64).abs() > 1e-6 * x.len().max(1) as f64 {
        return Err(SamplerError::SumMismatch { sum, target: m as f64 });
    }
    let mut m = m;
    // Deeper levels operate on complement weights of the previous level's
    // group sums; selections there mark groups excluded here.
    let mut levels: Vec<(Vec<f64>, GroupPartition)> = Vec::new();
    let mut selected: Vec<usize> = loop {
        let n = x.len();
        if m == 0 {
            break Vec::new();
        }
        if m == n {
            break (0..n).collect();
        }
        repair_total(&mut x, m as f64);
        if m == 1 {
            break vec![categorical(&x, rng)?];
        }
        let partition = merge_clamped(&x);
        let n_groups = partition.len();
        if n_groups < m {
            // Group sums stay ≤ 1, so fewer than m groups means the level
            // sum drifted materially below m.
            return Err(SamplerError::SumMismatch { sum: x.iter().sum(), target: m as f64 });
        }
        let complements: Vec<f64> =
            partition.group_sums().iter().map(|s| (1.0 - s).clamp(0.0, 1.0)).collect();
        let next_m = n_groups - m;
        levels.push((x, partition));
        x = complements;
        m = next_m;
    };
    while let Some((weights, partition)) = levels.pop() {
        // `selected` lists the excluded groups, sorted; every other group
        // contributes one index drawn proportionally to its weights.
        let excluded = selected;
        let mut kept = Vec::with_capacity(partition.len() - excluded.len());
        let mut e = 0;
        for j in 0..partition.len() {
            if e < excluded.len() && excluded[e] == j {
                e += 1;
                continue;
            }
            let range = partition.group(j);
            let within = categorical(&weights[range.clone()], rng)?;
            kept.push(range.start + within);
        }
        selected = kept;
    }
    Ok(selected)
}

/// Rounds a weighted bi-adjacency to a binary matrix with exactly `m_syn`
/// ones, unbiased entrywise: E[output] equals the weights.
pub fn sample_biadjacency<R: Rng + ?Sized>(
    weights: &WeightedBiAdjacency,
    m_syn: usize,
    rng: &mut R,
) -> Result<DenseMatrix, SamplerError> {
    let target = weights.target_sum();
    if (target - m_syn as f64).abs() > 1e-6 {
        return Err(SamplerError::EdgeCountMismatch { target, m: m_syn });
    }
    let values = weights.values();
    let picked = ubs(values.data(), m_syn, rng)?;
    let mut out = DenseMatrix::zeros(values.rows(), values.cols());
    for idx in picked {
        out.set(idx / values.cols(), idx % values.cols(), 1.0);
    }
    Ok(out)
}

/// Rounds a row-stochastic matrix to a binary matrix with exactly one 1 per
/// row, sampling each row's column from the row distribution.
pub fn categorical_round<R: Rng + ?Sized>(
    rows: &DenseMatrix,
    rng: &mut R,
) -> Result<DenseMatrix, SamplerError> {
    let mut out = DenseMatrix::zeros(rows.rows(), rows.cols());
    let mut buf = Vec::with_capacity(rows.cols());
    for r in 0..rows.rows() {
        buf.clear();
        for (c, &v) in rows.row_slice(r).iter().enumerate() {
            if v < -1e-9 {
                return Err(SamplerError::WeightOutOfBox { index: r * rows.cols() + c, value: v });
            }
            buf.push(v.max(0.0));
        }
        let sum: f64 = buf.iter().sum();
        if (sum - 1.0).abs() > 1e-6 {
            return Err(SamplerError::RowSumViolation { row: r, sum });
        }
        let col = categorical(&buf, rng)?;
        out.set(r, col, 1.0);
    }
    Ok(out)
}
