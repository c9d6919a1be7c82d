//! Cross-table k-way marginal workloads and their linear-query form.
//!
//! A workload is a feature subset split across the two tables. Its marginal
//! is the empirical distribution of related record pairs over the workload's
//! cells, normalized by the total edge count m. Each cell's count is a linear
//! function of the adjacency: count = uᵀ B v where u and v indicate the rows
//! of each table matching the cell's values. Queries are therefore kept in
//! this rank-1 (u, v) factorization and never materialized as length-n1·n2
//! vectors, which drops per-query memory from O(n1·n2) to O(n1+n2) and makes
//! the gradient accumulation a sum of small outer products.

use std::ops::Range;

use serde::Serialize;
use thiserror::Error;

use crate::relational::{DenseMatrix, RelationalDatabase, Schema, SliceSelector, Table, WeightedBiAdjacency};

#[derive(Debug, Error)]
pub enum MarginalError {
    #[error("marginal order k must be at least 2, got {0}")]
    OrderTooSmall(usize),
    #[error("cross workload requires both sides non-empty")]
    EmptySide,
    #[error("workload feature index {idx} out of range for schema with {d} features")]
    FeatureRange { idx: usize, d: usize },
    #[error("workload feature indices must be strictly increasing")]
    FeatureOrder,
    #[error("database has no relationships")]
    NoRelationships,
    #[error("query target sum is zero")]
    ZeroTargetSum,
    #[error("workloads do not match")]
    WorkloadMismatch,
    #[error("answer vectors have different lengths ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("expected a cross workload")]
    NotCross,
}

/// Which table(s) a workload's features come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WorkloadKind {
    SingleTable1,
    SingleTable2,
    Cross,
}

/// A feature subset, possibly split across the two tables.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct Workload {
    side1: Vec<usize>,
    side2: Vec<usize>,
}

fn check_side(side: &[usize], schema: Option<&Schema>) -> Result<(), MarginalError> {
    if !side.windows(2).all(|w| w[0] < w[1]) {
        return Err(MarginalError::FeatureOrder);
    }
    if let (Some(schema), Some(&max)) = (schema, side.last()) {
        if max >= schema.len() {
            return Err(MarginalError::FeatureRange { idx: max, d: schema.len() });
        }
    }
    Ok(())
}

impl Workload {
    pub fn cross(side1: Vec<usize>, side2: Vec<usize>) -> Result<Self, MarginalError> {
        if side1.is_empty() || side2.is_empty() {
            return Err(MarginalError::EmptySide);
        }
        check_side(&side1, None)?;
        check_side(&side2, None)?;
        Ok(Self { side1, side2 })
    }

    pub fn single_table1(side1: Vec<usize>) -> Result<Self, MarginalError> {
        if side1.is_empty() {
            return Err(MarginalError::EmptySide);
        }
        check_side(&side1, None)?;
        Ok(Self { side1, side2: Vec::new() })
    }

    pub fn single_table2(side2: Vec<usize>) -> Result<Self, MarginalError> {
        if side2.is_empty() {
            return Err(MarginalError::EmptySide);
        }
        check_side(&side2, None)?;
        Ok(Self { side1: Vec::new(), side2 })
    }

    pub fn kind(&self) -> WorkloadKind {
        match (self.side1.is_empty(), self.side2.is_empty()) {
            (false, false) => WorkloadKind::Cross,
            (false, true) => WorkloadKind::SingleTable1,
            (true, false) => WorkloadKind::SingleTable2,
            (true, true) => unreachable!("constructors forbid empty workloads"),
        }
    }

    pub fn side1(&self) -> &[usize] {
        &self.side1
    }

    pub fn side2(&self) -> &[usize] {
        &self.side2
    }

    pub fn order(&self) -> usize {
        self.side1.len() + self.side2.len()
    }

    /// Human-readable form like `t1[age,sex] x t2[genre]`.
    pub fn describe(&self, schema1: &Schema, schema2: &Schema) -> String {
        let names = |side: &[usize], schema: &Schema| {
            side.iter().map(|&f| schema.name(f).to_string()).collect::<Vec<_>>().join(",")
        };
        match self.kind() {
            WorkloadKind::SingleTable1 => format!("t1[{}]", names(&self.side1, schema1)),
            WorkloadKind::SingleTable2 => format!("t2[{}]", names(&self.side2, schema2)),
            WorkloadKind::Cross => format!(
                "t1[{}] x t2[{}]",
                names(&self.side1, schema1),
                names(&self.side2, schema2)
            ),
        }
    }
}

/// A workload's cell grid and one probability (or noisy answer) per cell.
///
/// Cells are ordered row-major: side-1 features first, then side-2 features,
/// each in schema order with the last feature varying fastest.
#[derive(Debug, Clone)]
pub struct MarginalVector {
    workload: Workload,
    cells: Vec<(Vec<usize>, Vec<usize>)>,
    probs: Vec<f64>,
}

impl MarginalVector {
    /// Raw constructor for externally produced (possibly noisy) answer
    /// vectors; no probability-vector validation is applied.
    pub fn from_parts(
        workload: Workload,
        cells: Vec<(Vec<usize>, Vec<usize>)>,
        probs: Vec<f64>,
    ) -> Self {
        Self { workload, cells, probs }
    }

    pub fn workload(&self) -> &Workload {
        &self.workload
    }

    pub fn cells(&self) -> &[(Vec<usize>, Vec<usize>)] {
        &self.cells
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }
}

fn cardinalities(side: &[usize], schema: &Schema) -> Result<Vec<usize>, MarginalError> {
    check_side(side, Some(schema))?;
    Ok(side.iter().map(|&f| schema.cardinality(f)).collect())
}

/// Enumerates all value tuples of the given cardinalities, last fastest.
fn enumerate_tuples(cards: &[usize]) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    for &card in cards {
        let mut next = Vec::with_capacity(out.len() * card);
        for prefix in &out {
            for v in 0..card {
                let mut t = prefix.clone();
                t.push(v);
                next.push(t);
            }
        }
        out = next;
    }
    out
}

/// Mixed-radix cell index of `row` projected onto `side`, last feature fastest.
fn project_cell(row: &[usize], side: &[usize], cards: &[usize]) -> usize {
    let mut idx = 0;
    for (pos, &f) in side.iter().enumerate() {
        idx = idx * cards[pos] + row[f];
    }
    idx
}

type CellGrid = (Vec<usize>, Vec<usize>, Vec<(Vec<usize>, Vec<usize>)>);

fn cell_grid(
    w: &Workload,
    schema1: &Schema,
    schema2: &Schema,
) -> Result<CellGrid, MarginalError> {
    let cards1 = cardinalities(w.side1(), schema1)?;
    let cards2 = cardinalities(w.side2(), schema2)?;
    let tuples1 = enumerate_tuples(&cards1);
    let tuples2 = enumerate_tuples(&cards2);
    let mut cells = Vec::with_capacity(tuples1.len() * tuples2.len());
    for y1 in &tuples1 {
        for y2 in &tuples2 {
            cells.push((y1.clone(), y2.clone()));
        }
    }
    Ok((cards1, cards2, cells))
}

/// All workloads of order k with both sides non-empty, in lexicographic order
/// over the concatenated feature list (table-1 features, then table-2).
pub fn enumerate_cross_workloads(
    schema1: &Schema,
    schema2: &Schema,
    k: usize,
) -> Result<Vec<Workload>, MarginalError> {
    if k < 2 {
        return Err(MarginalError::OrderTooSmall(k));
    }
    let d1 = schema1.len();
    let d2 = schema2.len();
    let mut out = Vec::new();
    if k > d1 + d2 {
        return Ok(out);
    }
    // Lexicographic k-subsets of 0..d1+d2; indices >= d1 belong to table 2.
    let mut combo: Vec<usize> = (0..k).collect();
    loop {
        let split = combo.partition_point(|&i| i < d1);
        if split > 0 && split < k {
            let side1 = combo[..split].to_vec();
            let side2 = combo[split..].iter().map(|&i| i - d1).collect();
            out.push(Workload { side1, side2 });
        }
        // Advance to the next combination.
        let mut pos = k;
        while pos > 0 {
            pos -= 1;
            if combo[pos] < d1 + d2 - (k - pos) {
                combo[pos] += 1;
                for later in pos + 1..k {
                    combo[later] = combo[later - 1] + 1;
                }
                break;
            }
            if pos == 0 {
                return Ok(out);
            }
        }
    }
}

/// Noise-free cross-table marginal of the database on workload `w`:
/// the fraction of related pairs falling in each cell.
pub fn compute_cross_marginal(
    db: &RelationalDatabase,
    w: &Workload,
) -> Result<MarginalVector, MarginalError> {
    compute_cross_marginal_parts(db.table1(), db.table2(), db.adjacency().edges(), db.adjacency().edge_count(), w)
}

/// As [`compute_cross_marginal`] but over explicit parts, so callers holding
/// tables and an adjacency separately avoid assembling a database value.
pub fn compute_cross_marginal_parts(
    table1: &Table,
    table2: &Table,
    edges: impl Iterator<Item = (usize, usize)>,
    m: usize,
    w: &Workload,
) -> Result<MarginalVector, MarginalError> {
    if m == 0 {
        return Err(MarginalError::NoRelationships);
    }
    let counts = compute_cross_counts(table1, table2, edges, w)?;
    let (_, _, cells) = cell_grid(w, table1.schema(), table2.schema())?;
    let probs = counts.iter().map(|&c| c as f64 / m as f64).collect();
    Ok(MarginalVector { workload: w.clone(), cells, probs })
}

/// Raw per-cell edge counts of workload `w` over an explicit edge list, in
/// the workload's cell order.
pub fn compute_cross_counts(
    table1: &Table,
    table2: &Table,
    edges: impl Iterator<Item = (usize, usize)>,
    w: &Workload,
) -> Result<Vec<u64>, MarginalError> {
    if w.kind() != WorkloadKind::Cross {
        return Err(MarginalError::NotCross);
    }
    let cards1 = cardinalities(w.side1(), table1.schema())?;
    let cards2 = cardinalities(w.side2(), table2.schema())?;
    let n_cells1: usize = cards1.iter().product();
    let n_cells2: usize = cards2.iter().product();
    let mut counts = vec![0u64; n_cells1 * n_cells2];
    for (i, j) in edges {
        let c1 = project_cell(table1.row(i), w.side1(), &cards1);
        let c2 = project_cell(table2.row(j), w.side2(), &cards2);
        counts[c1 * n_cells2 + c2] += 1;
    }
    Ok(counts)
}

/// Single-table marginal over the table's rows (used by the baseline
/// generator and evaluation reports; the linking optimization consumes cross
/// workloads only).
pub fn compute_single_marginal(table: &Table, features: &[usize]) -> Result<MarginalVector, MarginalError> {
    let cards = cardinalities(features, table.schema())?;
    let tuples = enumerate_tuples(&cards);
    let mut counts = vec![0u64; tuples.len()];
    for row in table.rows() {
        counts[project_cell(row, features, &cards)] += 1;
    }
    let n = table.n_rows().max(1) as f64;
    let probs = counts.iter().map(|&c| c as f64 / n).collect();
    Ok(MarginalVector {
        workload: Workload { side1: features.to_vec(), side2: Vec::new() },
        cells: tuples.into_iter().map(|t| (t, Vec::new())).collect(),
        probs,
    })
}

/// One marginal cell as a linear query on the adjacency: the count of edges
/// between rows matching the cell's side-1 values and rows matching its
/// side-2 values is uᵀ B v. `u` and `v` store matching row indices, sorted.
#[derive(Debug, Clone)]
pub struct RankOneQuery {
    pub u: Vec<usize>,
    pub v: Vec<usize>,
}

/// Queries for a set of workloads over fixed tables, grouped per workload and
/// aligned with each workload's cell order.
#[derive(Debug, Clone, Default)]
pub struct QueryMatrix {
    n_rows: usize,
    n_cols: usize,
    queries: Vec<RankOneQuery>,
    groups: Vec<(Workload, Range<usize>)>,
}

impl QueryMatrix {
    pub fn new(n_rows: usize, n_cols: usize) -> Self {
        Self { n_rows, n_cols, queries: Vec::new(), groups: Vec::new() }
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn query_count(&self) -> usize {
        self.queries.len()
    }

    pub fn queries(&self) -> &[RankOneQuery] {
        &self.queries
    }

    pub fn groups(&self) -> &[(Workload, Range<usize>)] {
        &self.groups
    }

    /// Appends one standalone query outside any workload group; index lists
    /// must be sorted and in range. Used for ad-hoc query sets that are not
    /// tied to tables.
    pub fn push_query(&mut self, u: Vec<usize>, v: Vec<usize>) {
        debug_assert!(u.windows(2).all(|w| w[0] < w[1]), "u must be sorted unique");
        debug_assert!(v.windows(2).all(|w| w[0] < w[1]), "v must be sorted unique");
        debug_assert!(u.last().is_none_or(|&i| i < self.n_rows), "u index out of range");
        debug_assert!(v.last().is_none_or(|&j| j < self.n_cols), "v index out of range");
        self.queries.push(RankOneQuery { u, v });
    }

    /// Appends one query per cell of `w`, computed over the given tables.
    pub fn push_workload(
        &mut self,
        w: &Workload,
        table1: &Table,
        table2: &Table,
    ) -> Result<(), MarginalError> {
        if w.kind() != WorkloadKind::Cross {
            return Err(MarginalError::NotCross);
        }
        assert_eq!(self.n_rows, table1.n_rows(), "table 1 row count changed");
        assert_eq!(self.n_cols, table2.n_rows(), "table 2 row count changed");
        let (cards1, cards2, _) = cell_grid(w, table1.schema(), table2.schema())?;
        let start = self.queries.len();

        // Bucket rows by cell once per side, then emit the cell product.
        let n_cells1: usize = cards1.iter().product();
        let n_cells2: usize = cards2.iter().product();
        let mut rows_by_cell: Vec<Vec<usize>> = vec![Vec::new(); n_cells1];
        for (i, row) in table1.rows().iter().enumerate() {
            rows_by_cell[project_cell(row, w.side1(), &cards1)].push(i);
        }
        let mut cols_by_cell: Vec<Vec<usize>> = vec![Vec::new(); n_cells2];
        for (j, row) in table2.rows().iter().enumerate() {
            cols_by_cell[project_cell(row, w.side2(), &cards2)].push(j);
        }
        for u in &rows_by_cell {
            for v in &cols_by_cell {
                self.queries.push(RankOneQuery { u: u.clone(), v: v.clone() });
            }
        }
        self.groups.push((w.clone(), start..self.queries.len()));
        Ok(())
    }

    /// Restricts every query to the selector's rows/columns, reindexed to
    /// slice-local positions. Queries keep their order; workload grouping is
    /// preserved.
    pub fn restrict(&self, sel: &SliceSelector) -> QueryMatrix {
        let restrict_side = |side: &[usize], kept: &[usize]| -> Vec<usize> {
            // Both lists are sorted: intersect by merge walk, returning the
            // position within `kept` (the slice-local index).
            let mut out = Vec::new();
            let mut a = 0;
            let mut b = 0;
            while a < side.len() && b < kept.len() {
                match side[a].cmp(&kept[b]) {
                    std::cmp::Ordering::Less => a += 1,
                    std::cmp::Ordering::Greater => b += 1,
                    std::cmp::Ordering::Equal => {
                        out.push(b);
                        a += 1;
                        b += 1;
                    }
                }
            }
            out
        };
        QueryMatrix {
            n_rows: sel.rows().len(),
            n_cols: sel.cols().len(),
            queries: self
                .queries
                .iter()
                .map(|q| RankOneQuery {
                    u: restrict_side(&q.u, sel.rows()),
                    v: restrict_side(&q.v, sel.cols()),
                })
                .collect(),
            groups: self.groups.clone(),
        }
    }

    /// Normalized query answers on a flat row-major matrix: (uᵀ X v) / target.
    /// Unlike [`query_values_weighted`] this accepts arbitrary real entries.
    pub fn values_flat(&self, x: &[f64], target_sum: f64) -> Vec<f64> {
        assert_eq!(x.len(), self.n_rows * self.n_cols, "matrix dims mismatch");
        self.queries
            .iter()
            .map(|q| {
                let mut acc = 0.0;
                for &i in &q.u {
                    let row = &x[i * self.n_cols..(i + 1) * self.n_cols];
                    for &j in &q.v {
                        acc += row[j];
                    }
                }
                acc / target_sum
            })
            .collect()
    }

    /// Adjoint applied to a residual: Σ_q r_q · u_q v_qᵀ, accumulated into a
    /// flat row-major matrix.
    pub fn apply_qt_flat(&self, r: &[f64], out: &mut [f64]) {
        assert_eq!(r.len(), self.queries.len(), "residual length mismatch");
        assert_eq!(out.len(), self.n_rows * self.n_cols, "output dims mismatch");
        out.fill(0.0);
        for (q, &rq) in self.queries.iter().zip(r) {
            if rq == 0.0 {
                continue;
            }
            for &i in &q.u {
                let row = &mut out[i * self.n_cols..(i + 1) * self.n_cols];
                for &j in &q.v {
                    row[j] += rq;
                }
            }
        }
    }
}

/// Normalized answers of every query on a weighted adjacency: entry per query
/// equals (uᵀ B̃ v) / target_sum.
pub fn query_values_weighted(
    q: &QueryMatrix,
    b: &WeightedBiAdjacency,
) -> Result<Vec<f64>, MarginalError> {
    if b.target_sum() == 0.0 {
        return Err(MarginalError::ZeroTargetSum);
    }
    Ok(q.values_flat(b.values().data(), b.target_sum()))
}

/// The adjoint Q̂ᵀ r as a dense matrix with the query matrix's dimensions,
/// built by rank-1 accumulation.
pub fn apply_qt(q: &QueryMatrix, r: &[f64]) -> DenseMatrix {
    let mut out = vec![0.0; q.n_rows() * q.n_cols()];
    q.apply_qt_flat(r, &mut out);
    DenseMatrix::from_vec(q.n_rows(), q.n_cols(), out)
}

/// Total-variation distance between two marginals on the same workload.
pub fn tv_score(p: &MarginalVector, q: &MarginalVector) -> Result<f64, MarginalError> {
    if p.workload() != q.workload() || p.len() != q.len() {
        return Err(MarginalError::WorkloadMismatch);
    }
    Ok(0.5 * p.probs().iter().zip(q.probs()).map(|(a, b)| (a - b).abs()).sum::<f64>())
}

/// Mean squared error between stacked query answers, normalized by workload
/// count rather than query count.
pub fn workload_mse(
    answers_syn: &[f64],
    answers_real: &[f64],
    n_workloads: usize,
) -> Result<f64, MarginalError> {
    if answers_syn.len() != answers_real.len() {
        return Err(MarginalError::LengthMismatch(answers_syn.len(), answers_real.len()));
    }
    let sq: f64 = answers_syn.iter().zip(answers_real).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(sq / n_workloads as f64)
}
