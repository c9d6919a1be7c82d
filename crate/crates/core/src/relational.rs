//! Tables, schemas, and the bipartite relationship structure.
//!
//! A relational database here is two categorical tables plus a sparse binary
//! bi-adjacency matrix over their rows. During optimization a rectangular
//! sub-block of that matrix is extracted with a [`SliceSelector`], relaxed to
//! a dense weighted matrix, and later written back with
//! [`BiAdjacency::reinsert`].

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RelationalError {
    #[error("schema has no features")]
    EmptySchema,
    #[error("duplicate feature name {0:?}")]
    DuplicateFeature(String),
    #[error("feature {0:?} has cardinality 0")]
    ZeroCardinality(String),
    #[error("row {row} has {got} codes, schema has {want} features")]
    RowWidth { row: usize, got: usize, want: usize },
    #[error("row {row}, feature {feature}: code {code} out of range (cardinality {cardinality})")]
    CodeRange { row: usize, feature: usize, code: usize, cardinality: usize },
    #[error("edge ({0}, {1}) out of range for {2}x{3} adjacency")]
    EdgeRange(usize, usize, usize, usize),
    #[error("duplicate edge ({0}, {1})")]
    DuplicateEdge(usize, usize),
    #[error("selector index {0} out of range ({1})")]
    SelectorRange(usize, usize),
    #[error("selector indices must be strictly increasing")]
    SelectorOrder,
    #[error("patch is {got_r}x{got_c}, selector is {want_r}x{want_c}")]
    PatchDims { got_r: usize, got_c: usize, want_r: usize, want_c: usize },
    #[error("patch entry ({0}, {1}) = {2} is not binary")]
    PatchNotBinary(usize, usize, f64),
    #[error("adjacency is {n1}x{n2} but tables have {rows1} and {rows2} rows")]
    AdjacencyDims { n1: usize, n2: usize, rows1: usize, rows2: usize },
    #[error("matrix entry ({0}, {1}) = {2} outside [0, 1]")]
    WeightRange(usize, usize, f64),
    #[error("matrix sums to {got}, expected {want}")]
    WeightSum { got: f64, want: f64 },
}

/// Ordered categorical features with finite cardinalities.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schema {
    features: Vec<(String, usize)>,
}

impl Schema {
    pub fn new(features: Vec<(String, usize)>) -> Result<Self, RelationalError> {
        if features.is_empty() {
            return Err(RelationalError::EmptySchema);
        }
        let mut seen = BTreeSet::new();
        for (name, card) in &features {
            if *card == 0 {
                return Err(RelationalError::ZeroCardinality(name.clone()));
            }
            if !seen.insert(name.as_str()) {
                return Err(RelationalError::DuplicateFeature(name.clone()));
            }
        }
        Ok(Self { features })
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn cardinality(&self, feature: usize) -> usize {
        self.features[feature].1
    }

    pub fn name(&self, feature: usize) -> &str {
        &self.features[feature].0
    }

    pub fn features(&self) -> &[(String, usize)] {
        &self.features
    }
}

/// Rows of integer codes under a [`Schema`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Table {
    schema: Schema,
    rows: Vec<Vec<usize>>,
}

impl Table {
    pub fn new(schema: Schema, rows: Vec<Vec<usize>>) -> Result<Self, RelationalError> {
        for (r, row) in rows.iter().enumerate() {
            if row.len() != schema.len() {
                return Err(RelationalError::RowWidth { row: r, got: row.len(), want: schema.len() });
            }
            for (f, &code) in row.iter().enumerate() {
                if code >= schema.cardinality(f) {
                    return Err(RelationalError::CodeRange {
                        row: r,
                        feature: f,
                        code,
                        cardinality: schema.cardinality(f),
                    });
                }
            }
        }
        Ok(Self { schema, rows })
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn row(&self, i: usize) -> &[usize] {
        &self.rows[i]
    }

    pub fn rows(&self) -> &[Vec<usize>] {
        &self.rows
    }
}

/// Row-major dense matrix of reals.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "data length must match dims");
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn row_slice(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    /// Extracts the sub-matrix at the selector's row/column product.
    pub fn slice(&self, sel: &SliceSelector) -> Result<DenseMatrix, RelationalError> {
        sel.check_range(self.rows, self.cols)?;
        let mut out = DenseMatrix::zeros(sel.rows().len(), sel.cols().len());
        for (a, &i) in sel.rows().iter().enumerate() {
            for (b, &j) in sel.cols().iter().enumerate() {
                out.set(a, b, self.get(i, j));
            }
        }
        Ok(out)
    }
}

/// Sorted row/column index lists describing a rectangular sub-block.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SliceSelector {
    rows: Vec<usize>,
    cols: Vec<usize>,
}

impl SliceSelector {
    pub fn new(rows: Vec<usize>, cols: Vec<usize>) -> Result<Self, RelationalError> {
        for list in [&rows, &cols] {
            if !list.windows(2).all(|w| w[0] < w[1]) {
                return Err(RelationalError::SelectorOrder);
            }
        }
        Ok(Self { rows, cols })
    }

    pub fn full(n1: usize, n2: usize) -> Self {
        Self { rows: (0..n1).collect(), cols: (0..n2).collect() }
    }

    pub fn rows(&self) -> &[usize] {
        &self.rows
    }

    pub fn cols(&self) -> &[usize] {
        &self.cols
    }

    fn check_range(&self, n1: usize, n2: usize) -> Result<(), RelationalError> {
        if let Some(&i) = self.rows.last() {
            if i >= n1 {
                return Err(RelationalError::SelectorRange(i, n1));
            }
        }
        if let Some(&j) = self.cols.last() {
            if j >= n2 {
                return Err(RelationalError::SelectorRange(j, n2));
            }
        }
        Ok(())
    }
}

/// Sparse binary relationship matrix between two tables.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BiAdjacency {
    n1: usize,
    n2: usize,
    edges: BTreeSet<(usize, usize)>,
}

impl BiAdjacency {
    pub fn new(n1: usize, n2: usize) -> Self {
        Self { n1, n2, edges: BTreeSet::new() }
    }

    pub fn from_edges<I>(n1: usize, n2: usize, edges: I) -> Result<Self, RelationalError>
    where
        I: IntoIterator<Item = (usize, usize)>,
    {
        let mut adj = Self::new(n1, n2);
        for (i, j) in edges {
            if !adj.insert(i, j)? {
                return Err(RelationalError::DuplicateEdge(i, j));
            }
        }
        Ok(adj)
    }

    pub fn n1(&self) -> usize {
        self.n1
    }

    pub fn n2(&self) -> usize {
        self.n2
    }

    /// Edge count m.
    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn contains(&self, i: usize, j: usize) -> bool {
        self.edges.contains(&(i, j))
    }

    /// Inserts an edge; returns false if it was already present.
    pub fn insert(&mut self, i: usize, j: usize) -> Result<bool, RelationalError> {
        if i >= self.n1 || j >= self.n2 {
            return Err(RelationalError::EdgeRange(i, j, self.n1, self.n2));
        }
        Ok(self.edges.insert((i, j)))
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edges.iter().copied()
    }

    pub fn row_degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.n1];
        for &(i, _) in &self.edges {
            deg[i] += 1;
        }
        deg
    }

    pub fn col_degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.n2];
        for &(_, j) in &self.edges {
            deg[j] += 1;
        }
        deg
    }

    /// Extracts the selector's sub-block as a dense 0/1 matrix.
    pub fn slice(&self, sel: &SliceSelector) -> Result<DenseMatrix, RelationalError> {
        sel.check_range(self.n1, self.n2)?;
        let mut out = DenseMatrix::zeros(sel.rows().len(), sel.cols().len());
        for (a, &i) in sel.rows().iter().enumerate() {
            for (b, &j) in sel.cols().iter().enumerate() {
                if self.contains(i, j) {
                    out.set(a, b, 1.0);
                }
            }
        }
        Ok(out)
    }

    /// Number of edges inside the selector's row/column product.
    pub fn edges_in(&self, sel: &SliceSelector) -> usize {
        self.edges
            .iter()
            .filter(|(i, j)| sel.rows().binary_search(i).is_ok() && sel.cols().binary_search(j).is_ok())
            .count()
    }

    /// Replaces all cells in the selector's product set with the binary patch;
    /// edges outside the product set are untouched.
    pub fn reinsert(&mut self, sel: &SliceSelector, patch: &DenseMatrix) -> Result<(), RelationalError> {
        sel.check_range(self.n1, self.n2)?;
        if patch.rows() != sel.rows().len() || patch.cols() != sel.cols().len() {
            return Err(RelationalError::PatchDims {
                got_r: patch.rows(),
                got_c: patch.cols(),
                want_r: sel.rows().len(),
                want_c: sel.cols().len(),
            });
        }
        for (a, &i) in sel.rows().iter().enumerate() {
            for (b, &j) in sel.cols().iter().enumerate() {
                let v = patch.get(a, b);
                if v == 1.0 {
                    self.edges.insert((i, j));
                } else if v == 0.0 {
                    self.edges.remove(&(i, j));
                } else {
                    return Err(RelationalError::PatchNotBinary(a, b, v));
                }
            }
        }
        Ok(())
    }
}

/// Dense relaxation of an adjacency sub-block: entries in [0, 1] whose total
/// mass equals a fixed edge-count target.
#[derive(Debug, Clone)]
pub struct WeightedBiAdjacency {
    values: DenseMatrix,
    target_sum: f64,
}

impl WeightedBiAdjacency {
    pub fn new(values: DenseMatrix, target_sum: f64) -> Result<Self, RelationalError> {
        for i in 0..values.rows() {
            for j in 0..values.cols() {
                let v = values.get(i, j);
                if !(-1e-9..=1.0 + 1e-9).contains(&v) {
                    return Err(RelationalError::WeightRange(i, j, v));
                }
            }
        }
        let total = values.sum();
        if (total - target_sum).abs() > 1e-6 {
            return Err(RelationalError::WeightSum { got: total, want: target_sum });
        }
        Ok(Self { values, target_sum })
    }

    pub fn values(&self) -> &DenseMatrix {
        &self.values
    }

    pub fn target_sum(&self) -> f64 {
        self.target_sum
    }
}

/// How rows of the two tables may be related.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum RelationKind {
    #[default]
    #[serde(rename = "many-to-many")]
    ManyToMany,
    /// Every row of table 1 (the child) has exactly one edge.
    #[serde(rename = "one-to-many")]
    OneToMany,
}

/// A structural rule broken by a database, reported by
/// [`RelationalDatabase::validate_integrity`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum IntegrityViolation {
    /// One-to-many: a child row with no parent.
    OrphanedChild { row: usize },
    /// One-to-many: a child row with more than one parent.
    MultiParentChild { row: usize, degree: usize },
}

impl std::fmt::Display for IntegrityViolation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            IntegrityViolation::OrphanedChild { row } => {
                write!(f, "orphaned child row {row} (degree 0)")
            }
            IntegrityViolation::MultiParentChild { row, degree } => {
                write!(f, "child row {row} has {degree} parents, expected exactly 1")
            }
        }
    }
}

/// Two tables plus the bi-adjacency relating their rows.
#[derive(Debug, Clone)]
pub struct RelationalDatabase {
    table1: Table,
    table2: Table,
    adjacency: BiAdjacency,
    kind: RelationKind,
}

impl RelationalDatabase {
    pub fn new(
        table1: Table,
        table2: Table,
        adjacency: BiAdjacency,
        kind: RelationKind,
    ) -> Result<Self, RelationalError> {
        if adjacency.n1() != table1.n_rows() || adjacency.n2() != table2.n_rows() {
            return Err(RelationalError::AdjacencyDims {
                n1: adjacency.n1(),
                n2: adjacency.n2(),
                rows1: table1.n_rows(),
                rows2: table2.n_rows(),
            });
        }
        Ok(Self { table1, table2, adjacency, kind })
    }

    pub fn table1(&self) -> &Table {
        &self.table1
    }

    pub fn table2(&self) -> &Table {
        &self.table2
    }

    pub fn adjacency(&self) -> &BiAdjacency {
        &self.adjacency
    }

    pub fn kind(&self) -> RelationKind {
        self.kind
    }

    /// Largest number of edges incident to any single record on either side.
    pub fn max_degree(&self) -> usize {
        let rows = self.adjacency.row_degrees().into_iter().max().unwrap_or(0);
        let cols = self.adjacency.col_degrees().into_iter().max().unwrap_or(0);
        rows.max(cols)
    }

    /// Checks the kind-specific degree rules. Violations are returned, not
    /// raised: an invalid database is an answer, not an exception.
    pub fn validate_integrity(&self) -> Vec<IntegrityViolation> {
        let mut violations = Vec::new();
        if self.kind == RelationKind::OneToMany {
            for (row, deg) in self.adjacency.row_degrees().into_iter().enumerate() {
                match deg {
                    0 => violations.push(IntegrityViolation::OrphanedChild { row }),
                    1 => {}
                    d => violations.push(IntegrityViolation::MultiParentChild { row, degree: d }),
                }
            }
        }
        // Many-to-many requires no duplicate edges, which the set
        // representation guarantees structurally.
        violations
    }
}
