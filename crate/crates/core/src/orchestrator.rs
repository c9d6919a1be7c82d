//! The outer synthesis loop: given a private relational database and two
//! already-synthesized tables, iteratively pick the worst-matched cross-table
//! marginals under the exponential mechanism, observe them through the
//! Gaussian mechanism, and re-optimize random disjoint slices of the
//! persistent synthetic adjacency so its marginals track the noisy answers.
//!
//! Each slice solves the relaxed least-squares problem against the stored
//! answers with the contribution of all edges outside the slice held fixed,
//! then rounds the relaxed slice back to binary with the unbiased sampler,
//! conserving the slice's edge count and therefore the global one.

use std::collections::HashSet;

use log::warn;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::marginals::{
    compute_cross_counts, compute_cross_marginal, compute_cross_marginal_parts,
    enumerate_cross_workloads, tv_score, workload_mse, MarginalError, MarginalVector, QueryMatrix,
    Workload,
};
use crate::privacy::{
    exponential_select, gaussian_perturb, BudgetLedger, BudgetReport, PrivacyError, Sensitivity,
};
use crate::projection::{pgd_solve, pgd_solve_one_to_many, PgdConfig, ProjectionError};
use crate::relational::{
    BiAdjacency, RelationKind, RelationalDatabase, RelationalError, SliceSelector, Table,
};
use crate::rng::{RngStreams, StreamRng};
use crate::sampler::{categorical_round, sample_biadjacency, SamplerError};

#[derive(Debug, Error)]
pub enum OrchestratorError {
    #[error("synthetic table {table} schema does not match the real schema")]
    SchemaMismatch { table: usize },
    #[error("real database has no relationships to learn from")]
    EmptyRealDatabase,
    #[error("alpha must lie in [0, 1], got {0}")]
    InvalidAlpha(f64),
    #[error("min_related_fraction must lie in [0, 1], got {0}")]
    InvalidRelatedFraction(f64),
    #[error("m_syn must be at least 1")]
    ZeroEdgeTarget,
    #[error("m_syn = {m_syn} exceeds the {n1}x{n2} adjacency")]
    TooManyEdges { m_syn: usize, n1: usize, n2: usize },
    #[error("one-to-many requires m_syn = {n1} (one edge per child row), got {m_syn}")]
    OneToManyEdgeTarget { m_syn: usize, n1: usize },
    #[error("slice dimensions and slice count must be at least 1")]
    EmptySlice,
    #[error("{count} disjoint slices of {per_slice} need more than the {available} rows or columns available")]
    InfeasibleSlices { count: usize, per_slice: usize, available: usize },
    #[error("top_error_workloads must be at least 1")]
    NoTopWorkloads,
    #[error(transparent)]
    Relational(#[from] RelationalError),
    #[error(transparent)]
    Marginal(#[from] MarginalError),
    #[error(transparent)]
    Privacy(#[from] PrivacyError),
    #[error(transparent)]
    Projection(#[from] ProjectionError),
    #[error(transparent)]
    Sampler(#[from] SamplerError),
}

fn default_marginal_order() -> usize {
    3
}

fn default_n_slices() -> usize {
    1
}

fn default_min_related_fraction() -> f64 {
    0.2
}

fn default_top_error_workloads() -> usize {
    8
}

/// Full configuration of a synthesis run. `T` iterations each select `K`
/// fresh workloads of order `k`; every iteration re-optimizes `n_slices`
/// disjoint slices of `slice_rows` x `slice_cols`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthesisConfig {
    /// Relationship privacy budget, converted internally to zCDP.
    pub eps_rel: f64,
    pub delta_rel: f64,
    #[serde(rename = "T")]
    pub iterations: usize,
    #[serde(rename = "K")]
    pub workloads_per_iteration: usize,
    /// Budget fraction spent on workload selection; the rest buys answers.
    pub alpha: f64,
    #[serde(rename = "k", default = "default_marginal_order")]
    pub marginal_order: usize,
    /// Edge count of the synthetic adjacency, treated as public.
    pub m_syn: usize,
    pub slice_rows: usize,
    pub slice_cols: usize,
    #[serde(default = "default_n_slices")]
    pub n_slices: usize,
    /// Minimum fraction of each slice's rows/columns that currently carry at
    /// least one edge, when enough such rows exist.
    #[serde(default = "default_min_related_fraction")]
    pub min_related_fraction: f64,
    /// Per iteration, only this many accumulated workloads (the ones with
    /// the highest current error) enter the slice optimization.
    #[serde(default = "default_top_error_workloads")]
    pub top_error_workloads: usize,
    /// Optional cap on how many unselected workloads are scored per
    /// iteration; `None` scores the full pool.
    #[serde(default)]
    pub workload_subsample: Option<usize>,
    #[serde(default)]
    pub pgd: PgdConfig,
    pub seed: u64,
    #[serde(default)]
    pub kind: RelationKind,
}

impl SynthesisConfig {
    pub fn validate(&self, n1_syn: usize, n2_syn: usize) -> Result<(), OrchestratorError> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(OrchestratorError::InvalidAlpha(self.alpha));
        }
        if !(0.0..=1.0).contains(&self.min_related_fraction) {
            return Err(OrchestratorError::InvalidRelatedFraction(self.min_related_fraction));
        }
        if self.m_syn == 0 {
            return Err(OrchestratorError::ZeroEdgeTarget);
        }
        if self.m_syn > n1_syn * n2_syn {
            return Err(OrchestratorError::TooManyEdges { m_syn: self.m_syn, n1: n1_syn, n2: n2_syn });
        }
        if self.kind == RelationKind::OneToMany && self.m_syn != n1_syn {
            return Err(OrchestratorError::OneToManyEdgeTarget { m_syn: self.m_syn, n1: n1_syn });
        }
        if self.slice_rows == 0 || self.slice_cols == 0 || self.n_slices == 0 {
            return Err(OrchestratorError::EmptySlice);
        }
        if self.n_slices * self.slice_rows > n1_syn {
            return Err(OrchestratorError::InfeasibleSlices {
                count: self.n_slices,
                per_slice: self.slice_rows,
                available: n1_syn,
            });
        }
        if self.n_slices * self.slice_cols > n2_syn {
            return Err(OrchestratorError::InfeasibleSlices {
                count: self.n_slices,
                per_slice: self.slice_cols,
                available: n2_syn,
            });
        }
        if self.top_error_workloads == 0 {
            return Err(OrchestratorError::NoTopWorkloads);
        }
        Ok(())
    }
}

/// A workload already bought from the budget: its identity and the noisy
/// answer vector the optimizer tracks from now on.
#[derive(Debug, Clone)]
pub struct SelectedWorkload {
    workload: Workload,
    noisy: MarginalVector,
    iteration: usize,
}

impl SelectedWorkload {
    pub fn workload(&self) -> &Workload {
        &self.workload
    }

    pub fn noisy(&self) -> &MarginalVector {
        &self.noisy
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }
}

/// Mutable state threaded through the iterations.
#[derive(Debug)]
pub struct RunState {
    selected: Vec<SelectedWorkload>,
    adjacency: BiAdjacency,
    ledger: BudgetLedger,
    iteration: usize,
}

impl RunState {
    pub fn new(adjacency: BiAdjacency, ledger: BudgetLedger) -> Self {
        Self { selected: Vec::new(), adjacency, ledger, iteration: 0 }
    }

    pub fn selected(&self) -> &[SelectedWorkload] {
        &self.selected
    }

    pub fn adjacency(&self) -> &BiAdjacency {
        &self.adjacency
    }

    pub fn ledger(&self) -> &BudgetLedger {
        &self.ledger
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn into_adjacency(self) -> BiAdjacency {
        self.adjacency
    }
}

/// Named RNG streams for one run, all derived from the master seed so runs
/// are reproducible bit for bit.
pub struct SynthesisRngs {
    pub selection: StreamRng,
    pub noise: StreamRng,
    pub slicing: StreamRng,
    pub pgd: StreamRng,
    pub sampling: StreamRng,
}

impl SynthesisRngs {
    pub fn new(seed: u64) -> Self {
        let streams = RngStreams::new(seed);
        Self {
            selection: streams.stream("selection"),
            noise: streams.stream("noise"),
            slicing: streams.stream("slicing"),
            pgd: streams.stream("pgd"),
            sampling: streams.stream("sampling"),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct WorkloadRecord {
    pub workload: String,
    /// TV distance between the noisy answer and the synthetic marginal at
    /// selection time; safe to log because the noise is already applied.
    pub error_after_noise: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub selected: Vec<WorkloadRecord>,
    pub optimized_workloads: Vec<String>,
    /// Edge count found inside each drawn slice (zero means skipped).
    pub slice_edge_counts: Vec<usize>,
}

/// Reproducibility record of a full run.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub seed: u64,
    pub config: SynthesisConfig,
    pub iterations: Vec<IterationRecord>,
    pub ledger: BudgetLedger,
}

#[derive(Debug, Clone, Serialize)]
pub struct WorkloadErrorReport {
    pub workload: String,
    pub l1_error: f64,
    pub mse: f64,
}

/// Noise-free quality of the final synthetic database, averaged over every
/// cross workload of the evaluation order.
#[derive(Debug, Clone, Serialize)]
pub struct EvaluationReport {
    pub marginal_order: usize,
    pub average_l1_error: f64,
    pub per_workload: Vec<WorkloadErrorReport>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub manifest: RunManifest,
    pub budget: BudgetReport,
    pub evaluation: EvaluationReport,
}

/// Random starting adjacency: uniform distinct cells for many-to-many, one
/// uniform parent per child row for one-to-many.
pub fn initialize_adjacency<R: Rng + ?Sized>(
    n1: usize,
    n2: usize,
    m_syn: usize,
    kind: RelationKind,
    rng: &mut R,
) -> Result<BiAdjacency, OrchestratorError> {
    let mut adjacency = BiAdjacency::new(n1, n2);
    match kind {
        RelationKind::OneToMany => {
            if m_syn != n1 {
                return Err(OrchestratorError::OneToManyEdgeTarget { m_syn, n1 });
            }
            for i in 0..n1 {
                adjacency.insert(i, rng.gen_range(0..n2))?;
            }
        }
        RelationKind::ManyToMany => {
            let total = n1 * n2;
            if m_syn > total {
                return Err(OrchestratorError::TooManyEdges { m_syn, n1, n2 });
            }
            // Floyd's sampling: m_syn distinct cells, each draw O(1).
            let mut chosen = HashSet::with_capacity(m_syn);
            for upper in total - m_syn..total {
                let probe = rng.gen_range(0..=upper);
                let cell = if chosen.insert(probe) { probe } else { upper };
                if cell != probe {
                    chosen.insert(cell);
                }
                adjacency.insert(cell / n2, cell % n2)?;
            }
        }
    }
    Ok(adjacency)
}

/// Draws `n_slices` selectors with pairwise-disjoint row sets and
/// pairwise-disjoint column sets. Within each slice at least
/// `min_related_fraction` of the rows (and columns) currently carry an edge,
/// whenever enough such rows remain; otherwise the shortfall is logged and
/// filled uniformly.
pub fn draw_slices<R: Rng + ?Sized>(
    adjacency: &BiAdjacency,
    slice_rows: usize,
    slice_cols: usize,
    n_slices: usize,
    min_related_fraction: f64,
    rng: &mut R,
) -> Result<Vec<SliceSelector>, OrchestratorError> {
    let split_pool = |degrees: Vec<usize>, rng: &mut R| -> (Vec<usize>, Vec<usize>) {
        let mut related = Vec::new();
        let mut other = Vec::new();
        for (i, d) in degrees.into_iter().enumerate() {
            if d > 0 {
                related.push(i);
            } else {
                other.push(i);
            }
        }
        related.shuffle(rng);
        other.shuffle(rng);
        (related, other)
    };
    let (mut rows_related, mut rows_other) = split_pool(adjacency.row_degrees(), rng);
    let (mut cols_related, mut cols_other) = split_pool(adjacency.col_degrees(), rng);

    let take = |related: &mut Vec<usize>,
                other: &mut Vec<usize>,
                per_slice: usize,
                label: &str|
     -> Result<Vec<usize>, OrchestratorError> {
        let want_related = (per_slice as f64 * min_related_fraction).ceil() as usize;
        let want_related = want_related.min(per_slice);
        let got_related = want_related.min(related.len());
        if got_related < want_related {
            warn!(
                "slice wants {want_related} related {label} but only {got_related} remain; \
                 filling uniformly"
            );
        }
        let mut picked: Vec<usize> = related.split_off(related.len() - got_related);
        let rest = per_slice - picked.len();
        let from_other = rest.min(other.len());
        picked.extend(other.split_off(other.len() - from_other));
        let shortfall = rest - from_other;
        if shortfall > 0 {
            if shortfall > related.len() {
                return Err(OrchestratorError::InfeasibleSlices {
                    count: n_slices,
                    per_slice,
                    available: picked.len() + related.len(),
                });
            }
            picked.extend(related.split_off(related.len() - shortfall));
        }
        picked.sort_unstable();
        Ok(picked)
    };

    let mut out = Vec::with_capacity(n_slices);
    for _ in 0..n_slices {
        let rows = take(&mut rows_related, &mut rows_other, slice_rows, "rows")?;
        let cols = take(&mut cols_related, &mut cols_other, slice_cols, "columns")?;
        out.push(SliceSelector::new(rows, cols)?);
    }
    Ok(out)
}

/// Single-slice form of [`draw_slices`].
pub fn draw_slice<R: Rng + ?Sized>(
    adjacency: &BiAdjacency,
    cfg: &SynthesisConfig,
    rng: &mut R,
) -> Result<SliceSelector, OrchestratorError> {
    Ok(draw_slices(adjacency, cfg.slice_rows, cfg.slice_cols, 1, cfg.min_related_fraction, rng)?
        .pop()
        .expect("one slice requested"))
}

fn synthetic_marginal(
    table1: &Table,
    table2: &Table,
    adjacency: &BiAdjacency,
    w: &Workload,
) -> Result<MarginalVector, OrchestratorError> {
    Ok(compute_cross_marginal_parts(
        table1,
        table2,
        adjacency.edges(),
        adjacency.edge_count(),
        w,
    )?)
}

/// One round of the loop: select `K` fresh workloads, buy their noisy
/// answers, then re-optimize disjoint random slices against the accumulated
/// answers with the highest current error.
pub fn run_iteration(
    state: &mut RunState,
    real_db: &RelationalDatabase,
    syn_table1: &Table,
    syn_table2: &Table,
    cfg: &SynthesisConfig,
    rngs: &mut SynthesisRngs,
) -> Result<IterationRecord, OrchestratorError> {
    let iteration = state.iteration;
    let mut record = IterationRecord {
        iteration,
        selected: Vec::new(),
        optimized_workloads: Vec::new(),
        slice_edge_counts: Vec::new(),
    };
    if cfg.workloads_per_iteration == 0 {
        state.iteration += 1;
        return Ok(record);
    }

    let m_real = real_db.adjacency().edge_count();
    if m_real == 0 {
        return Err(OrchestratorError::EmptyRealDatabase);
    }
    let sens = Sensitivity::new(m_real as f64, real_db.max_degree().max(1))?;

    // Score every not-yet-selected workload by how far the current synthetic
    // marginal sits from the real one.
    let mut candidates: Vec<Workload> =
        enumerate_cross_workloads(syn_table1.schema(), syn_table2.schema(), cfg.marginal_order)?
            .into_iter()
            .filter(|w| state.selected.iter().all(|s| s.workload != *w))
            .collect();
    if let Some(cap) = cfg.workload_subsample {
        if candidates.len() > cap {
            candidates.shuffle(&mut rngs.selection);
            candidates.truncate(cap);
            candidates.sort_unstable();
        }
    }
    let mut scored = Vec::with_capacity(candidates.len());
    for w in candidates {
        let real = compute_cross_marginal(real_db, &w)?;
        let syn = synthetic_marginal(syn_table1, syn_table2, &state.adjacency, &w)?;
        let score = tv_score(&real, &syn)?;
        scored.push((w, real, score));
    }

    // Selection and observation, charged per call.
    let picks = cfg.workloads_per_iteration.min(scored.len());
    for _ in 0..picks {
        state.ledger.charge_selection()?;
        let scores: Vec<f64> = scored.iter().map(|(_, _, s)| *s).collect();
        let idx =
            exponential_select(&scores, &sens, cfg.alpha, state.ledger.eps0(), &mut rngs.selection)?;
        let (w, real, _) = scored.swap_remove(idx);

        state.ledger.charge_answer()?;
        let noisy_probs =
            gaussian_perturb(&real, &sens, cfg.alpha, state.ledger.eps0(), &mut rngs.noise)?;
        let noisy = MarginalVector::from_parts(w.clone(), real.cells().to_vec(), noisy_probs);
        let syn = synthetic_marginal(syn_table1, syn_table2, &state.adjacency, &w)?;
        record.selected.push(WorkloadRecord {
            workload: w.describe(syn_table1.schema(), syn_table2.schema()),
            error_after_noise: tv_score(&noisy, &syn)?,
        });
        state.selected.push(SelectedWorkload { workload: w, noisy, iteration });
    }

    // Keep only the accumulated workloads with the highest current error for
    // this iteration's optimization; computed against the stored noisy
    // answers, so it spends no extra budget.
    let mut errors = Vec::with_capacity(state.selected.len());
    for (i, s) in state.selected.iter().enumerate() {
        let syn = synthetic_marginal(syn_table1, syn_table2, &state.adjacency, &s.workload)?;
        errors.push((i, tv_score(&s.noisy, &syn)?));
    }
    errors.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let mut top: Vec<usize> =
        errors.iter().take(cfg.top_error_workloads).map(|&(i, _)| i).collect();
    top.sort_unstable();

    let mut q_full = QueryMatrix::new(syn_table1.n_rows(), syn_table2.n_rows());
    let mut a_hat = Vec::new();
    for &i in &top {
        let s = &state.selected[i];
        q_full.push_workload(&s.workload, syn_table1, syn_table2)?;
        a_hat.extend_from_slice(s.noisy.probs());
        record
            .optimized_workloads
            .push(s.workload.describe(syn_table1.schema(), syn_table2.schema()));
    }
    if q_full.query_count() == 0 {
        state.iteration += 1;
        return Ok(record);
    }

    let selectors = draw_slices(
        &state.adjacency,
        cfg.slice_rows,
        cfg.slice_cols,
        cfg.n_slices,
        cfg.min_related_fraction,
        &mut rngs.slicing,
    )?;
    for sel in &selectors {
        let optimized = optimize_slice(
            &mut state.adjacency,
            &state.selected,
            &top,
            &q_full,
            &a_hat,
            syn_table1,
            syn_table2,
            cfg,
            sel,
            rngs,
        )?;
        record.slice_edge_counts.push(optimized);
    }
    debug_assert_eq!(state.adjacency.edge_count(), cfg.m_syn, "edge conservation");

    state.iteration += 1;
    Ok(record)
}

/// Re-optimizes one slice in place and returns the number of edges it moved
/// (zero means the slice was skipped for holding no edges).
#[allow(clippy::too_many_arguments)]
fn optimize_slice(
    adjacency: &mut BiAdjacency,
    selected: &[SelectedWorkload],
    top: &[usize],
    q_full: &QueryMatrix,
    a_hat: &[f64],
    syn_table1: &Table,
    syn_table2: &Table,
    cfg: &SynthesisConfig,
    sel: &SliceSelector,
    rngs: &mut SynthesisRngs,
) -> Result<usize, OrchestratorError> {
    // Split current edges into the slice's product set and the fixed rest.
    // For one-to-many only rows whose single edge lies inside the slice may
    // be reassigned, so the sub-problem shrinks to those rows.
    let mut inside: Vec<(usize, usize)> = Vec::new();
    let mut outside: Vec<(usize, usize)> = Vec::new();
    for (i, j) in adjacency.edges() {
        if sel.rows().binary_search(&i).is_ok() && sel.cols().binary_search(&j).is_ok() {
            inside.push((i, j));
        } else {
            outside.push((i, j));
        }
    }
    let m_slice = inside.len();
    if m_slice == 0 {
        return Ok(0);
    }

    let active = match cfg.kind {
        RelationKind::ManyToMany => sel.clone(),
        RelationKind::OneToMany => {
            // Child rows have exactly one edge, so the inside rows are
            // already unique and sorted.
            let rows: Vec<usize> = inside.iter().map(|&(i, _)| i).collect();
            SliceSelector::new(rows, sel.cols().to_vec())?
        }
    };

    // The stored answers cover the whole adjacency; subtract the fixed
    // outside contribution and renormalize to the slice's mass so the slice
    // objective is the global one up to a constant factor.
    let m_syn = cfg.m_syn as f64;
    let mut a_slice = Vec::with_capacity(a_hat.len());
    let mut offset = 0;
    for &i in top {
        let w = selected[i].workload();
        let out_counts = compute_cross_counts(syn_table1, syn_table2, outside.iter().copied(), w)?;
        for (cell, &c_out) in out_counts.iter().enumerate() {
            a_slice.push((m_syn * a_hat[offset + cell] - c_out as f64) / m_slice as f64);
        }
        offset += out_counts.len();
    }

    let q_slice = q_full.restrict(&active);
    let init = adjacency.slice(&active)?;
    let patch = match cfg.kind {
        RelationKind::ManyToMany => {
            let sol = pgd_solve(&q_slice, &a_slice, m_slice as f64, &cfg.pgd, &init, &mut rngs.pgd)?;
            sample_biadjacency(&sol.weights, m_slice, &mut rngs.sampling)?
        }
        RelationKind::OneToMany => {
            let sol = pgd_solve_one_to_many(&q_slice, &a_slice, &cfg.pgd, &init, &mut rngs.pgd)?;
            categorical_round(sol.weights.values(), &mut rngs.sampling)?
        }
    };
    adjacency.reinsert(&active, &patch)?;
    Ok(m_slice)
}

/// Runs the full loop and returns the synthetic database plus its
/// reproducibility manifest, budget report, and noise-free evaluation.
pub fn synthesize(
    real_db: &RelationalDatabase,
    syn_table1: &Table,
    syn_table2: &Table,
    cfg: &SynthesisConfig,
) -> Result<(RelationalDatabase, RunReport), OrchestratorError> {
    if syn_table1.schema() != real_db.table1().schema() {
        return Err(OrchestratorError::SchemaMismatch { table: 1 });
    }
    if syn_table2.schema() != real_db.table2().schema() {
        return Err(OrchestratorError::SchemaMismatch { table: 2 });
    }
    cfg.validate(syn_table1.n_rows(), syn_table2.n_rows())?;
    if real_db.adjacency().edge_count() == 0 {
        return Err(OrchestratorError::EmptyRealDatabase);
    }

    let streams = RngStreams::new(cfg.seed);
    let mut rngs = SynthesisRngs::new(cfg.seed);
    let adjacency = initialize_adjacency(
        syn_table1.n_rows(),
        syn_table2.n_rows(),
        cfg.m_syn,
        cfg.kind,
        &mut streams.stream("adjacency-init"),
    )?;
    let ledger = BudgetLedger::from_eps_delta(
        cfg.eps_rel,
        cfg.delta_rel,
        cfg.workloads_per_iteration,
        cfg.iterations,
        cfg.alpha,
    )?;
    let mut state = RunState::new(adjacency, ledger);
    let mut iterations = Vec::with_capacity(cfg.iterations);
    for _ in 0..cfg.iterations {
        iterations.push(run_iteration(&mut state, real_db, syn_table1, syn_table2, cfg, &mut rngs)?);
    }

    let budget = state.ledger.report(cfg.delta_rel)?;
    let manifest = RunManifest {
        seed: cfg.seed,
        config: cfg.clone(),
        iterations,
        ledger: state.ledger.clone(),
    };
    let syn_db = RelationalDatabase::new(
        syn_table1.clone(),
        syn_table2.clone(),
        state.into_adjacency(),
        cfg.kind,
    )?;
    let evaluation = evaluate(real_db, &syn_db, cfg.marginal_order)?;
    Ok((syn_db, RunReport { manifest, budget, evaluation }))
}

/// Noise-free error of the synthetic database against the real one over all
/// cross workloads of order `k`.
pub fn evaluate(
    real_db: &RelationalDatabase,
    syn_db: &RelationalDatabase,
    k: usize,
) -> Result<EvaluationReport, OrchestratorError> {
    if syn_db.table1().schema() != real_db.table1().schema() {
        return Err(OrchestratorError::SchemaMismatch { table: 1 });
    }
    if syn_db.table2().schema() != real_db.table2().schema() {
        return Err(OrchestratorError::SchemaMismatch { table: 2 });
    }
    let workloads =
        enumerate_cross_workloads(real_db.table1().schema(), real_db.table2().schema(), k)?;
    let mut per_workload = Vec::with_capacity(workloads.len());
    let mut total = 0.0;
    for w in &workloads {
        let real = compute_cross_marginal(real_db, w)?;
        let syn = compute_cross_marginal(syn_db, w)?;
        let l1_error: f64 =
            real.probs().iter().zip(syn.probs()).map(|(a, b)| (a - b).abs()).sum();
        let mse = workload_mse(syn.probs(), real.probs(), 1)?;
        total += l1_error;
        per_workload.push(WorkloadErrorReport {
            workload: w.describe(real_db.table1().schema(), real_db.table2().schema()),
            l1_error,
            mse,
        });
    }
    let average_l1_error =
        if per_workload.is_empty() { 0.0 } else { total / per_workload.len() as f64 };
    Ok(EvaluationReport { marginal_order: k, average_l1_error, per_workload })
}
