//! Projected gradient descent on the capped simplex.
//!
//! The relaxed linking problem is min ‖(1/m)·Q̂b − â‖² over the capped
//! simplex Ω = {0 ≤ b ≤ 1, 1ᵀb = m}. The Euclidean projection onto Ω has the
//! closed form x_i = clip(b_i + y, 0, 1) for a scalar shift y chosen so the
//! coordinates sum to m; y is found by bisection, since the sum is continuous
//! and non-decreasing in y. The gradient step size comes from the largest
//! singular value of Q̂, estimated matrix-free by power iteration on the
//! rank-1 query representation: with η = ½·(m/σ_max)², the objective gap
//! after T steps is at most (3‖b₀−b*‖²/η + f(b₀)−f(b*))/T.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::marginals::QueryMatrix;
use crate::relational::{DenseMatrix, WeightedBiAdjacency};

#[derive(Debug, Error)]
pub enum ProjectionError {
    #[error("target sum {m} outside [0, {n}]")]
    TargetOutOfRange { m: f64, n: usize },
    #[error("projection tolerance must be positive, got {0}")]
    InvalidTolerance(f64),
    #[error("iteration count must be at least 1")]
    NoIterations,
    #[error("edge target m must be positive, got {0}")]
    ZeroEdgeTarget(f64),
    #[error("init is {got_r}x{got_c}, queries expect {want_r}x{want_c}")]
    InitDims { got_r: usize, got_c: usize, want_r: usize, want_c: usize },
    #[error("bisection failed to reach the sum tolerance")]
    BisectionStall,
    #[error(transparent)]
    Relational(#[from] crate::relational::RelationalError),
}

/// Tuning knobs for the solver.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PgdConfig {
    /// Gradient steps per solve.
    pub iterations: usize,
    /// Power-iteration steps for the σ_max estimate.
    pub power_iterations: usize,
    /// Absolute tolerance on the projected sum; defaults to 1e-9·N.
    pub projection_tolerance: Option<f64>,
    /// Fixed step size; when set, power iteration is skipped.
    pub step_size_override: Option<f64>,
}

impl Default for PgdConfig {
    fn default() -> Self {
        Self {
            iterations: 300,
            power_iterations: 200,
            projection_tolerance: None,
            step_size_override: None,
        }
    }
}

impl PgdConfig {
    pub fn validate(&self) -> Result<(), ProjectionError> {
        if self.iterations == 0 {
            return Err(ProjectionError::NoIterations);
        }
        if let Some(tol) = self.projection_tolerance {
            if !tol.is_finite() || tol <= 0.0 {
                return Err(ProjectionError::InvalidTolerance(tol));
            }
        }
        Ok(())
    }

    fn tolerance_for(&self, n: usize) -> f64 {
        self.projection_tolerance.unwrap_or(1e-9 * n.max(1) as f64)
    }
}

/// Result of a solve: the relaxed slice, the final objective
/// ‖(1/m)·Q̂b − â‖², and the per-iteration objective trace (trace[0] is the
/// objective at the projected initializer).
#[derive(Debug, Clone)]
pub struct PgdSolution {
    pub weights: WeightedBiAdjacency,
    pub objective: f64,
    pub objective_trace: Vec<f64>,
    pub sigma_max: Option<f64>,
    pub step_size: f64,
}

/// Euclidean projection of `b` onto {0 ≤ x ≤ 1, 1ᵀx = m}.
///
/// Bisection shifts all coordinates by a common y and clips; afterwards the
/// residual m − Σx is folded into strictly interior coordinates so downstream
/// consumers see a sum that matches the target to machine precision.
pub fn project_capped_simplex(b: &[f64], m: f64, tol: f64) -> Result<Vec<f64>, ProjectionError> {
    let n = b.len();
    if !(0.0..=n as f64).contains(&m) || !m.is_finite() {
        return Err(ProjectionError::TargetOutOfRange { m, n });
    }
    if !tol.is_finite() || tol <= 0.0 {
        return Err(ProjectionError::InvalidTolerance(tol));
    }
    if m == 0.0 {
        return Ok(vec![0.0; n]);
    }
    if m == n as f64 {
        return Ok(vec![1.0; n]);
    }

    let clipped_sum = |y: f64| -> f64 { b.iter().map(|&v| (v + y).clamp(0.0, 1.0)).sum() };
    let b_max = b.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let b_min = b.iter().copied().fold(f64::INFINITY, f64::min);
    let mut lo = -b_max;
    let mut hi = 1.0 - b_min;
    let mut g_lo = clipped_sum(lo);
    let mut g_hi = clipped_sum(hi);
    let mut y = 0.5 * (lo + hi);
    let mut converged = false;
    for _ in 0..200 {
        y = 0.5 * (lo + hi);
        let g = clipped_sum(y);
        // The clipped sum is non-decreasing in y, even in floating point.
        assert!(g >= g_lo && g <= g_hi, "clipped sum must be monotone in the shift");
        if (g - m).abs() <= tol {
            converged = true;
            break;
        }
        if g < m {
            lo = y;
            g_lo = g;
        } else {
            hi = y;
            g_hi = g;
        }
        if lo == hi {
            break;
        }
    }
    if !converged {
        return Err(ProjectionError::BisectionStall);
    }

    let mut x: Vec<f64> = b.iter().map(|&v| (v + y).clamp(0.0, 1.0)).collect();
    repair_sum(&mut x, m);
    Ok(x)
}

/// Folds the (tiny) residual m − Σx into coordinates with headroom, strictly
/// interior ones first, without violating the box constraints.
fn repair_sum(x: &mut [f64], m: f64) {
    for _ in 0..x.len() + 8 {
        let res = m - x.iter().sum::<f64>();
        if res == 0.0 {
            return;
        }
        // Prefer the strictly interior coordinate with the most headroom in
        // the needed direction; fall back to boundary coordinates.
        let headroom = |v: f64| if res > 0.0 { 1.0 - v } else { v };
        let mut best: Option<usize> = None;
        let mut best_room = 0.0;
        let mut best_interior = false;
        for (i, &v) in x.iter().enumerate() {
            let interior = v > 0.0 && v < 1.0;
            let room = headroom(v);
            if room <= 0.0 {
                continue;
            }
            if (interior && !best_interior) || (interior == best_interior && room > best_room) {
                best = Some(i);
                best_room = room;
                best_interior = interior;
            }
        }
        match best {
            Some(i) => {
                let delta = res.clamp(-x[i], 1.0 - x[i]);
                x[i] = (x[i] + delta).clamp(0.0, 1.0);
            }
            None => return,
        }
    }
}

/// Largest singular value of the query matrix, estimated by power iteration
/// with matrix-free matvecs w = Q̂ᵀ(Q̂v).
pub fn power_iteration<R: Rng + ?Sized>(q: &QueryMatrix, iters: usize, rng: &mut R) -> f64 {
    let n = q.n_rows() * q.n_cols();
    if n == 0 || q.query_count() == 0 {
        return 0.0;
    }
    let mut v: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    let norm = l2_norm(&v);
    if norm == 0.0 {
        return 0.0;
    }
    v.iter_mut().for_each(|e| *e /= norm);
    let mut w = vec![0.0; n];
    for _ in 0..iters {
        let qv = q.values_flat(&v, 1.0);
        q.apply_qt_flat(&qv, &mut w);
        let norm = l2_norm(&w);
        if norm == 0.0 {
            return 0.0;
        }
        std::mem::swap(&mut v, &mut w);
        v.iter_mut().for_each(|e| *e /= norm);
    }
    l2_norm(&q.values_flat(&v, 1.0))
}

fn l2_norm(v: &[f64]) -> f64 {
    v.iter().map(|e| e * e).sum::<f64>().sqrt()
}

/// Projected gradient descent for the relaxed linking objective
/// f(b) = ‖(1/m)·Q̂b − â‖² over the capped simplex with total mass `m_syn`.
pub fn pgd_solve<R: Rng + ?Sized>(
    q: &QueryMatrix,
    a_hat: &[f64],
    m_syn: f64,
    cfg: &PgdConfig,
    init: &DenseMatrix,
    rng: &mut R,
) -> Result<PgdSolution, ProjectionError> {
    solve_inner(q, a_hat, m_syn, cfg, init, rng, Constraint::Global)
}

/// One-to-many variant: every row of the slice must carry exactly one unit of
/// mass, so the projection is applied independently per row with target 1.
pub fn pgd_solve_one_to_many<R: Rng + ?Sized>(
    q: &QueryMatrix,
    a_hat: &[f64],
    cfg: &PgdConfig,
    init: &DenseMatrix,
    rng: &mut R,
) -> Result<PgdSolution, ProjectionError> {
    solve_inner(q, a_hat, init.rows() as f64, cfg, init, rng, Constraint::PerRow)
}

#[derive(Clone, Copy, PartialEq)]
enum Constraint {
    /// 1ᵀb = m over the whole slice.
    Global,
    /// Each row sums to 1.
    PerRow,
}

fn solve_inner<R: Rng + ?Sized>(
    q: &QueryMatrix,
    a_hat: &[f64],
    m_syn: f64,
    cfg: &PgdConfig,
    init: &DenseMatrix,
    rng: &mut R,
    constraint: Constraint,
) -> Result<PgdSolution, ProjectionError> {
    cfg.validate()?;
    assert_eq!(a_hat.len(), q.query_count(), "answer vector length mismatch");
    if init.rows() != q.n_rows() || init.cols() != q.n_cols() {
        return Err(ProjectionError::InitDims {
            got_r: init.rows(),
            got_c: init.cols(),
            want_r: q.n_rows(),
            want_c: q.n_cols(),
        });
    }
    if !m_syn.is_finite() || m_syn <= 0.0 {
        return Err(ProjectionError::ZeroEdgeTarget(m_syn));
    }
    let (rows, cols) = (init.rows(), init.cols());
    let n = rows * cols;
    let project = |b: &[f64]| -> Result<Vec<f64>, ProjectionError> {
        match constraint {
            Constraint::Global => project_capped_simplex(b, m_syn, cfg.tolerance_for(n)),
            Constraint::PerRow => {
                let tol = cfg.tolerance_for(cols);
                let mut out = Vec::with_capacity(n);
                for r in 0..rows {
                    out.extend(project_capped_simplex(&b[r * cols..(r + 1) * cols], 1.0, tol)?);
                }
                Ok(out)
            }
        }
    };

    let mut b = project(init.data())?;
    let objective_of = |vals: &[f64]| -> f64 {
        vals.iter().zip(a_hat).map(|(v, a)| (v - a) * (v - a)).sum()
    };

    if q.query_count() == 0 {
        let weights =
            WeightedBiAdjacency::new(DenseMatrix::from_vec(rows, cols, b), m_syn)?;
        return Ok(PgdSolution {
            weights,
            objective: 0.0,
            objective_trace: vec![0.0],
            sigma_max: None,
            step_size: 0.0,
        });
    }

    let (step_size, sigma_max) = match cfg.step_size_override {
        Some(eta) => (eta, None),
        None => {
            let sigma = power_iteration(q, cfg.power_iterations, rng);
            if sigma == 0.0 {
                // No query touches the slice: the objective is constant.
                let vals = q.values_flat(&b, m_syn);
                let objective = objective_of(&vals);
                let weights =
                    WeightedBiAdjacency::new(DenseMatrix::from_vec(rows, cols, b), m_syn)?;
                return Ok(PgdSolution {
                    weights,
                    objective,
                    objective_trace: vec![objective],
                    sigma_max: Some(0.0),
                    step_size: 0.0,
                });
            }
            (0.5 * (m_syn / sigma) * (m_syn / sigma), Some(sigma))
        }
    };

    let mut trace = Vec::with_capacity(cfg.iterations + 1);
    let mut grad = vec![0.0; n];
    for _ in 0..cfg.iterations {
        let mut residual = q.values_flat(&b, m_syn);
        for (r, a) in residual.iter_mut().zip(a_hat) {
            *r -= a;
        }
        trace.push(residual.iter().map(|r| r * r).sum());
        q.apply_qt_flat(&residual, &mut grad);
        let scale = 2.0 / m_syn;
        for (bi, gi) in b.iter_mut().zip(&grad) {
            *bi -= step_size * scale * gi;
        }
        b = project(&b)?;
    }
    let final_vals = q.values_flat(&b, m_syn);
    let objective = objective_of(&final_vals);
    trace.push(objective);

    let weights = WeightedBiAdjacency::new(DenseMatrix::from_vec(rows, cols, b), m_syn)?;
    Ok(PgdSolution { weights, objective, objective_trace: trace, sigma_max, step_size })
}
