//! Minimal differentially private single-table synthesizer: Gaussian-noised
//! one-way marginals sampled independently per feature, or a chain over
//! noised consecutive-pair marginals. It exists so end-to-end runs need no
//! external single-table mechanism; it makes no attempt at their quality.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::privacy::{eps_delta_to_zcdp, PrivacyError};
use crate::relational::{RelationalError, Table};
use crate::sampler::categorical;

#[derive(Debug, Error)]
pub enum BaselineError {
    #[error("marginal order must be 1 or 2, got {0}")]
    InvalidOrder(usize),
    #[error("n_out must be at least 1")]
    NoOutputRows,
    #[error("input table has no rows")]
    EmptyTable,
    #[error(transparent)]
    Privacy(#[from] PrivacyError),
    #[error(transparent)]
    Relational(#[from] RelationalError),
}

fn default_order() -> usize {
    1
}

/// Per-table generation budget and shape.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaselineConfig {
    pub eps: f64,
    pub delta: f64,
    pub n_out: usize,
    /// 1 samples features independently, 2 chains consecutive pairs.
    #[serde(default = "default_order")]
    pub order: usize,
}

impl BaselineConfig {
    pub fn validate(&self) -> Result<(), BaselineError> {
        if self.n_out == 0 {
            return Err(BaselineError::NoOutputRows);
        }
        if self.order != 1 && self.order != 2 {
            return Err(BaselineError::InvalidOrder(self.order));
        }
        Ok(())
    }
}

/// A generated table together with the exact zCDP amount charged for it.
#[derive(Debug, Clone)]
pub struct BaselineOutcome {
    pub table: Table,
    pub rho_charged: f64,
}

/// Splits `rho` over `parts` charges whose float sum is exactly `rho`: the
/// last share absorbs the rounding of the first `parts - 1`.
fn split_evenly(rho: f64, parts: usize) -> Vec<f64> {
    if parts == 0 {
        return Vec::new();
    }
    let share = rho / parts as f64;
    let mut out = vec![share; parts - 1];
    let running: f64 = out.iter().sum();
    out.push(rho - running);
    out
}

/// Clips negatives to zero and renormalizes; an all-zero vector becomes
/// uniform so sampling never stalls.
fn normalize_or_uniform(v: &mut [f64]) {
    for p in v.iter_mut() {
        if *p < 0.0 {
            *p = 0.0;
        }
    }
    let total: f64 = v.iter().sum();
    if total > 0.0 {
        for p in v.iter_mut() {
            *p /= total;
        }
    } else {
        let u = 1.0 / v.len() as f64;
        v.fill(u);
    }
}

fn perturb<R: Rng + ?Sized>(probs: &mut [f64], sigma: f64, rng: &mut R) {
    for p in probs.iter_mut() {
        let z: f64 = rng.sample(StandardNormal);
        *p += sigma * z;
    }
    normalize_or_uniform(probs);
}

fn one_way_probs(real: &Table, f: usize) -> Vec<f64> {
    let mut probs = vec![0.0; real.schema().cardinality(f)];
    for row in real.rows() {
        probs[row[f]] += 1.0;
    }
    let n = real.n_rows() as f64;
    for p in probs.iter_mut() {
        *p /= n;
    }
    probs
}

/// Row-major joint distribution of features `f` and `f + 1`.
fn pair_probs(real: &Table, f: usize) -> Vec<f64> {
    let c_next = real.schema().cardinality(f + 1);
    let mut probs = vec![0.0; real.schema().cardinality(f) * c_next];
    for row in real.rows() {
        probs[row[f] * c_next + row[f + 1]] += 1.0;
    }
    let n = real.n_rows() as f64;
    for p in probs.iter_mut() {
        *p /= n;
    }
    probs
}

/// Generates `n_out` rows under the input's schema from Gaussian-perturbed
/// marginals. The (eps, delta) budget converts to zCDP and splits evenly
/// over the chosen marginals; one row change moves any marginal by at most
/// 1/n in two cells, so each query has L2 sensitivity √2/n.
pub fn generate_table<R: Rng + ?Sized>(
    real: &Table,
    cfg: &BaselineConfig,
    rng: &mut R,
) -> Result<BaselineOutcome, BaselineError> {
    cfg.validate()?;
    let n = real.n_rows();
    if n == 0 {
        return Err(BaselineError::EmptyTable);
    }
    let schema = real.schema().clone();
    let d = schema.len();
    let rho = eps_delta_to_zcdp(cfg.eps, cfg.delta)?;
    let l2_sensitivity = std::f64::consts::SQRT_2 / n as f64;
    let order = if d == 1 { 1 } else { cfg.order };

    let draw = |probs: &[f64], rng: &mut R| -> usize {
        categorical(probs, rng).expect("normalized distribution has positive mass")
    };

    let (rows, rho_charged) = match order {
        1 => {
            let shares = split_evenly(rho, d);
            let mut marginals = Vec::with_capacity(d);
            for (f, &rho_f) in shares.iter().enumerate() {
                let mut probs = one_way_probs(real, f);
                perturb(&mut probs, l2_sensitivity / (2.0 * rho_f).sqrt(), rng);
                marginals.push(probs);
            }
            let rows = (0..cfg.n_out)
                .map(|_| marginals.iter().map(|m| draw(m, rng)).collect())
                .collect();
            (rows, shares.iter().sum())
        }
        2 => {
            let shares = split_evenly(rho, d - 1);
            let mut pairs = Vec::with_capacity(d - 1);
            for (f, &rho_f) in shares.iter().enumerate() {
                let mut probs = pair_probs(real, f);
                perturb(&mut probs, l2_sensitivity / (2.0 * rho_f).sqrt(), rng);
                pairs.push(probs);
            }
            // The chain's root distribution is the first pair marginalized
            // over its second coordinate.
            let c1 = schema.cardinality(1);
            let mut first = vec![0.0; schema.cardinality(0)];
            for (a, p) in first.iter_mut().enumerate() {
                *p = pairs[0][a * c1..(a + 1) * c1].iter().sum();
            }
            normalize_or_uniform(&mut first);
            let mut conditional = Vec::new();
            let rows = (0..cfg.n_out)
                .map(|_| {
                    let mut row = Vec::with_capacity(d);
                    row.push(draw(&first, rng));
                    for f in 1..d {
                        let c_f = schema.cardinality(f);
                        let prev = row[f - 1];
                        conditional.clear();
                        conditional
                            .extend_from_slice(&pairs[f - 1][prev * c_f..(prev + 1) * c_f]);
                        normalize_or_uniform(&mut conditional);
                        row.push(draw(&conditional, rng));
                    }
                    row
                })
                .collect();
            (rows, shares.iter().sum())
        }
        _ => unreachable!("validate admits only orders 1 and 2"),
    };
    Ok(BaselineOutcome { table: Table::new(schema, rows)?, rho_charged })
}
