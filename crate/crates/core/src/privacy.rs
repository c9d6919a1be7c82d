//! zCDP budget accounting and the two release mechanisms.
//!
//! The relationship budget (ε_rel, δ_rel) is converted to a zCDP budget
//! ρ_rel = (√(log(1/δ)+ε) − √log(1/δ))², which composes additively. A run of
//! T iterations selecting K workloads each gets the per-round parameter
//! ε₀ = √(2·ρ_rel/(K·T)); every selection costs α·ε₀²/2 and every noisy
//! answer (1−α)·ε₀²/2, so a full run spends exactly ρ_rel.
//!
//! Selection uses the exponential mechanism over total-variation scores with
//! score sensitivity d_max/m; answers use the Gaussian mechanism with L2
//! sensitivity √2·d_max/m, where d_max bounds the degree of any private
//! record and m is the private edge count (both treated as public constants).

use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;
use thiserror::Error;

use crate::marginals::MarginalVector;

#[derive(Debug, Error)]
pub enum PrivacyError {
    #[error("epsilon must be positive, got {0}")]
    InvalidEpsilon(f64),
    #[error("delta must lie in (0, 1), got {0}")]
    InvalidDelta(f64),
    #[error("rho must be non-negative, got {0}")]
    InvalidRho(f64),
    #[error("alpha must lie in [0, 1], got {0}")]
    InvalidAlpha(f64),
    #[error("alpha = 1 leaves no Gaussian budget")]
    NoGaussianBudget,
    #[error("per-round epsilon must be positive, got {0}")]
    InvalidEps0(f64),
    #[error("budget exhausted: spent {spent}, total {total}, next charge {charge}")]
    BudgetExhausted { spent: f64, total: f64, charge: f64 },
    #[error("sensitivity requires m > 0 and d_max >= 1 (got m = {m}, d_max = {d_max})")]
    InvalidSensitivity { m: f64, d_max: usize },
    #[error("cannot select from an empty score list")]
    EmptyScores,
    #[error("selection and iteration counts must be positive")]
    EmptySchedule,
    #[error("input is not a probability vector (sum {sum}, min {min})")]
    NotProbabilityVector { sum: f64, min: f64 },
}

/// ρ = (√(log(1/δ)+ε) − √log(1/δ))², the largest zCDP budget whose standard
/// conversion back to (ε', δ) satisfies ε' ≤ ε.
pub fn eps_delta_to_zcdp(eps: f64, delta: f64) -> Result<f64, PrivacyError> {
    if !eps.is_finite() || eps <= 0.0 {
        return Err(PrivacyError::InvalidEpsilon(eps));
    }
    if !delta.is_finite() || delta <= 0.0 || delta >= 1.0 {
        return Err(PrivacyError::InvalidDelta(delta));
    }
    let l = (1.0 / delta).ln();
    let root = (l + eps).sqrt() - l.sqrt();
    Ok(root * root)
}

/// The (ε, δ) guarantee implied by ρ-zCDP: ε = ρ + 2√(ρ·log(1/δ)).
pub fn zcdp_to_eps(rho: f64, delta: f64) -> Result<f64, PrivacyError> {
    if !rho.is_finite() || rho < 0.0 {
        return Err(PrivacyError::InvalidRho(rho));
    }
    if !delta.is_finite() || delta <= 0.0 || delta >= 1.0 {
        return Err(PrivacyError::InvalidDelta(delta));
    }
    Ok(rho + 2.0 * (rho * (1.0 / delta).ln()).sqrt())
}

/// Sequential composition of the two table mechanisms and the relationship
/// mechanism: budgets add componentwise.
pub fn compose_total(
    eps1: f64,
    delta1: f64,
    eps2: f64,
    delta2: f64,
    eps_rel: f64,
    delta_rel: f64,
) -> (f64, f64) {
    (eps1 + eps2 + eps_rel, delta1 + delta2 + delta_rel)
}

/// Sensitivity constants of the private database: edge count m and the degree
/// bound d_max. One record change moves at most d_max edges, so a marginal
/// moves by at most d_max/m per cell pair.
#[derive(Debug, Clone, Copy)]
pub struct Sensitivity {
    m: f64,
    d_max: usize,
}

impl Sensitivity {
    pub fn new(m: f64, d_max: usize) -> Result<Self, PrivacyError> {
        if !m.is_finite() || m <= 0.0 || d_max == 0 {
            return Err(PrivacyError::InvalidSensitivity { m, d_max });
        }
        Ok(Self { m, d_max })
    }

    pub fn m(&self) -> f64 {
        self.m
    }

    pub fn d_max(&self) -> usize {
        self.d_max
    }

    /// Sensitivity of a total-variation score.
    pub fn score_sensitivity(&self) -> f64 {
        self.d_max as f64 / self.m
    }

    /// L2 sensitivity of a marginal probability vector.
    pub fn l2_sensitivity(&self) -> f64 {
        std::f64::consts::SQRT_2 * self.d_max as f64 / self.m
    }
}

/// Running zCDP account for one synthesis run.
#[derive(Debug, Clone, Serialize)]
pub struct BudgetLedger {
    rho_total: f64,
    k_per_iteration: usize,
    iterations: usize,
    alpha: f64,
    eps0: f64,
    rho_spent: f64,
}

/// Summary of a ledger for reports.
#[derive(Debug, Clone, Serialize)]
pub struct BudgetReport {
    pub rho_total: f64,
    pub eps0: f64,
    pub per_iteration_spend: f64,
    pub eps_equivalent_at_delta: f64,
}

impl BudgetLedger {
    /// Plans a run of `iterations` rounds with `k_per_iteration` selections
    /// each, splitting every selection's ε₀²/2 as α exponential + (1−α)
    /// Gaussian. An empty schedule (zero rounds or zero selections) is a
    /// valid degenerate plan: nothing may be charged against it.
    pub fn new(
        rho_total: f64,
        k_per_iteration: usize,
        iterations: usize,
        alpha: f64,
    ) -> Result<Self, PrivacyError> {
        if !rho_total.is_finite() || rho_total < 0.0 {
            return Err(PrivacyError::InvalidRho(rho_total));
        }
        if !(0.0..=1.0).contains(&alpha) {
            return Err(PrivacyError::InvalidAlpha(alpha));
        }
        let calls = k_per_iteration * iterations;
        let eps0 =
            if calls == 0 { 0.0 } else { (2.0 * rho_total / calls as f64).sqrt() };
        Ok(Self { rho_total, k_per_iteration, iterations, alpha, eps0, rho_spent: 0.0 })
    }

    pub fn from_eps_delta(
        eps_rel: f64,
        delta_rel: f64,
        k_per_iteration: usize,
        iterations: usize,
        alpha: f64,
    ) -> Result<Self, PrivacyError> {
        Self::new(eps_delta_to_zcdp(eps_rel, delta_rel)?, k_per_iteration, iterations, alpha)
    }

    pub fn rho_total(&self) -> f64 {
        self.rho_total
    }

    pub fn rho_spent(&self) -> f64 {
        self.rho_spent
    }

    pub fn remaining(&self) -> f64 {
        self.rho_total - self.rho_spent
    }

    pub fn eps0(&self) -> f64 {
        self.eps0
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    fn charge(&mut self, cost: f64) -> Result<(), PrivacyError> {
        if self.k_per_iteration * self.iterations == 0 {
            return Err(PrivacyError::EmptySchedule);
        }
        if self.rho_spent + cost > self.rho_total + 1e-12 {
            return Err(PrivacyError::BudgetExhausted {
                spent: self.rho_spent,
                total: self.rho_total,
                charge: cost,
            });
        }
        self.rho_spent += cost;
        Ok(())
    }

    /// Accounts one exponential-mechanism call: α·ε₀²/2.
    pub fn charge_selection(&mut self) -> Result<(), PrivacyError> {
        self.charge(self.alpha * self.eps0 * self.eps0 / 2.0)
    }

    /// Accounts one Gaussian release: (1−α)·ε₀²/2.
    pub fn charge_answer(&mut self) -> Result<(), PrivacyError> {
        self.charge((1.0 - self.alpha) * self.eps0 * self.eps0 / 2.0)
    }

    pub fn report(&self, delta: f64) -> Result<BudgetReport, PrivacyError> {
        Ok(BudgetReport {
            rho_total: self.rho_total,
            eps0: self.eps0,
            per_iteration_spend: self.k_per_iteration as f64 * self.eps0 * self.eps0 / 2.0,
            eps_equivalent_at_delta: zcdp_to_eps(self.rho_total, delta)?,
        })
    }
}

/// Samples an index with probability softmax(√α·ε₀·(m/d_max)·scores).
///
/// With α = 0 the coefficient is zero and selection is uniform, matching the
/// zero charge the ledger records for it.
pub fn exponential_select<R: Rng + ?Sized>(
    scores: &[f64],
    sens: &Sensitivity,
    alpha: f64,
    eps0: f64,
    rng: &mut R,
) -> Result<usize, PrivacyError> {
    if scores.is_empty() {
        return Err(PrivacyError::EmptyScores);
    }
    if !(0.0..=1.0).contains(&alpha) {
        return Err(PrivacyError::InvalidAlpha(alpha));
    }
    let coeff = alpha.sqrt() * eps0 / sens.score_sensitivity();
    let max_logit = scores.iter().map(|s| coeff * s).fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = scores.iter().map(|s| (coeff * s - max_logit).exp()).collect();
    let total: f64 = weights.iter().sum();
    let mut u = rng.gen::<f64>() * total;
    for (i, w) in weights.iter().enumerate() {
        u -= w;
        if u < 0.0 {
            return Ok(i);
        }
    }
    Ok(scores.len() - 1)
}

/// Standard deviation of the Gaussian answer noise: √2·d_max/(m·√(1−α)·ε₀).
pub fn gaussian_noise_std(sens: &Sensitivity, alpha: f64, eps0: f64) -> Result<f64, PrivacyError> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(PrivacyError::InvalidAlpha(alpha));
    }
    if alpha == 1.0 {
        return Err(PrivacyError::NoGaussianBudget);
    }
    if !eps0.is_finite() || eps0 <= 0.0 {
        return Err(PrivacyError::InvalidEps0(eps0));
    }
    Ok(sens.l2_sensitivity() / ((1.0 - alpha).sqrt() * eps0))
}

/// Adds independent zero-mean Gaussian noise to every cell of a marginal.
/// The output is deliberately neither clipped nor renormalized: the
/// least-squares target consumes raw answers, and clipping would bias it.
pub fn gaussian_perturb<R: Rng + ?Sized>(
    p: &MarginalVector,
    sens: &Sensitivity,
    alpha: f64,
    eps0: f64,
    rng: &mut R,
) -> Result<Vec<f64>, PrivacyError> {
    let sum: f64 = p.probs().iter().sum();
    let min = p.probs().iter().copied().fold(f64::INFINITY, f64::min);
    if (sum - 1.0).abs() > 1e-9 || min < -1e-9 {
        return Err(PrivacyError::NotProbabilityVector { sum, min });
    }
    let std = gaussian_noise_std(sens, alpha, eps0)?;
    Ok(p.probs().iter().map(|&v| v + std * rng.sample::<f64, _>(StandardNormal)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStreams;

    #[test]
    fn zcdp_conversion_vanishes_with_epsilon() {
        let rho = eps_delta_to_zcdp(1e-9, 1e-6).unwrap();
        assert!(rho < 1e-12, "rho = {rho}");
    }

    #[test]
    fn zcdp_conversion_roundtrip_unit_epsilon() {
        let rho = eps_delta_to_zcdp(1.0, 1e-6).unwrap();
        let eps = zcdp_to_eps(rho, 1e-6).unwrap();
        assert!((eps - 1.0).abs() <= 1e-9, "eps = {eps}");
    }

    #[test]
    fn zcdp_conversion_roundtrip_random() {
        let mut rng = RngStreams::new(11).stream("roundtrip");
        use rand::Rng;
        for _ in 0..100 {
            let eps = 10f64.powf(rng.gen_range(-2.0..2.0));
            let delta = 10f64.powf(rng.gen_range(-12.0..-1.0));
            let rho = eps_delta_to_zcdp(eps, delta).unwrap();
            let back = zcdp_to_eps(rho, delta).unwrap();
            assert!(
                ((back - eps) / eps).abs() <= 1e-9,
                "eps={eps} delta={delta} back={back}"
            );
        }
    }

    #[test]
    fn zcdp_to_eps_examples() {
        assert_eq!(zcdp_to_eps(0.0, 1e-6).unwrap(), 0.0);
        let a = zcdp_to_eps(0.01, 1e-6).unwrap();
        let b = zcdp_to_eps(0.02, 1e-6).unwrap();
        assert!(b > a);
    }

    #[test]
    fn conversion_rejects_bad_inputs() {
        assert!(eps_delta_to_zcdp(0.0, 1e-6).is_err());
        assert!(eps_delta_to_zcdp(-1.0, 1e-6).is_err());
        assert!(eps_delta_to_zcdp(1.0, 0.0).is_err());
        assert!(eps_delta_to_zcdp(1.0, 1.0).is_err());
        assert!(zcdp_to_eps(-0.1, 1e-6).is_err());
    }

    #[test]
    fn compose_total_examples() {
        assert_eq!(compose_total(1.0, 1e-6, 1.0, 1e-6, 2.0, 1e-6), (4.0, 3e-6));
        assert_eq!(compose_total(0.0, 0.0, 0.0, 0.0, 0.0, 0.0), (0.0, 0.0));
        let a = compose_total(1.0, 1e-7, 2.0, 2e-7, 3.0, 3e-7);
        let b = compose_total(3.0, 3e-7, 1.0, 1e-7, 2.0, 2e-7);
        assert_eq!(a, b);
    }

    #[test]
    fn ledger_full_run_spends_exactly_rho() {
        let rho = eps_delta_to_zcdp(1.0, 1e-6).unwrap();
        let (k, t) = (3, 15);
        let mut ledger = BudgetLedger::new(rho, k, t, 0.2).unwrap();
        assert!((ledger.eps0() - (2.0 * rho / (k * t) as f64).sqrt()).abs() == 0.0);
        for _ in 0..t {
            for _ in 0..k {
                ledger.charge_selection().unwrap();
                ledger.charge_answer().unwrap();
            }
        }
        assert!((ledger.rho_spent() - rho).abs() <= 1e-12, "spent {}", ledger.rho_spent());
        assert!(ledger.charge_selection().is_err());
    }

    #[test]
    fn ledger_report_fields() {
        let ledger = BudgetLedger::from_eps_delta(2.0, 1e-6, 3, 15, 0.2).unwrap();
        let report = ledger.report(1e-6).unwrap();
        assert!((report.eps0 - (2.0 * report.rho_total / 45.0).sqrt()).abs() < 1e-15);
        assert!((report.per_iteration_spend - 3.0 * report.eps0 * report.eps0 / 2.0).abs() < 1e-15);
        assert!((report.eps_equivalent_at_delta - 2.0).abs() < 1e-9);
    }

    #[test]
    fn sensitivity_formulas() {
        let s = Sensitivity::new(100.0, 5).unwrap();
        assert_eq!(s.score_sensitivity(), 0.05);
        assert!((s.l2_sensitivity() - std::f64::consts::SQRT_2 * 0.05).abs() < 1e-15);
        assert!(Sensitivity::new(0.0, 5).is_err());
        assert!(Sensitivity::new(10.0, 0).is_err());
    }

    #[test]
    fn exponential_single_candidate() {
        let sens = Sensitivity::new(100.0, 5).unwrap();
        let mut rng = RngStreams::new(1).stream("sel");
        assert_eq!(exponential_select(&[0.4], &sens, 0.5, 0.1, &mut rng).unwrap(), 0);
        assert!(exponential_select(&[], &sens, 0.5, 0.1, &mut rng).is_err());
    }

    #[test]
    fn exponential_uniform_on_equal_scores() {
        let sens = Sensitivity::new(100.0, 5).unwrap();
        let mut rng = RngStreams::new(2).stream("sel");
        let trials = 100_000;
        let mut counts = [0u32; 4];
        for _ in 0..trials {
            counts[exponential_select(&[0.3; 4], &sens, 0.5, 0.1, &mut rng).unwrap()] += 1;
        }
        let p = 0.25;
        let sigma = (p * (1.0 - p) / trials as f64).sqrt();
        for c in counts {
            let freq = c as f64 / trials as f64;
            assert!((freq - p).abs() <= 3.0 * sigma, "freq {freq}");
        }
    }

    #[test]
    fn exponential_two_point_softmax_closed_form() {
        let sens = Sensitivity::new(100.0, 5).unwrap();
        let (alpha, eps0, s) = (0.5f64, 0.1, 0.8);
        let c = alpha.sqrt() * eps0 * sens.m() / sens.d_max() as f64;
        let p_second = (c * s).exp() / (1.0 + (c * s).exp());
        let mut rng = RngStreams::new(9).stream("sel");
        let trials = 100_000;
        let mut second = 0u32;
        for _ in 0..trials {
            if exponential_select(&[0.0, s], &sens, alpha, eps0, &mut rng).unwrap() == 1 {
                second += 1;
            }
        }
        let freq = second as f64 / trials as f64;
        let sigma = (p_second * (1.0 - p_second) / trials as f64).sqrt();
        assert!((freq - p_second).abs() <= 3.0 * sigma, "freq {freq} vs {p_second}");
    }

    #[test]
    fn exponential_alpha_zero_is_uniform() {
        // Zero exponential budget must not let scores influence selection.
        let sens = Sensitivity::new(100.0, 5).unwrap();
        let mut rng = RngStreams::new(3).stream("sel");
        let trials = 100_000;
        let mut second = 0u32;
        for _ in 0..trials {
            if exponential_select(&[0.0, 0.9], &sens, 0.0, 0.1, &mut rng).unwrap() == 1 {
                second += 1;
            }
        }
        let freq = second as f64 / trials as f64;
        let sigma = (0.25 / trials as f64).sqrt();
        assert!((freq - 0.5).abs() <= 3.0 * sigma, "freq {freq}");
    }

    #[test]
    fn gaussian_noise_std_formula() {
        let sens = Sensitivity::new(10_000.0, 10).unwrap();
        let std = gaussian_noise_std(&sens, 0.2, 0.05).unwrap();
        assert!((std - 0.03162277660168379).abs() < 1e-15);
        // Halving eps0 doubles sigma.
        let double = gaussian_noise_std(&sens, 0.2, 0.025).unwrap();
        assert_eq!(double, 2.0 * std);
        assert!(matches!(gaussian_noise_std(&sens, 1.0, 0.05), Err(PrivacyError::NoGaussianBudget)));
        assert!(gaussian_noise_std(&sens, 0.2, 0.0).is_err());
    }

    fn unit_marginal(probs: Vec<f64>) -> MarginalVector {
        use crate::marginals::Workload;
        let w = Workload::cross(vec![0], vec![0]).unwrap();
        let cells = (0..probs.len()).map(|c| (vec![c], vec![0])).collect();
        MarginalVector::from_parts(w, cells, probs)
    }

    #[test]
    fn gaussian_perturb_is_unbiased_and_scaled() {
        let sens = Sensitivity::new(10_000.0, 10).unwrap();
        let p = unit_marginal(vec![0.25, 0.75]);
        let expected_std = gaussian_noise_std(&sens, 0.2, 0.05).unwrap();
        let mut rng = RngStreams::new(4).stream("noise");
        let trials = 50_000;
        let mut sum = 0.0;
        let mut sumsq = 0.0;
        let n = (trials * 2) as f64;
        for _ in 0..trials {
            let noisy = gaussian_perturb(&p, &sens, 0.2, 0.05, &mut rng).unwrap();
            for (cell, base) in noisy.iter().zip(p.probs()) {
                let noise = cell - base;
                sum += noise;
                sumsq += noise * noise;
            }
        }
        let mean = sum / n;
        let std = (sumsq / n - mean * mean).sqrt();
        assert!(mean.abs() <= 3.0 * expected_std / n.sqrt(), "mean {mean}");
        assert!((std - expected_std).abs() / expected_std <= 0.02, "std {std}");
    }

    #[test]
    fn gaussian_perturb_rejects_non_probability_input() {
        let sens = Sensitivity::new(100.0, 5).unwrap();
        let mut rng = RngStreams::new(5).stream("noise");
        let bad_sum = unit_marginal(vec![0.5, 0.6]);
        assert!(matches!(
            gaussian_perturb(&bad_sum, &sens, 0.2, 0.05, &mut rng),
            Err(PrivacyError::NotProbabilityVector { .. })
        ));
        let negative = unit_marginal(vec![1.2, -0.2]);
        assert!(gaussian_perturb(&negative, &sens, 0.2, 0.05, &mut rng).is_err());
        let ok = unit_marginal(vec![0.5, 0.5]);
        assert!(gaussian_perturb(&ok, &sens, 0.2, 0.05, &mut rng).is_ok());
    }

    #[test]
    fn noise_streams_are_independent() {
        // Correlation between two named streams, and between consecutive
        // cells within one stream, both near zero.
        let sens = Sensitivity::new(1000.0, 2).unwrap();
        let p = unit_marginal(vec![0.5, 0.5]);
        let streams = RngStreams::new(6);
        let mut rng_a = streams.stream("noise/a");
        let mut rng_b = streams.stream("noise/b");
        let n = 100_000;
        let mut xs = Vec::with_capacity(n);
        let mut ys = Vec::with_capacity(n);
        for _ in 0..n / 2 {
            let a = gaussian_perturb(&p, &sens, 0.2, 0.05, &mut rng_a).unwrap();
            let b = gaussian_perturb(&p, &sens, 0.2, 0.05, &mut rng_b).unwrap();
            xs.extend(a.iter().zip(p.probs()).map(|(v, q)| v - q));
            ys.extend(b.iter().zip(p.probs()).map(|(v, q)| v - q));
        }
        assert!(correlation(&xs, &ys).abs() < 0.01);
        // Lag-1 within one stream.
        let lag_x = &xs[..xs.len() - 1];
        let lag_y = &xs[1..];
        assert!(correlation(lag_x, lag_y).abs() < 0.01);
    }

    fn correlation(x: &[f64], y: &[f64]) -> f64 {
        let n = x.len() as f64;
        let mx = x.iter().sum::<f64>() / n;
        let my = y.iter().sum::<f64>() / n;
        let mut cov = 0.0;
        let mut vx = 0.0;
        let mut vy = 0.0;
        for (a, b) in x.iter().zip(y) {
            cov += (a - mx) * (b - my);
            vx += (a - mx) * (a - mx);
            vy += (b - my) * (b - my);
        }
        cov / (vx.sqrt() * vy.sqrt())
    }
}
