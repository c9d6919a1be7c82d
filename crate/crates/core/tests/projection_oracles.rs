//! Cross-checks the projection and descent code against independent
//! reference algorithms: a closed-form breakpoint scan and a KKT active-set
//! enumeration for the capped-simplex projection, a dense Jacobi eigensolver
//! for the top singular value, and an accelerated solver for the relaxed
//! least-squares objective.

use rand::Rng;
use relsyn_core::marginals::QueryMatrix;
use relsyn_core::projection::{pgd_solve, power_iteration, project_capped_simplex, PgdConfig};
use relsyn_core::relational::DenseMatrix;
use relsyn_core::rng::{RngStreams, StreamRng};

/// Closed-form projection: the clipped sum g(y) = Σ clip(b_i + y) is
/// piecewise linear with breakpoints at −b_i and 1 − b_i, so the shift
/// solving g(y) = m falls out of one scan over the sorted breakpoints.
fn project_by_breakpoint_scan(b: &[f64], m: f64) -> Vec<f64> {
    let clipped = |y: f64| -> Vec<f64> { b.iter().map(|&bi| (bi + y).clamp(0.0, 1.0)).collect() };
    let g = |y: f64| -> f64 { clipped(y).iter().sum() };
    let mut breakpoints: Vec<f64> = b.iter().flat_map(|&bi| [-bi, 1.0 - bi]).collect();
    breakpoints.sort_by(f64::total_cmp);
    if m <= g(breakpoints[0]) {
        return clipped(breakpoints[0]);
    }
    for w in breakpoints.windows(2) {
        let (lo, hi) = (w[0], w[1]);
        let (g_lo, g_hi) = (g(lo), g(hi));
        if m < g_lo || m > g_hi {
            continue;
        }
        let mid = 0.5 * (lo + hi);
        let slope = b.iter().filter(|&&bi| bi + mid > 0.0 && bi + mid < 1.0).count();
        let y = if slope == 0 { lo } else { lo + (m - g_lo) / slope as f64 };
        return clipped(y);
    }
    clipped(*breakpoints.last().unwrap())
}

/// Exhaustive KKT oracle: try every assignment of coordinates to
/// {clamped at 0, clamped at 1, free} and keep the consistent ones. The
/// projection is unique, so all consistent assignments must agree.
fn project_by_kkt_enumeration(b: &[f64], m: f64) -> Vec<f64> {
    let n = b.len();
    let slack = 1e-9;
    let mut found: Option<Vec<f64>> = None;
    for code in 0..3usize.pow(n as u32) {
        let mut rest = code;
        let mut at_zero = Vec::new();
        let mut at_one = Vec::new();
        let mut free = Vec::new();
        for i in 0..n {
            match rest % 3 {
                0 => at_zero.push(i),
                1 => at_one.push(i),
                _ => free.push(i),
            }
            rest /= 3;
        }
        let y = if free.is_empty() {
            if (at_one.len() as f64 - m).abs() > slack {
                continue;
            }
            let upper = at_zero.iter().map(|&i| -b[i]).fold(f64::INFINITY, f64::min);
            let lower = at_one.iter().map(|&i| 1.0 - b[i]).fold(f64::NEG_INFINITY, f64::max);
            if lower > upper + slack {
                continue;
            }
            lower.min(upper)
        } else {
            let free_sum: f64 = free.iter().map(|&i| b[i]).sum();
            (m - at_one.len() as f64 - free_sum) / free.len() as f64
        };
        let consistent = at_zero.iter().all(|&i| b[i] + y <= slack)
            && at_one.iter().all(|&i| b[i] + y >= 1.0 - slack)
            && free.iter().all(|&i| b[i] + y >= -slack && b[i] + y <= 1.0 + slack);
        if !consistent {
            continue;
        }
        let x: Vec<f64> = b.iter().map(|&bi| (bi + y).clamp(0.0, 1.0)).collect();
        match &found {
            None => found = Some(x),
            Some(prev) => {
                for (p, q) in prev.iter().zip(&x) {
                    assert!(
                        (p - q).abs() <= 1e-8,
                        "two consistent KKT assignments disagree: {p} vs {q}"
                    );
                }
            }
        }
    }
    found.expect("some KKT assignment must be consistent")
}

/// Top singular value via the dense Gram matrix and cyclic Jacobi rotations.
#[allow(clippy::needless_range_loop)]
fn sigma_max_by_jacobi(q: &QueryMatrix) -> f64 {
    let n = q.n_rows() * q.n_cols();
    let mut gram = vec![vec![0.0f64; n]; n];
    for query in q.queries() {
        let mut support = Vec::new();
        for &i in &query.u {
            for &j in &query.v {
                support.push(i * q.n_cols() + j);
            }
        }
        for &x in &support {
            for &y in &support {
                gram[x][y] += 1.0;
            }
        }
    }
    for _sweep in 0..100 {
        let mut off = 0.0;
        for p in 0..n {
            for r in p + 1..n {
                off += gram[p][r] * gram[p][r];
            }
        }
        if off < 1e-22 {
            break;
        }
        for p in 0..n {
            for r in p + 1..n {
                let apr = gram[p][r];
                if apr.abs() < 1e-18 {
                    continue;
                }
                let theta = 0.5 * (gram[r][r] - gram[p][p]) / apr;
                let t = if theta >= 0.0 {
                    1.0 / (theta + (theta * theta + 1.0).sqrt())
                } else {
                    -1.0 / (-theta + (theta * theta + 1.0).sqrt())
                };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akr) = (gram[k][p], gram[k][r]);
                    gram[k][p] = c * akp - s * akr;
                    gram[k][r] = s * akp + c * akr;
                }
                for k in 0..n {
                    let (apk, ark) = (gram[p][k], gram[r][k]);
                    gram[p][k] = c * apk - s * ark;
                    gram[r][k] = s * apk + c * ark;
                }
            }
        }
    }
    (0..n).map(|i| gram[i][i]).fold(0.0f64, f64::max).max(0.0).sqrt()
}

/// Accelerated projected gradient on the same objective, as an independent
/// reference for where the minimum sits.
fn fista_objective(
    q: &QueryMatrix,
    a_hat: &[f64],
    m: f64,
    init: &[f64],
    iters: usize,
    sigma: f64,
) -> f64 {
    let n = init.len();
    let tol = 1e-9 * n as f64;
    let step = 0.5 * (m / sigma) * (m / sigma);
    let mut x = project_capped_simplex(init, m, tol).unwrap();
    let mut x_prev = x.clone();
    let mut t: f64 = 1.0;
    let mut grad = vec![0.0; n];
    for _ in 0..iters {
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let momentum = (t - 1.0) / t_next;
        let y: Vec<f64> =
            x.iter().zip(&x_prev).map(|(a, b)| a + momentum * (a - b)).collect();
        let mut residual = q.values_flat(&y, m);
        for (r, a) in residual.iter_mut().zip(a_hat) {
            *r -= a;
        }
        q.apply_qt_flat(&residual, &mut grad);
        let stepped: Vec<f64> =
            y.iter().zip(&grad).map(|(yi, gi)| yi - step * (2.0 / m) * gi).collect();
        x_prev = x;
        x = project_capped_simplex(&stepped, m, tol).unwrap();
        t = t_next;
    }
    let values = q.values_flat(&x, m);
    values.iter().zip(a_hat).map(|(v, a)| (v - a) * (v - a)).sum()
}

fn random_subset(n: usize, rng: &mut StreamRng) -> Vec<usize> {
    loop {
        let s: Vec<usize> = (0..n).filter(|_| rng.gen_bool(0.4)).collect();
        if !s.is_empty() {
            return s;
        }
    }
}

fn random_queries(n1: usize, n2: usize, count: usize, rng: &mut StreamRng) -> QueryMatrix {
    let mut q = QueryMatrix::new(n1, n2);
    for _ in 0..count {
        q.push_query(random_subset(n1, rng), random_subset(n2, rng));
    }
    q
}

#[test]
fn projection_matches_breakpoint_scan() {
    let mut rng = RngStreams::new(401).stream("proj-scan");
    for trial in 0..200 {
        let n = rng.gen_range(1..=40);
        let b: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.5..2.5)).collect();
        let m = rng.gen_range(0.0..=n as f64);
        let got = project_capped_simplex(&b, m, 1e-9 * n as f64).unwrap();
        let want = project_by_breakpoint_scan(&b, m);
        for (i, (g, w)) in got.iter().zip(&want).enumerate() {
            assert!(
                (g - w).abs() <= 1e-7,
                "trial {trial}, coord {i}: impl {g} vs scan {w}"
            );
        }
        assert!((got.iter().sum::<f64>() - m).abs() <= 1e-6 * n as f64);
    }
}

#[test]
fn projection_matches_kkt_enumeration() {
    let mut rng = RngStreams::new(402).stream("proj-kkt");
    for trial in 0..60 {
        let n = rng.gen_range(1..=8);
        let b: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..2.0)).collect();
        // Mix integer and fractional targets so pure-clamp solutions appear.
        let m = if trial % 3 == 0 {
            rng.gen_range(0..=n) as f64
        } else {
            rng.gen_range(0.0..=n as f64)
        };
        let got = project_capped_simplex(&b, m, 1e-9 * n as f64).unwrap();
        let kkt = project_by_kkt_enumeration(&b, m);
        let scan = project_by_breakpoint_scan(&b, m);
        for i in 0..n {
            assert!((kkt[i] - scan[i]).abs() <= 1e-7, "oracles disagree at {i}");
            assert!((got[i] - kkt[i]).abs() <= 1e-7, "impl vs kkt at {i}");
        }
    }
}

#[test]
fn power_iteration_matches_jacobi_eigensolver() {
    let mut rng = RngStreams::new(403).stream("sigma");
    for trial in 0..30 {
        let n1 = rng.gen_range(2..=6);
        let n2 = rng.gen_range(2..=6);
        let q = random_queries(n1, n2, rng.gen_range(1..=12), &mut rng);
        let jacobi = sigma_max_by_jacobi(&q);
        let power = power_iteration(&q, 500, &mut rng);
        assert!(
            (power - jacobi).abs() <= 5e-3 * jacobi.max(1.0),
            "trial {trial}: power {power} vs jacobi {jacobi}"
        );
    }
}

#[test]
fn power_iteration_matches_closed_form_on_full_query() {
    // A single query covering every cell has Gram = all-ones, whose largest
    // eigenvalue is the cell count.
    let mut rng = RngStreams::new(404).stream("sigma-full");
    for (n1, n2) in [(2, 3), (4, 4), (5, 7)] {
        let mut q = QueryMatrix::new(n1, n2);
        q.push_query((0..n1).collect(), (0..n2).collect());
        let want = ((n1 * n2) as f64).sqrt();
        let power = power_iteration(&q, 300, &mut rng);
        let jacobi = sigma_max_by_jacobi(&q);
        assert!((power - want).abs() <= 1e-9 * want);
        assert!((jacobi - want).abs() <= 1e-9 * want);
    }
}

#[test]
fn descent_agrees_with_accelerated_reference() {
    let mut rng = RngStreams::new(405).stream("fista");
    for trial in 0..8 {
        let (n1, n2) = (3, 4);
        let n = n1 * n2;
        let q = random_queries(n1, n2, 2 * n, &mut rng);
        let m = rng.gen_range(2..=9) as f64;
        // Inconsistent target: perturb reachable answers so the minimum is
        // strictly positive and unique-valued.
        let feasible: Vec<f64> = {
            let raw: Vec<f64> = (0..n).map(|_| rng.gen()).collect();
            project_capped_simplex(&raw, m, 1e-9 * n as f64).unwrap()
        };
        let mut a_hat = q.values_flat(&feasible, m);
        for a in a_hat.iter_mut() {
            *a += rng.gen_range(-0.05..0.05);
        }
        let init = DenseMatrix::from_vec(
            n1,
            n2,
            (0..n).map(|_| rng.gen_range(0.0..1.0)).collect(),
        );
        let cfg = PgdConfig { iterations: 4000, ..Default::default() };
        let sol = pgd_solve(&q, &a_hat, m, &cfg, &init, &mut rng).unwrap();
        let sigma = sol.sigma_max.expect("queries present");
        let reference = fista_objective(&q, &a_hat, m, init.data(), 4000, sigma);
        assert!(
            (sol.objective - reference).abs() <= 1e-5 * (1.0 + reference),
            "trial {trial}: descent {} vs reference {reference}",
            sol.objective
        );
    }
}

#[test]
fn objective_envelope_holds_with_known_optimum() {
    // With â reachable the minimum is zero, so the standard projected
    // gradient guarantee f(b_T) ≤ (3·‖b₀−b*‖²/η + f(b₀)) / T is checkable.
    let mut rng = RngStreams::new(406).stream("envelope");
    for &iterations in &[5usize, 20, 100] {
        for trial in 0..5 {
            let (n1, n2) = (4, 4);
            let n = n1 * n2;
            let q = random_queries(n1, n2, 10, &mut rng);
            let m = rng.gen_range(3..=12) as f64;
            let optimum: Vec<f64> = {
                let raw: Vec<f64> = (0..n).map(|_| rng.gen()).collect();
                project_capped_simplex(&raw, m, 1e-9 * n as f64).unwrap()
            };
            let a_hat = q.values_flat(&optimum, m);
            let init = DenseMatrix::from_vec(
                n1,
                n2,
                (0..n).map(|_| rng.gen_range(0.0..1.0)).collect(),
            );
            let cfg = PgdConfig { iterations, ..Default::default() };
            let sol = pgd_solve(&q, &a_hat, m, &cfg, &init, &mut rng).unwrap();
            if sol.step_size == 0.0 {
                continue;
            }
            let b0 = project_capped_simplex(init.data(), m, 1e-9 * n as f64).unwrap();
            let dist_sq: f64 =
                b0.iter().zip(&optimum).map(|(a, b)| (a - b) * (a - b)).sum();
            let f_b0 = sol.objective_trace[0];
            let bound = (3.0 * dist_sq / sol.step_size + f_b0) / iterations as f64;
            assert!(
                sol.objective <= bound * 1.000001 + 1e-9,
                "T = {iterations}, trial {trial}: f(b_T) = {} exceeds bound {bound}",
                sol.objective
            );
        }
    }
}
