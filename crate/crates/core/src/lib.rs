//! Differentially private synthesis of relational databases.
//!
//! Given a private two-table database whose relationships form a bipartite
//! graph, and two independently generated DP synthetic tables, this crate
//! learns a binary bi-adjacency matrix linking the synthetic tables so that
//! cross-table k-way marginals approximate the private data. The total
//! privacy cost of the released linking table is tracked as zero-concentrated
//! differential privacy and reported as an (ε, δ) guarantee.
//!
//! The pipeline, driven by [`orchestrator::synthesize`]:
//!
//! 1. convert the (ε, δ) budget to a zCDP budget ρ and derive a per-round
//!    parameter ε₀ ([`privacy`]);
//! 2. each iteration, select the worst-approximated cross-table workloads
//!    with the exponential mechanism and release their marginals with the
//!    Gaussian mechanism ([`privacy`], [`marginals`]);
//! 3. optimize a relaxed [0,1] adjacency over random sub-blocks (slices) by
//!    projected gradient descent on a capped simplex ([`projection`]);
//! 4. round each optimized slice back to a binary matrix with an unbiased
//!    fixed-sum sampler, preserving the edge count exactly ([`sampler`]).
//!
//! [`baseline`] provides a deliberately simple DP single-table generator so
//! end-to-end runs do not require an external mechanism.

pub mod baseline;
pub mod marginals;
pub mod orchestrator;
pub mod privacy;
pub mod projection;
pub mod relational;
pub mod rng;
pub mod sampler;
