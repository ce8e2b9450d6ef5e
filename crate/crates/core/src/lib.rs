//! Deterministic certification of bagged ensembles against training-set
//! poisoning.
//!
//! The crate computes sample-wise and collective robustness certificates
//! for majority-vote ensembles whose sub-classifiers were trained on
//! subsampled training sets. Collective certificates are obtained by
//! solving a binary integer program over attack variables with an in-house
//! anytime branch-and-bound solver; the sound side of the solver's bound pair
//! is what gets certified, so an interrupted solve still yields a valid
//! (looser) certificate.
//!
//! Module map:
//!
//! - [`votes`]: vote matrices, budgets, certificates, voting semantics
//! - [`hash_bagging`]: hash-based subsampling and sub-trainset membership
//! - [`samplewise`]: per-prediction certificates and the breakable set
//! - [`bilp`]: attack problems in native form, [`standard`] in BILP standard form
//! - [`solver`]: branch-and-bound and the end-to-end `certify`
//! - [`decompose`]: sub-testset decomposition
//! - [`bound`]: tolerable-budget upper bound (max coverage)
//! - [`oracle`]: brute-force ground truth for small instances
//! - [`report`]: budget sweeps and CSV reports
//! - [`synthetic`]: seeded instance generators

pub mod bilp;
pub mod bound;
pub mod decompose;
pub mod error;
pub mod hash_bagging;
pub mod oracle;
pub mod report;
pub mod samplewise;
pub mod solver;
pub mod standard;
pub mod synthetic;
pub mod votes;

pub use bilp::{build_p1, build_p2, AttackStructure, BilpProblem, ProblemMode};
pub use bound::{tolerable_budget_exact, tolerable_budget_greedy, BudgetBound, Tolerable};
pub use decompose::{certify_decomposed, partition_testset};
pub use error::{CertError, Result};
pub use hash_bagging::{canonical_hash, subsample, Membership, PairStructure, SampleRecord};
pub use oracle::{brute_force_p1, brute_force_p2, OracleResult};
pub use samplewise::{min_controlled_to_break, omega, samplewise_collective_count};
pub use solver::{certify, solve, CertifyConfig, SolveLimits, SolveResult, SolveStatus};
pub use standard::{to_standard_form, StandardBilp};
pub use votes::{
    ensemble_predict, prediction_changed, relative_gap, Budget, CertStatus, Certificate, VoteMatrix,
};
