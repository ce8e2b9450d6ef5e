//! Brute-force ground truth for small instances.
//!
//! Enumerates every feasible attack and, for each test row, every rival
//! class: all controlled votes are redirected to the rival, the tally is
//! recomputed and the plain argmax (smallest index wins ties) decides
//! whether the prediction moved. None of this shares code with the swing
//! arithmetic used by the solver.

use crate::error::{CertError, Result};
use crate::hash_bagging::{Membership, PairStructure};
use crate::votes::{Budget, VoteMatrix};

pub const MAX_ORACLE_CLASSIFIERS: usize = 20;
pub const MAX_ORACLE_PATTERNS: usize = 20;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OracleResult {
    pub max_changed: usize,
    /// Controlled classifiers (P2) or modified training samples (P1) of the
    /// first optimal attack in enumeration order.
    pub witness: Vec<usize>,
}

fn winner(tally: &[usize]) -> usize {
    let mut best = 0;
    for y in 0..tally.len() {
        if tally[y] > tally[best] {
            best = y;
        }
    }
    best
}

/// Whether some redirection of the controlled votes moves row `j`.
fn row_flips(votes: &VoteMatrix, j: usize, controlled: &[bool]) -> bool {
    let row = votes.votes(j);
    let original = votes.prediction(j);
    (0..votes.num_classes())
        .filter(|&y| y != original)
        .any(|rival| {
            let mut tally = vec![0usize; votes.num_classes()];
            for (g, &v) in row.iter().enumerate() {
                tally[if controlled[g] { rival } else { v }] += 1;
            }
            winner(&tally) != original
        })
}

fn changed_rows(votes: &VoteMatrix, rows: &[usize], controlled: &[bool]) -> usize {
    rows.iter()
        .filter(|&&j| row_flips(votes, j, controlled))
        .count()
}

/// Exact maximum number of rows an attack on hash bagging can overturn.
pub fn brute_force_p2(
    votes: &VoteMatrix,
    pairs: &PairStructure,
    budget: Budget,
) -> Result<OracleResult> {
    let rows: Vec<usize> = (0..votes.num_samples()).collect();
    brute_force_p2_rows(votes, pairs, budget, &rows)
}

pub fn brute_force_p2_rows(
    votes: &VoteMatrix,
    pairs: &PairStructure,
    budget: Budget,
    rows: &[usize],
) -> Result<OracleResult> {
    let g = votes.num_classifiers();
    if pairs.num_classifiers() != g {
        return Err(CertError::Dimension(
            "pair structure and votes disagree on G".into(),
        ));
    }
    if g > MAX_ORACLE_CLASSIFIERS {
        return Err(CertError::TooLarge(format!(
            "oracle enumerates 2^G attacks; G={g} exceeds {MAX_ORACLE_CLASSIFIERS}"
        )));
    }
    let cap = budget.per_pair_cap();
    let mut best = OracleResult {
        max_changed: 0,
        witness: Vec::new(),
    };
    let mut controlled = vec![false; g];
    for mask in 0u64..(1u64 << g) {
        let mut used = vec![0usize; pairs.num_pairs()];
        for (c, flag) in controlled.iter_mut().enumerate() {
            *flag = mask >> c & 1 == 1;
            if *flag {
                used[pairs.pair_of(c)] += 1;
            }
        }
        if used.iter().any(|&u| u > cap) {
            continue;
        }
        let changed = changed_rows(votes, rows, &controlled);
        if changed > best.max_changed {
            best = OracleResult {
                max_changed: changed,
                witness: (0..g).filter(|&c| controlled[c]).collect(),
            };
        }
    }
    Ok(best)
}

/// Exact maximum for vanilla bagging: every set of at most `r_mod`
/// distinct influence patterns, each represented by its first sample.
pub fn brute_force_p1(
    votes: &VoteMatrix,
    membership: &Membership,
    r_mod: usize,
) -> Result<OracleResult> {
    let rows: Vec<usize> = (0..votes.num_samples()).collect();
    brute_force_p1_rows(votes, membership, r_mod, &rows)
}

pub fn brute_force_p1_rows(
    votes: &VoteMatrix,
    membership: &Membership,
    r_mod: usize,
    rows: &[usize],
) -> Result<OracleResult> {
    let g = votes.num_classifiers();
    if membership.num_classifiers() != g {
        return Err(CertError::Dimension(
            "membership and votes disagree on G".into(),
        ));
    }
    let mut patterns: Vec<(&[usize], usize)> = Vec::new();
    for (i, set) in membership.sets().iter().enumerate() {
        if !patterns.iter().any(|(p, _)| *p == set.as_slice()) {
            patterns.push((set.as_slice(), i));
        }
    }
    if patterns.len() > MAX_ORACLE_PATTERNS {
        return Err(CertError::TooLarge(format!(
            "{} distinct influence patterns exceed the oracle limit {MAX_ORACLE_PATTERNS}",
            patterns.len()
        )));
    }
    let mut best = OracleResult {
        max_changed: 0,
        witness: Vec::new(),
    };
    for mask in 0u64..(1u64 << patterns.len()) {
        if mask.count_ones() as usize > r_mod {
            continue;
        }
        let mut controlled = vec![false; g];
        let mut samples = Vec::new();
        for (k, (pattern, first)) in patterns.iter().enumerate() {
            if mask >> k & 1 == 1 {
                samples.push(*first);
                for &c in pattern.iter() {
                    controlled[c] = true;
                }
            }
        }
        let changed = changed_rows(votes, rows, &controlled);
        if changed > best.max_changed {
            samples.sort_unstable();
            best = OracleResult {
                max_changed: changed,
                witness: samples,
            };
        }
    }
    Ok(best)
}
