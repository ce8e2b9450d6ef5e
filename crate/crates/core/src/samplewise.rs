//! Sample-wise certificates and the breakable set.
//!
//! An attacker who fully controls a set of sub-classifiers breaks prediction
//! `ŷ` in favour of rival `y` best by redirecting every controlled vote to
//! `y`. Relative to the original tally this closes the gap between `ŷ` and
//! `y` by a *swing* of 2 per controlled `ŷ`-voter, 1 per controlled voter of
//! a third class and 0 per controlled `y`-voter. The prediction flips once
//! the accumulated swing reaches the deficit
//! `d(y) = o(ŷ) - o(y) + 1 - [y < ŷ]`.

use serde::{Deserialize, Serialize};

use crate::hash_bagging::PairStructure;
use crate::votes::{Budget, VoteMatrix};

/// Votes the rival `y` still has to gain on `pred` before overturning it.
pub fn deficit(counts: &[usize], pred: usize, rival: usize) -> i64 {
    let tie_bonus = i64::from(rival < pred);
    counts[pred] as i64 - counts[rival] as i64 + 1 - tie_bonus
}

/// Gap closed towards `rival` by controlling a classifier that voted `vote`.
pub fn swing(vote: usize, pred: usize, rival: usize) -> usize {
    if vote == pred {
        2
    } else if vote == rival {
        0
    } else {
        1
    }
}

/// `o(ŷ) - max_{y≠ŷ}[o(y) + [y < ŷ]]`; `i64::MAX` when there is no rival
/// class.
pub fn margin(counts: &[usize], pred: usize) -> i64 {
    (0..counts.len())
        .filter(|&y| y != pred)
        .map(|y| deficit(counts, pred, y) - 1)
        .min()
        .unwrap_or(i64::MAX)
}

/// Whether controlling the classifiers flagged in `influenced` overturns
/// the prediction of this row.
pub fn row_broken(counts: &[usize], pred: usize, votes_row: &[usize], influenced: &[bool]) -> bool {
    let mut per_class = vec![0usize; counts.len()];
    let mut total = 0usize;
    for (g, &v) in votes_row.iter().enumerate() {
        if influenced[g] {
            per_class[v] += 1;
            total += 1;
        }
    }
    let own = per_class[pred];
    (0..counts.len()).filter(|&y| y != pred).any(|y| {
        let gained = 2 * own + (total - own - per_class[y]);
        deficit(counts, pred, y) <= gained as i64
    })
}

/// Fewest controlled classifiers that overturn the prediction, ignoring any
/// pair structure. Returns `G + 1` when even full control is not enough.
pub fn min_controlled_to_break(counts: &[usize], pred: usize, votes_row: &[usize]) -> usize {
    let g = votes_row.len();
    let mut best = g + 1;
    for y in (0..counts.len()).filter(|&y| y != pred) {
        let need = deficit(counts, pred, y);
        let mut swings: Vec<usize> = votes_row.iter().map(|&v| swing(v, pred, y)).collect();
        swings.sort_unstable_by(|a, b| b.cmp(a));
        let mut acc = 0i64;
        for (t, s) in swings.iter().enumerate() {
            if acc >= need {
                best = best.min(t);
                break;
            }
            acc += *s as i64;
            if acc >= need {
                best = best.min(t + 1);
                break;
            }
        }
    }
    best
}

/// Best attack on a single row when each pair may lose at most `cap`
/// classifiers. Returns the controlled classifiers if the row breaks.
pub fn break_with_pair_caps(
    counts: &[usize],
    pred: usize,
    votes_row: &[usize],
    pairs: &PairStructure,
    cap: usize,
) -> Option<Vec<usize>> {
    for y in (0..counts.len()).filter(|&y| y != pred) {
        let need = deficit(counts, pred, y);
        let mut chosen = Vec::new();
        let mut gained = 0i64;
        for range in pairs.pair_ranges() {
            let mut members: Vec<usize> = range.collect();
            // stable: lowest index first among equal swings
            members.sort_by_key(|&g| std::cmp::Reverse(swing(votes_row[g], pred, y)));
            for &g in members.iter().take(cap) {
                let s = swing(votes_row[g], pred, y);
                if s > 0 {
                    gained += s as i64;
                    chosen.push(g);
                }
            }
        }
        if gained >= need {
            chosen.sort_unstable();
            return Some(chosen);
        }
    }
    None
}

/// Per-row sample-wise certificate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleCertificate {
    pub margin: i64,
    pub min_controlled_to_break: usize,
    pub breakable_at_cap: bool,
}

pub fn sample_certificates(
    votes: &VoteMatrix,
    pairs: &PairStructure,
    budget: Budget,
) -> Vec<SampleCertificate> {
    let cap = budget.per_pair_cap();
    (0..votes.num_samples())
        .map(|j| {
            let (counts, pred, row) = (votes.counts(j), votes.prediction(j), votes.votes(j));
            SampleCertificate {
                margin: margin(counts, pred),
                min_controlled_to_break: min_controlled_to_break(counts, pred, row),
                breakable_at_cap: break_with_pair_caps(counts, pred, row, pairs, cap).is_some(),
            }
        })
        .collect()
}

/// Largest margin that can still be overturned within the budget.
pub fn omega_threshold(pairs: &PairStructure, budget: Budget) -> i64 {
    2 * (pairs.num_pairs() * budget.per_pair_cap()) as i64
}

/// Rows whose margin does not rule out an attack within the budget. A sound
/// superset of the rows that are individually breakable.
pub fn omega(votes: &VoteMatrix, pairs: &PairStructure, budget: Budget) -> Vec<usize> {
    let threshold = omega_threshold(pairs, budget);
    (0..votes.num_samples())
        .filter(|&j| margin(votes.counts(j), votes.prediction(j)) <= threshold)
        .collect()
}

/// Rows that some attack within the per-pair caps overturns on its own.
pub fn breakable_rows(votes: &VoteMatrix, pairs: &PairStructure, budget: Budget) -> Vec<usize> {
    let cap = budget.per_pair_cap();
    (0..votes.num_samples())
        .filter(|&j| {
            break_with_pair_caps(
                votes.counts(j),
                votes.prediction(j),
                votes.votes(j),
                pairs,
                cap,
            )
            .is_some()
        })
        .collect()
}

/// Sample-wise collective robustness: rows that no attack within the
/// budget can overturn individually.
pub fn samplewise_collective_count(
    votes: &VoteMatrix,
    pairs: &PairStructure,
    budget: Budget,
) -> usize {
    votes.num_samples() - breakable_rows(votes, pairs, budget).len()
}
