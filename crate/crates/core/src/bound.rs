//! Upper bound on the tolerable number of poisoned samples.
//!
//! Once the poisoned samples together reach more than half of the
//! sub-classifiers, every prediction with a rival class can be overturned at
//! once. The smallest such set of samples is a max-coverage style search;
//! the exact variant is a branch-and-bound over deduplicated, undominated
//! patterns and the greedy variant gives a feasible (upper) estimate.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{CertError, Result};
use crate::hash_bagging::Membership;

pub const DEFAULT_EXACT_PATTERN_CAP: usize = 30;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Tolerable {
    Finite(usize),
    /// No set of samples reaches a majority of classifiers.
    Infinite,
}

impl fmt::Display for Tolerable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tolerable::Finite(n) => write!(f, "{n}"),
            Tolerable::Infinite => write!(f, "infinite"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BudgetBound {
    /// Exact minimum, when computed.
    pub r_bar: Option<Tolerable>,
    /// Size of the greedy cover.
    pub r_bar_upper: Tolerable,
    /// Training samples achieving the reported (exact if present) value.
    pub witness: Vec<usize>,
}

/// Classifiers needed for a strict majority of `G`.
fn majority(g: usize) -> usize {
    g / 2 + 1
}

/// Distinct non-empty patterns with their first sample, dominated ones
/// (strict subsets of another pattern) removed.
fn patterns(membership: &Membership) -> Vec<(Vec<usize>, usize)> {
    let mut first: BTreeMap<&[usize], usize> = BTreeMap::new();
    for (i, set) in membership.sets().iter().enumerate() {
        if !set.is_empty() {
            first.entry(set.as_slice()).or_insert(i);
        }
    }
    let all: Vec<(&[usize], usize)> = first.into_iter().collect();
    let is_subset = |a: &[usize], b: &[usize]| a.iter().all(|x| b.binary_search(x).is_ok());
    let mut kept: Vec<(Vec<usize>, usize)> = all
        .iter()
        .filter(|(p, _)| {
            !all.iter()
                .any(|(q, _)| q.len() > p.len() && is_subset(p, q))
        })
        .map(|(p, i)| (p.to_vec(), *i))
        .collect();
    kept.sort_by(|a, b| b.0.len().cmp(&a.0.len()).then(a.1.cmp(&b.1)));
    kept
}

/// Greedy max-coverage: keep adding the pattern with the most uncovered
/// classifiers until a strict majority is covered.
pub fn tolerable_budget_greedy(membership: &Membership) -> BudgetBound {
    let g = membership.num_classifiers();
    let need = majority(g);
    let pats = patterns(membership);
    let mut covered = vec![false; g];
    let mut count = 0;
    let mut witness = Vec::new();
    let mut used = vec![false; pats.len()];
    while count < need {
        let gain = |k: usize| pats[k].0.iter().filter(|&&c| !covered[c]).count();
        let best = (0..pats.len())
            .filter(|&k| !used[k])
            .max_by(|&a, &b| gain(a).cmp(&gain(b)).then(b.cmp(&a)));
        match best {
            Some(k) if gain(k) > 0 => {
                used[k] = true;
                for &c in &pats[k].0 {
                    if !covered[c] {
                        covered[c] = true;
                        count += 1;
                    }
                }
                witness.push(pats[k].1);
            }
            _ => {
                return BudgetBound {
                    r_bar: None,
                    r_bar_upper: Tolerable::Infinite,
                    witness: Vec::new(),
                }
            }
        }
    }
    witness.sort_unstable();
    BudgetBound {
        r_bar: None,
        r_bar_upper: Tolerable::Finite(witness.len()),
        witness,
    }
}

struct CoverSearch<'a> {
    pats: &'a [(Vec<usize>, usize)],
    need: usize,
    covered: Vec<usize>,
    count: usize,
    chosen: Vec<usize>,
}

impl CoverSearch<'_> {
    /// Can `k` more patterns from `start..` reach the majority?
    fn search(&mut self, start: usize, k: usize) -> bool {
        if self.count >= self.need {
            return true;
        }
        if k == 0 || start >= self.pats.len() {
            return false;
        }
        // patterns are sorted by size, so the next k are the largest left
        let optimistic: usize = self.pats[start..]
            .iter()
            .take(k)
            .map(|(p, _)| p.len())
            .sum();
        if self.count + optimistic < self.need {
            return false;
        }
        for idx in start..self.pats.len() {
            let rest: usize = self.pats[idx..].iter().take(k).map(|(p, _)| p.len()).sum();
            if self.count + rest < self.need {
                break;
            }
            for &c in &self.pats[idx].0 {
                if self.covered[c] == 0 {
                    self.count += 1;
                }
                self.covered[c] += 1;
            }
            self.chosen.push(idx);
            if self.search(idx + 1, k - 1) {
                return true;
            }
            self.chosen.pop();
            for &c in &self.pats[idx].0 {
                self.covered[c] -= 1;
                if self.covered[c] == 0 {
                    self.count -= 1;
                }
            }
        }
        false
    }
}

/// Exact minimum number of samples covering a strict majority of
/// classifiers, searching at most `pattern_cap` undominated patterns.
pub fn tolerable_budget_exact_with_cap(
    membership: &Membership,
    pattern_cap: usize,
) -> Result<BudgetBound> {
    let pats = patterns(membership);
    if pats.len() > pattern_cap {
        return Err(CertError::TooLarge(format!(
            "{} distinct patterns exceed the exact-search cap {pattern_cap}; use the greedy bound",
            pats.len()
        )));
    }
    let greedy = tolerable_budget_greedy(membership);
    let Tolerable::Finite(upper) = greedy.r_bar_upper else {
        return Ok(BudgetBound {
            r_bar: Some(Tolerable::Infinite),
            ..greedy
        });
    };
    let g = membership.num_classifiers();
    for k in 1..upper {
        let mut s = CoverSearch {
            pats: &pats,
            need: majority(g),
            covered: vec![0; g],
            count: 0,
            chosen: Vec::new(),
        };
        if s.search(0, k) {
            let mut witness: Vec<usize> = s.chosen.iter().map(|&idx| pats[idx].1).collect();
            witness.sort_unstable();
            return Ok(BudgetBound {
                r_bar: Some(Tolerable::Finite(k)),
                r_bar_upper: greedy.r_bar_upper,
                witness,
            });
        }
    }
    Ok(BudgetBound {
        r_bar: Some(Tolerable::Finite(upper)),
        ..greedy
    })
}

pub fn tolerable_budget_exact(membership: &Membership) -> Result<BudgetBound> {
    tolerable_budget_exact_with_cap(membership, DEFAULT_EXACT_PATTERN_CAP)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn exhaustive(m: &Membership) -> Option<usize> {
        let n = m.num_samples();
        let need = majority(m.num_classifiers());
        (0u32..(1 << n))
            .filter(|mask| {
                let mut cov = std::collections::BTreeSet::new();
                for i in 0..n {
                    if mask >> i & 1 == 1 {
                        cov.extend(m.set(i).iter().copied());
                    }
                }
                cov.len() >= need
            })
            .map(|mask| mask.count_ones() as usize)
            .min()
    }

    #[test]
    fn single_large_pattern() {
        let m = Membership::vanilla(4, vec![vec![0], vec![0, 1, 2]]).unwrap();
        let b = tolerable_budget_exact(&m).unwrap();
        assert_eq!(b.r_bar, Some(Tolerable::Finite(1)));
        assert_eq!(b.witness, vec![1]);
    }

    #[test]
    fn chain_needs_two() {
        let m = Membership::vanilla(4, vec![vec![0, 1], vec![1, 2], vec![2, 3]]).unwrap();
        assert_eq!(exhaustive(&m), Some(2));
        let b = tolerable_budget_exact(&m).unwrap();
        assert_eq!(b.r_bar, Some(Tolerable::Finite(2)));
        let gr = tolerable_budget_greedy(&m);
        assert_eq!(gr.r_bar_upper, Tolerable::Finite(2));
        let covered: std::collections::BTreeSet<usize> = b
            .witness
            .iter()
            .flat_map(|&i| m.set(i).iter().copied())
            .collect();
        assert!(covered.len() > 2);
    }

    #[test]
    fn partition_needs_majority() {
        let m = Membership::vanilla(4, (0..4).map(|g| vec![g]).collect()).unwrap();
        assert_eq!(
            tolerable_budget_exact(&m).unwrap().r_bar,
            Some(Tolerable::Finite(3))
        );
    }

    #[test]
    fn uncoverable_is_infinite() {
        let empty = Membership::vanilla(4, vec![vec![], vec![]]).unwrap();
        assert_eq!(
            tolerable_budget_greedy(&empty).r_bar_upper,
            Tolerable::Infinite
        );
        let half = Membership::vanilla(4, vec![vec![0], vec![1]]).unwrap();
        assert_eq!(
            tolerable_budget_exact(&half).unwrap().r_bar,
            Some(Tolerable::Infinite)
        );
    }

    #[test]
    fn overlapping_patterns() {
        let m = Membership::vanilla(
            13,
            vec![
                vec![0, 1, 2, 3, 4],
                vec![5, 6, 7, 8, 9],
                vec![2, 3, 4, 5, 6, 7],
            ],
        )
        .unwrap();
        assert_eq!(exhaustive(&m), Some(2));
        assert_eq!(
            tolerable_budget_exact(&m).unwrap().r_bar,
            Some(Tolerable::Finite(2))
        );
        assert!(tolerable_budget_greedy(&m).r_bar_upper >= Tolerable::Finite(2));
    }

    #[test]
    fn exact_cap_is_enforced() {
        let m = Membership::vanilla(40, (0..40).map(|g| vec![g]).collect()).unwrap();
        assert!(matches!(
            tolerable_budget_exact(&m),
            Err(CertError::TooLarge(_))
        ));
        assert_eq!(
            tolerable_budget_greedy(&m).r_bar_upper,
            Tolerable::Finite(21)
        );
    }

    #[test]
    fn matches_exhaustive_on_random_memberships() {
        let mut state = 0x9e37_79b9_7f4a_7c15u64;
        let mut next = || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            state
        };
        for _ in 0..200 {
            let g = 1 + (next() % 9) as usize;
            let n = 1 + (next() % 9) as usize;
            let sets = (0..n)
                .map(|_| (0..g).filter(|_| next() % 3 == 0).collect())
                .collect();
            let m = Membership::vanilla(g, sets).unwrap();
            let b = tolerable_budget_exact(&m).unwrap();
            let expect = exhaustive(&m).map_or(Tolerable::Infinite, Tolerable::Finite);
            assert_eq!(b.r_bar, Some(expect));
            assert!(b.r_bar_upper >= expect);
        }
    }
}
