//! Vote matrices and the voting semantics of a bagged ensemble.
//!
//! A prediction is the class with the most votes; ties go to the smallest
//! class index. All comparisons here are exact integer arithmetic.

use serde::{Deserialize, Serialize};

use crate::error::{CertError, Result};

/// Ensemble prediction from a per-class vote tally.
///
/// Ties are broken towards the smallest class index, so an all-zero tally
/// (no classifiers) predicts class 0.
pub fn ensemble_predict(counts_row: &[usize]) -> Result<usize> {
    if counts_row.is_empty() {
        return Err(CertError::Structure("empty class set".into()));
    }
    let mut best = 0;
    for (class, &count) in counts_row.iter().enumerate().skip(1) {
        if count > counts_row[best] {
            best = class;
        }
    }
    Ok(best)
}

/// Whether `original_pred` is no longer the ensemble prediction of
/// `counts_after`.
///
/// A rival `y` overturns the prediction when it has strictly more votes, or
/// the same number of votes and a smaller index.
pub fn prediction_changed(counts_after: &[i64], original_pred: usize) -> bool {
    let own = counts_after[original_pred];
    counts_after.iter().enumerate().any(|(y, &votes)| {
        y != original_pred && (own < votes || (own == votes && y < original_pred))
    })
}

/// Relative gap `(m_sam - m_col) / m_sam` between the sample-wise and the
/// collective number of attackable predictions. `None` stands for the
/// undefined 0/0 case and is rendered as `NaN` in reports.
pub fn relative_gap(m_sam: usize, m_col: usize) -> Result<Option<f64>> {
    if m_col > m_sam {
        return Err(CertError::Inconsistent(format!(
            "collective M_ATK {m_col} exceeds sample-wise M_ATK {m_sam}"
        )));
    }
    if m_sam == 0 {
        return Ok(None);
    }
    Ok(Some((m_sam - m_col) as f64 / m_sam as f64))
}

/// Hard-label votes of `G` sub-classifiers on `M` test samples.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct VoteMatrix {
    num_classifiers: usize,
    num_classes: usize,
    votes: Vec<Vec<usize>>,
    counts: Vec<Vec<usize>>,
    predictions: Vec<usize>,
}

impl VoteMatrix {
    /// Builds a matrix from `M` rows of `G` class indices each.
    pub fn new(num_classifiers: usize, num_classes: usize, votes: Vec<Vec<usize>>) -> Result<Self> {
        if num_classes == 0 {
            return Err(CertError::Structure(
                "num_classes must be at least 1".into(),
            ));
        }
        let mut counts = Vec::with_capacity(votes.len());
        let mut predictions = Vec::with_capacity(votes.len());
        for (j, row) in votes.iter().enumerate() {
            if row.len() != num_classifiers {
                return Err(CertError::Dimension(format!(
                    "row {j} has {} votes, expected {num_classifiers}",
                    row.len()
                )));
            }
            let mut tally = vec![0usize; num_classes];
            for (g, &class) in row.iter().enumerate() {
                if class >= num_classes {
                    return Err(CertError::Structure(format!(
                        "vote of classifier {g} on row {j} is class {class}, outside [0, {num_classes})"
                    )));
                }
                tally[class] += 1;
            }
            predictions.push(ensemble_predict(&tally)?);
            counts.push(tally);
        }
        Ok(Self {
            num_classifiers,
            num_classes,
            votes,
            counts,
            predictions,
        })
    }

    /// Infers the class count as `max(max vote + 1, min_classes)`.
    pub fn infer(votes: Vec<Vec<usize>>, min_classes: usize) -> Result<Self> {
        let num_classifiers = votes.first().map_or(0, Vec::len);
        let max_vote = votes.iter().flatten().copied().max();
        let num_classes = max_vote.map_or(0, |v| v + 1).max(min_classes).max(1);
        Self::new(num_classifiers, num_classes, votes)
    }

    pub fn num_classifiers(&self) -> usize {
        self.num_classifiers
    }

    pub fn num_samples(&self) -> usize {
        self.votes.len()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn votes(&self, j: usize) -> &[usize] {
        &self.votes[j]
    }

    pub fn counts(&self, j: usize) -> &[usize] {
        &self.counts[j]
    }

    pub fn prediction(&self, j: usize) -> usize {
        self.predictions[j]
    }

    pub fn predictions(&self) -> &[usize] {
        &self.predictions
    }

    /// Keeps only the listed rows, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Self {
        Self {
            num_classifiers: self.num_classifiers,
            num_classes: self.num_classes,
            votes: rows.iter().map(|&j| self.votes[j].clone()).collect(),
            counts: rows.iter().map(|&j| self.counts[j].clone()).collect(),
            predictions: rows.iter().map(|&j| self.predictions[j]).collect(),
        }
    }

    /// Rows whose prediction matches the label.
    pub fn correct_rows(&self, labels: &[usize]) -> Result<Vec<usize>> {
        if labels.len() != self.num_samples() {
            return Err(CertError::Dimension(format!(
                "{} labels for {} samples",
                labels.len(),
                self.num_samples()
            )));
        }
        Ok((0..self.num_samples())
            .filter(|&j| self.predictions[j] == labels[j])
            .collect())
    }
}

/// Poisoning budget: numbers of inserted, deleted and modified training
/// samples.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Budget {
    pub r_ins: usize,
    pub r_del: usize,
    pub r_mod: usize,
}

impl Budget {
    pub fn new(r_ins: usize, r_del: usize, r_mod: usize) -> Self {
        Self {
            r_ins,
            r_del,
            r_mod,
        }
    }

    pub fn modifications(r_mod: usize) -> Self {
        Self {
            r_ins: 0,
            r_del: 0,
            r_mod,
        }
    }

    /// Sub-trainsets one trainset-hash pair can lose to this budget. A
    /// modification is a deletion plus an insertion, hence the factor two.
    pub fn per_pair_cap(&self) -> usize {
        self.r_ins + self.r_del + 2 * self.r_mod
    }

    pub fn is_zero(&self) -> bool {
        self.per_pair_cap() == 0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum CertStatus {
    /// Solver proved optimality; the certificate is tight.
    Exact,
    /// Search stopped early; the certificate uses the sound upper bound.
    TimeLimitBound,
    /// Sum of independently solved sub-testsets.
    Decomposed,
}

/// Per-group diagnostics of a decomposed (or sample-wise) certificate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupReport {
    pub rows: Vec<usize>,
    pub targets: usize,
    pub attacked_incumbent: usize,
    pub attacked_ub: usize,
    pub optimal: bool,
    pub nodes: u64,
    pub seconds: f64,
}

/// Worst-case accuracy part of a certificate, over correctly predicted rows.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AccuracyBound {
    pub correct: usize,
    pub attacked_ub: usize,
    pub attacked_incumbent: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub num_samples: usize,
    pub collective_robustness_lb: usize,
    pub attacked_ub: usize,
    pub attacked_incumbent: usize,
    pub certified_accuracy: Option<usize>,
    pub accuracy: Option<AccuracyBound>,
    pub status: CertStatus,
    pub solve_seconds: f64,
    pub budget: Budget,
    pub omega_size: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub groups: Vec<GroupReport>,
}

impl Certificate {
    /// Gap between the sound bound and the best attack actually found.
    pub fn bound_gap(&self) -> usize {
        self.attacked_ub - self.attacked_incumbent
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn predict_majority_and_ties() {
        assert_eq!(ensemble_predict(&[2, 1]).unwrap(), 0);
        assert_eq!(ensemble_predict(&[2, 2, 1]).unwrap(), 0);
        assert_eq!(ensemble_predict(&[0, 3, 3]).unwrap(), 1);
        assert_eq!(ensemble_predict(&[0, 0]).unwrap(), 0);
        assert!(ensemble_predict(&[]).is_err());
    }

    #[test]
    fn changed_uses_index_tie_rule() {
        assert!(prediction_changed(&[1, 2], 0));
        assert!(prediction_changed(&[2, 2], 1));
        assert!(!prediction_changed(&[2, 2], 0));
        assert!(!prediction_changed(&[3, 1, 2], 0));
    }

    #[test]
    fn gap_values() {
        let third = relative_gap(3, 2).unwrap().unwrap();
        assert!((third - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(relative_gap(5, 5).unwrap(), Some(0.0));
        assert_eq!(relative_gap(0, 0).unwrap(), None);
        assert!(matches!(
            relative_gap(1, 2),
            Err(CertError::Inconsistent(_))
        ));
    }

    #[test]
    fn matrix_tallies_and_predicts() {
        let m = VoteMatrix::new(3, 2, vec![vec![1, 0, 0], vec![0, 1, 1]]).unwrap();
        assert_eq!(m.counts(0), &[2, 1]);
        assert_eq!(m.counts(1), &[1, 2]);
        assert_eq!(m.predictions(), &[0, 1]);
        for j in 0..m.num_samples() {
            let c: Vec<i64> = m.counts(j).iter().map(|&v| v as i64).collect();
            assert!(!prediction_changed(&c, m.prediction(j)));
        }
    }

    #[test]
    fn matrix_rejects_bad_input() {
        assert!(VoteMatrix::new(2, 2, vec![vec![0, 2]]).is_err());
        assert!(VoteMatrix::new(2, 2, vec![vec![0]]).is_err());
        assert!(VoteMatrix::new(2, 0, vec![]).is_err());
    }

    #[test]
    fn degenerate_matrices_are_legal() {
        let empty = VoteMatrix::new(4, 2, vec![]).unwrap();
        assert_eq!(empty.num_samples(), 0);
        let no_voters = VoteMatrix::new(0, 3, vec![vec![], vec![]]).unwrap();
        assert_eq!(no_voters.predictions(), &[0, 0]);
    }

    #[test]
    fn budget_cap() {
        assert_eq!(Budget::new(1, 1, 1).per_pair_cap(), 4);
        assert!(Budget::default().is_zero());
    }

    #[test]
    fn labels_select_correct_rows() {
        let m = VoteMatrix::new(3, 2, vec![vec![1, 0, 0], vec![0, 1, 0], vec![0, 0, 1]]).unwrap();
        assert_eq!(m.correct_rows(&[0, 1, 0]).unwrap(), vec![0, 2]);
        assert!(m.correct_rows(&[0]).is_err());
    }
}
