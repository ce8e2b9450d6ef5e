//! Attack-optimization problems in native form.
//!
//! Both problem families share one shape: a list of binary decision
//! variables, each of which influences a fixed set of sub-classifiers when
//! chosen, partitioned into groups with a cardinality cap. The objective is
//! the number of target rows whose prediction is overturned once every
//! influenced classifier is redirected adversarially.
//!
//! * P1 (vanilla bagging): one variable per distinct non-empty influence
//!   pattern `S_i`, one group with cap `r_mod`.
//! * P2 (hash bagging): one variable per classifier, one group per
//!   trainset-hash pair with cap `r_ins + r_del + 2 r_mod`.

use std::collections::BTreeMap;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{CertError, Result};
use crate::hash_bagging::{Membership, PairStructure};
use crate::samplewise::{margin, omega_threshold, row_broken};
use crate::votes::{Budget, VoteMatrix};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ProblemMode {
    P1,
    P2,
}

/// What the attacker's budget acts on.
#[derive(Clone, Debug)]
pub enum AttackStructure {
    /// Hash bagging: only the pair structure matters.
    Hash(PairStructure),
    /// Arbitrary memberships; only modifications are modelled.
    Vanilla(Membership),
}

impl AttackStructure {
    /// Hash structure when the membership carries one, vanilla otherwise.
    pub fn from_membership(membership: Membership) -> Self {
        match membership.pair_structure() {
            Some(ps) => Self::Hash(*ps),
            None => Self::Vanilla(membership),
        }
    }

    pub fn num_classifiers(&self) -> usize {
        match self {
            Self::Hash(ps) => ps.num_classifiers(),
            Self::Vanilla(m) => m.num_classifiers(),
        }
    }
}

/// A test row the attacker tries to overturn.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TargetRow {
    pub sample: usize,
    pub counts: Vec<usize>,
    pub prediction: usize,
    pub votes: Vec<usize>,
}

impl TargetRow {
    pub fn is_broken(&self, influenced: &[bool]) -> bool {
        row_broken(&self.counts, self.prediction, &self.votes, influenced)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct VarGroup {
    pub vars: Range<usize>,
    pub cap: usize,
}

#[derive(Clone, Debug)]
pub struct BilpProblem {
    pub mode: ProblemMode,
    pub num_classifiers: usize,
    pub num_classes: usize,
    pub budget: Budget,
    /// Classifiers influenced by each decision variable.
    pub influence: Vec<Vec<usize>>,
    /// Training samples sharing each pattern (P1); `[g]` for P2.
    pub members: Vec<Vec<usize>>,
    pub groups: Vec<VarGroup>,
    pub targets: Vec<TargetRow>,
}

impl BilpProblem {
    pub fn decision_dim(&self) -> usize {
        self.influence.len()
    }

    pub fn multiplicity(&self, var: usize) -> usize {
        self.members[var].len()
    }

    pub fn group_of(&self, var: usize) -> usize {
        self.groups
            .iter()
            .position(|grp| grp.vars.contains(&var))
            .expect("every variable belongs to a group")
    }

    /// Every group cap respected.
    pub fn is_feasible(&self, attack: &[bool]) -> bool {
        attack.len() == self.decision_dim()
            && self
                .groups
                .iter()
                .all(|grp| grp.vars.clone().filter(|&v| attack[v]).count() <= grp.cap)
    }

    pub fn influenced_mask(&self, attack: &[bool]) -> Vec<bool> {
        let mut mask = vec![false; self.num_classifiers];
        for (v, set) in self.influence.iter().enumerate() {
            if attack[v] {
                for &g in set {
                    mask[g] = true;
                }
            }
        }
        mask
    }

    /// Target rows overturned when the flagged classifiers are controlled.
    pub fn count_broken(&self, influenced: &[bool]) -> usize {
        self.targets
            .iter()
            .filter(|t| t.is_broken(influenced))
            .count()
    }

    /// Objective value of an attack.
    pub fn evaluate(&self, attack: &[bool]) -> usize {
        self.count_broken(&self.influenced_mask(attack))
    }

    pub fn target_samples(&self) -> Vec<usize> {
        self.targets.iter().map(|t| t.sample).collect()
    }
}

fn targets_for(votes: &VoteMatrix, rows: &[usize], keep: impl Fn(i64) -> bool) -> Vec<TargetRow> {
    rows.iter()
        .filter(|&&j| keep(margin(votes.counts(j), votes.prediction(j))))
        .map(|&j| TargetRow {
            sample: j,
            counts: votes.counts(j).to_vec(),
            prediction: votes.prediction(j),
            votes: votes.votes(j).to_vec(),
        })
        .collect()
}

fn check_rows(votes: &VoteMatrix, rows: &[usize]) -> Result<()> {
    match rows.iter().find(|&&j| j >= votes.num_samples()) {
        Some(j) => Err(CertError::Dimension(format!(
            "row {j} outside [0, {})",
            votes.num_samples()
        ))),
        None => Ok(()),
    }
}

/// P2 over every test row, restricted to the breakable set.
pub fn build_p2(votes: &VoteMatrix, pairs: &PairStructure, budget: Budget) -> Result<BilpProblem> {
    let rows: Vec<usize> = (0..votes.num_samples()).collect();
    build_p2_rows(votes, pairs, budget, &rows, true)
}

pub fn build_p2_rows(
    votes: &VoteMatrix,
    pairs: &PairStructure,
    budget: Budget,
    rows: &[usize],
    omega_filter: bool,
) -> Result<BilpProblem> {
    if pairs.num_classifiers() != votes.num_classifiers() {
        return Err(CertError::Dimension(format!(
            "pair structure has G={}, votes have G={}",
            pairs.num_classifiers(),
            votes.num_classifiers()
        )));
    }
    check_rows(votes, rows)?;
    let threshold = omega_threshold(pairs, budget);
    let targets = targets_for(votes, rows, |m| !omega_filter || m <= threshold);
    let g = votes.num_classifiers();
    let cap = budget.per_pair_cap();
    Ok(BilpProblem {
        mode: ProblemMode::P2,
        num_classifiers: g,
        num_classes: votes.num_classes(),
        budget,
        influence: (0..g).map(|c| vec![c]).collect(),
        members: (0..g).map(|c| vec![c]).collect(),
        groups: pairs
            .pair_ranges()
            .map(|vars| VarGroup { vars, cap })
            .collect(),
        targets,
    })
}

/// P1 over every test row. Samples with the same influence pattern are
/// merged into one variable; samples that reach no sub-trainset are
/// dropped since poisoning them changes nothing.
pub fn build_p1(votes: &VoteMatrix, membership: &Membership, r_mod: usize) -> Result<BilpProblem> {
    let rows: Vec<usize> = (0..votes.num_samples()).collect();
    build_p1_rows(votes, membership, Budget::modifications(r_mod), &rows, true)
}

pub fn build_p1_rows(
    votes: &VoteMatrix,
    membership: &Membership,
    budget: Budget,
    rows: &[usize],
    omega_filter: bool,
) -> Result<BilpProblem> {
    if membership.num_classifiers() != votes.num_classifiers() {
        return Err(CertError::Dimension(format!(
            "membership has G={}, votes have G={}",
            membership.num_classifiers(),
            votes.num_classifiers()
        )));
    }
    if budget.r_ins > 0 || budget.r_del > 0 {
        return Err(CertError::InvalidArgument(
            "vanilla bagging certificates model modifications only; r_ins and r_del must be 0"
                .into(),
        ));
    }
    check_rows(votes, rows)?;

    let mut patterns: BTreeMap<&[usize], Vec<usize>> = BTreeMap::new();
    for (i, set) in membership.sets().iter().enumerate() {
        if !set.is_empty() {
            patterns.entry(set.as_slice()).or_default().push(i);
        }
    }
    // order variables by their first training sample for stable output
    let mut vars: Vec<(Vec<usize>, Vec<usize>)> =
        patterns.into_iter().map(|(p, m)| (p.to_vec(), m)).collect();
    vars.sort_by_key(|(_, m)| m[0]);

    let mut sizes: Vec<usize> = vars.iter().map(|(p, _)| p.len()).collect();
    sizes.sort_unstable_by(|a, b| b.cmp(a));
    let reach = sizes
        .iter()
        .take(budget.r_mod)
        .sum::<usize>()
        .min(votes.num_classifiers());
    let threshold = 2 * reach as i64;
    let targets = targets_for(votes, rows, |m| !omega_filter || m <= threshold);

    let (influence, members): (Vec<_>, Vec<_>) = vars.into_iter().unzip();
    let dim = influence.len();
    Ok(BilpProblem {
        mode: ProblemMode::P1,
        num_classifiers: votes.num_classifiers(),
        num_classes: votes.num_classes(),
        budget,
        influence,
        members,
        groups: vec![VarGroup {
            vars: 0..dim,
            cap: budget.r_mod,
        }],
        targets,
    })
}

/// Builds the problem matching `structure` for the listed rows.
pub fn build_for(
    votes: &VoteMatrix,
    structure: &AttackStructure,
    budget: Budget,
    rows: &[usize],
    omega_filter: bool,
) -> Result<BilpProblem> {
    match structure {
        AttackStructure::Hash(ps) => build_p2_rows(votes, ps, budget, rows, omega_filter),
        AttackStructure::Vanilla(m) => build_p1_rows(votes, m, budget, rows, omega_filter),
    }
}
