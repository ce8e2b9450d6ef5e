//! Anytime branch-and-bound for attack problems, and the end-to-end
//! certification built on it.
//!
//! The search is a depth-first traversal over the decision variables in a
//! fixed order (descending coverage of predicted-class votes, lowest index
//! first on ties), trying "include" before "exclude". A node's bound counts
//! the target rows that are already overturned or could still be overturned
//! if every group spent its remaining capacity on the variables with the
//! largest marginal swing for that row. The bound is optimistic row by row,
//! so it is a sound upper bound on the subtree optimum.
//!
//! When a limit interrupts the search, the reported upper bound is the
//! maximum of the incumbent and the bounds of all open nodes, so
//! `M - upper_bound` never over-certifies.

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::bilp::{build_for, AttackStructure, BilpProblem};
use crate::decompose;
use crate::error::{CertError, Result};
use crate::samplewise::{break_with_pair_caps, deficit, swing};
use crate::votes::{AccuracyBound, Budget, CertStatus, Certificate, VoteMatrix};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolveStatus {
    Optimal,
    TimeLimit,
}

/// Search limits. `None` means unlimited.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct SolveLimits {
    pub time: Option<Duration>,
    pub nodes: Option<u64>,
}

impl SolveLimits {
    pub fn unlimited() -> Self {
        Self::default()
    }

    pub fn time(limit: Duration) -> Self {
        Self {
            time: Some(limit),
            nodes: None,
        }
    }

    pub fn nodes(limit: u64) -> Self {
        Self {
            time: None,
            nodes: Some(limit),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SolveResult {
    pub incumbent_objective: usize,
    pub upper_bound: usize,
    pub incumbent_attack: Vec<bool>,
    pub nodes_explored: u64,
    pub elapsed: Duration,
    pub status: SolveStatus,
}

impl SolveResult {
    /// Training samples (P1) or classifiers (P2) picked by the incumbent.
    pub fn chosen_members(&self, problem: &BilpProblem) -> Vec<usize> {
        self.incumbent_attack
            .iter()
            .enumerate()
            .filter(|(_, &on)| on)
            .map(|(v, _)| problem.members[v][0])
            .collect()
    }
}

struct Node {
    depth: usize,
    attack: Vec<bool>,
    bound: usize,
}

/// Incremental view of one partial attack.
struct NodeState {
    influenced: Vec<bool>,
    group_used: Vec<usize>,
    /// Per target row, per class: controlled voters of that class.
    tallies: Vec<Vec<usize>>,
}

struct Search<'a> {
    problem: &'a BilpProblem,
    order: Vec<usize>,
    group_of: Vec<usize>,
}

impl<'a> Search<'a> {
    fn new(problem: &'a BilpProblem) -> Self {
        let dim = problem.decision_dim();
        let coverage: Vec<usize> = (0..dim)
            .map(|v| {
                problem
                    .targets
                    .iter()
                    .map(|t| {
                        problem.influence[v]
                            .iter()
                            .filter(|&&g| t.votes[g] == t.prediction)
                            .count()
                    })
                    .sum()
            })
            .collect();
        let mut order: Vec<usize> = (0..dim).collect();
        order.sort_by(|&a, &b| coverage[b].cmp(&coverage[a]).then(a.cmp(&b)));
        let group_of = (0..dim).map(|v| problem.group_of(v)).collect();
        Self {
            problem,
            order,
            group_of,
        }
    }

    fn state(&self, attack: &[bool]) -> NodeState {
        let p = self.problem;
        let influenced = p.influenced_mask(attack);
        let mut group_used = vec![0; p.groups.len()];
        for (v, &on) in attack.iter().enumerate() {
            if on {
                group_used[self.group_of[v]] += 1;
            }
        }
        let tallies = p
            .targets
            .iter()
            .map(|t| {
                let mut tally = vec![0; p.num_classes];
                for (g, &c) in t.votes.iter().enumerate() {
                    if influenced[g] {
                        tally[c] += 1;
                    }
                }
                tally
            })
            .collect();
        NodeState {
            influenced,
            group_used,
            tallies,
        }
    }

    /// (rows overturned now, optimistic bound over the subtree at `depth`).
    fn evaluate(&self, state: &NodeState, depth: usize) -> (usize, usize) {
        let p = self.problem;
        let mut current = 0;
        let mut bound = 0;
        let open: Vec<usize> = self.order[depth..]
            .iter()
            .copied()
            .filter(|&v| state.group_used[self.group_of[v]] < p.groups[self.group_of[v]].cap)
            .collect();
        let mut marginals: Vec<Vec<usize>> = vec![Vec::new(); p.groups.len()];
        for (row, t) in p.targets.iter().enumerate() {
            let tally = &state.tallies[row];
            let total: usize = tally.iter().sum();
            let own = tally[t.prediction];
            let mut broken_now = false;
            let mut reachable = false;
            for y in (0..p.num_classes).filter(|&y| y != t.prediction) {
                let need = deficit(&t.counts, t.prediction, y);
                let gained = (2 * own + total - own - tally[y]) as i64;
                if gained >= need {
                    broken_now = true;
                    break;
                }
                if reachable {
                    continue;
                }
                for m in marginals.iter_mut() {
                    m.clear();
                }
                for &v in &open {
                    let s: usize = p.influence[v]
                        .iter()
                        .filter(|&&g| !state.influenced[g])
                        .map(|&g| swing(t.votes[g], t.prediction, y))
                        .sum();
                    if s > 0 {
                        marginals[self.group_of[v]].push(s);
                    }
                }
                let mut extra = 0i64;
                for (grp, m) in marginals.iter_mut().enumerate() {
                    let room = p.groups[grp].cap - state.group_used[grp];
                    if m.len() > room {
                        m.sort_unstable_by(|a, b| b.cmp(a));
                        m.truncate(room);
                    }
                    extra += m.iter().sum::<usize>() as i64;
                }
                if gained + extra >= need {
                    reachable = true;
                }
            }
            if broken_now {
                current += 1;
                bound += 1;
            } else if reachable {
                bound += 1;
            }
        }
        (current, bound)
    }
}

/// Solves `problem` within `limits`.
pub fn solve(problem: &BilpProblem, limits: SolveLimits) -> SolveResult {
    let start = Instant::now();
    let dim = problem.decision_dim();
    let targets = problem.targets.len();
    let trivial = |status| SolveResult {
        incumbent_objective: 0,
        upper_bound: targets,
        incumbent_attack: vec![false; dim],
        nodes_explored: 0,
        elapsed: start.elapsed(),
        status,
    };
    if targets == 0 {
        return trivial(SolveStatus::Optimal);
    }
    if limits.time == Some(Duration::ZERO) || limits.nodes == Some(0) {
        return trivial(SolveStatus::TimeLimit);
    }

    let search = Search::new(problem);
    let mut incumbent = 0;
    let mut best_attack = vec![false; dim];
    let mut nodes = 0u64;
    let mut stack = vec![Node {
        depth: 0,
        attack: vec![false; dim],
        bound: targets,
    }];
    let mut interrupted_bound = None;

    while let Some(node) = stack.pop() {
        if node.bound <= incumbent {
            continue;
        }
        let out_of_nodes = limits.nodes.is_some_and(|n| nodes >= n);
        let out_of_time = limits.time.is_some_and(|t| start.elapsed() >= t);
        if out_of_nodes || out_of_time {
            let open = stack
                .iter()
                .map(|n| n.bound)
                .chain([node.bound])
                .max()
                .unwrap_or(0);
            interrupted_bound = Some(open);
            break;
        }
        nodes += 1;

        let state = search.state(&node.attack);
        let (value, bound) = search.evaluate(&state, node.depth);
        if value > incumbent {
            incumbent = value;
            best_attack.clone_from(&node.attack);
        }
        if bound <= incumbent || incumbent == targets {
            continue;
        }

        // next variable that can still change something
        let mut depth = node.depth;
        while depth < dim {
            let v = search.order[depth];
            let grp = search.group_of[v];
            let has_room = state.group_used[grp] < problem.groups[grp].cap;
            let adds = problem.influence[v].iter().any(|&g| !state.influenced[g]);
            if has_room && adds {
                break;
            }
            depth += 1;
        }
        if depth == dim {
            continue;
        }
        let v = search.order[depth];
        stack.push(Node {
            depth: depth + 1,
            attack: node.attack.clone(),
            bound,
        });
        let mut with = node.attack;
        with[v] = true;
        stack.push(Node {
            depth: depth + 1,
            attack: with,
            bound,
        });
    }

    let (upper_bound, status) = match interrupted_bound {
        Some(open) => {
            let ub = open.max(incumbent);
            (
                ub,
                if ub == incumbent {
                    SolveStatus::Optimal
                } else {
                    SolveStatus::TimeLimit
                },
            )
        }
        None => (incumbent, SolveStatus::Optimal),
    };
    SolveResult {
        incumbent_objective: incumbent,
        upper_bound,
        incumbent_attack: best_attack,
        nodes_explored: nodes,
        elapsed: start.elapsed(),
        status,
    }
}

/// Knobs for [`certify`] and the decomposed variant.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CertifyConfig {
    /// Solver time per target row; `None` disables the time limit.
    pub time_per_sample: Option<Duration>,
    /// Node cap per solve, mainly for tests.
    pub node_limit: Option<u64>,
    /// Drop rows that cannot break within the budget before solving.
    pub omega_filter: bool,
    /// Worker threads for independent sub-problems; `None` uses rayon's default.
    pub threads: Option<usize>,
}

impl Default for CertifyConfig {
    fn default() -> Self {
        Self {
            time_per_sample: Some(Duration::from_secs(2)),
            node_limit: None,
            omega_filter: true,
            threads: None,
        }
    }
}

impl CertifyConfig {
    pub fn unlimited() -> Self {
        Self {
            time_per_sample: None,
            ..Self::default()
        }
    }

    pub fn limits_for(&self, rows: usize) -> SolveLimits {
        SolveLimits {
            time: self.time_per_sample.map(|t| t * rows.max(1) as u32),
            nodes: self.node_limit,
        }
    }
}

pub(crate) fn check_inputs(
    votes: &VoteMatrix,
    structure: &AttackStructure,
    labels: Option<&[usize]>,
) -> Result<()> {
    if structure.num_classifiers() != votes.num_classifiers() {
        return Err(CertError::Dimension(format!(
            "structure has G={}, votes have G={}",
            structure.num_classifiers(),
            votes.num_classifiers()
        )));
    }
    if let Some(labels) = labels {
        if labels.len() != votes.num_samples() {
            return Err(CertError::Dimension(format!(
                "{} labels for {} samples",
                labels.len(),
                votes.num_samples()
            )));
        }
    }
    Ok(())
}

/// Collective certificate: solves one problem over the whole testset (and,
/// with labels, a second one over the correctly predicted rows).
pub fn certify(
    votes: &VoteMatrix,
    structure: &AttackStructure,
    budget: Budget,
    labels: Option<&[usize]>,
    config: &CertifyConfig,
) -> Result<Certificate> {
    check_inputs(votes, structure, labels)?;
    let start = Instant::now();
    let all: Vec<usize> = (0..votes.num_samples()).collect();
    let problem = build_for(votes, structure, budget, &all, config.omega_filter)?;
    let result = solve(&problem, config.limits_for(problem.targets.len()));
    debug_assert_eq!(
        problem.evaluate(&result.incumbent_attack),
        result.incumbent_objective
    );
    let mut exact = result.status == SolveStatus::Optimal;

    let accuracy = match labels {
        Some(labels) => {
            let correct = votes.correct_rows(labels)?;
            let acc_problem = build_for(votes, structure, budget, &correct, config.omega_filter)?;
            let acc = solve(&acc_problem, config.limits_for(acc_problem.targets.len()));
            exact &= acc.status == SolveStatus::Optimal;
            Some(AccuracyBound {
                correct: correct.len(),
                attacked_ub: acc.upper_bound,
                attacked_incumbent: acc.incumbent_objective,
            })
        }
        None => None,
    };

    Ok(Certificate {
        num_samples: votes.num_samples(),
        collective_robustness_lb: votes.num_samples() - result.upper_bound,
        attacked_ub: result.upper_bound,
        attacked_incumbent: result.incumbent_objective,
        certified_accuracy: accuracy.map(|a| a.correct - a.attacked_ub),
        accuracy,
        status: if exact {
            CertStatus::Exact
        } else {
            CertStatus::TimeLimitBound
        },
        solve_seconds: start.elapsed().as_secs_f64(),
        budget,
        omega_size: problem.targets.len(),
        groups: Vec::new(),
    })
}

/// Best simultaneous attack among the single-row witnesses, replayed over
/// `problem`'s targets.
fn best_witness_replay(problem: &BilpProblem, witnesses: &[Vec<usize>]) -> usize {
    witnesses
        .iter()
        .map(|w| {
            let mut mask = vec![false; problem.num_classifiers];
            for &g in w {
                mask[g] = true;
            }
            problem.count_broken(&mask)
        })
        .max()
        .unwrap_or(0)
}

/// Sample-wise certificate: a row counts as robust only if no attack within
/// the budget overturns it on its own.
///
/// For hash bagging this is closed form (best swings per pair). Vanilla
/// memberships have no closed form and are solved row by row.
pub fn certify_samplewise(
    votes: &VoteMatrix,
    structure: &AttackStructure,
    budget: Budget,
    labels: Option<&[usize]>,
    config: &CertifyConfig,
) -> Result<Certificate> {
    check_inputs(votes, structure, labels)?;
    let pairs = match structure {
        AttackStructure::Hash(ps) => ps,
        AttackStructure::Vanilla(_) => {
            let mut cert =
                decompose::certify_decomposed(votes, structure, budget, labels, 1, config)?;
            if cert.attacked_incumbent == cert.attacked_ub
                && cert
                    .accuracy
                    .is_none_or(|a| a.attacked_incumbent == a.attacked_ub)
            {
                cert.status = CertStatus::Exact;
            }
            return Ok(cert);
        }
    };
    let start = Instant::now();
    let cap = budget.per_pair_cap();
    let count = |rows: &[usize]| -> Result<(usize, usize, usize)> {
        let problem = build_for(votes, structure, budget, rows, config.omega_filter)?;
        let witnesses: Vec<Vec<usize>> = problem
            .targets
            .iter()
            .filter_map(|t| break_with_pair_caps(&t.counts, t.prediction, &t.votes, pairs, cap))
            .collect();
        Ok((
            witnesses.len(),
            best_witness_replay(&problem, &witnesses),
            problem.targets.len(),
        ))
    };
    let all: Vec<usize> = (0..votes.num_samples()).collect();
    let (attacked, incumbent, omega_size) = count(&all)?;
    let mut tight = attacked == incumbent;
    let accuracy = match labels {
        Some(labels) => {
            let correct = votes.correct_rows(labels)?;
            let (ub, inc, _) = count(&correct)?;
            tight &= ub == inc;
            Some(AccuracyBound {
                correct: correct.len(),
                attacked_ub: ub,
                attacked_incumbent: inc,
            })
        }
        None => None,
    };
    Ok(Certificate {
        num_samples: votes.num_samples(),
        collective_robustness_lb: votes.num_samples() - attacked,
        attacked_ub: attacked,
        attacked_incumbent: incumbent,
        certified_accuracy: accuracy.map(|a| a.correct - a.attacked_ub),
        accuracy,
        status: if tight {
            CertStatus::Exact
        } else {
            CertStatus::Decomposed
        },
        solve_seconds: start.elapsed().as_secs_f64(),
        budget,
        omega_size,
        groups: Vec::new(),
    })
}
