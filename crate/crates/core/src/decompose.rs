//! Sub-testset decomposition.
//!
//! The testset is cut into contiguous groups of `delta` rows (the last one
//! may be shorter). Each group is attacked with the full budget on its own,
//! so the per-group maxima sum to an upper bound on the number of rows any
//! single attack can overturn.

use std::time::Instant;

use rayon::prelude::*;

use crate::bilp::{build_for, AttackStructure, BilpProblem};
use crate::error::{CertError, Result};
use crate::solver::{check_inputs, solve, CertifyConfig, SolveResult, SolveStatus};
use crate::votes::{AccuracyBound, Budget, CertStatus, Certificate, GroupReport, VoteMatrix};

/// Contiguous groups of `delta` indices over `0..m`.
pub fn partition_testset(m: usize, delta: usize) -> Result<Vec<Vec<usize>>> {
    if delta == 0 {
        return Err(CertError::InvalidArgument(
            "delta must be at least 1".into(),
        ));
    }
    Ok((0..m)
        .collect::<Vec<_>>()
        .chunks(delta)
        .map(<[usize]>::to_vec)
        .collect())
}

struct GroupOutcome {
    report: GroupReport,
    attack: Vec<bool>,
}

fn solve_groups(
    votes: &VoteMatrix,
    structure: &AttackStructure,
    budget: Budget,
    groups: &[Vec<usize>],
    config: &CertifyConfig,
) -> Result<Vec<GroupOutcome>> {
    let run = |rows: &Vec<usize>| -> Result<GroupOutcome> {
        let problem = build_for(votes, structure, budget, rows, config.omega_filter)?;
        let result: SolveResult = solve(&problem, config.limits_for(rows.len()));
        Ok(GroupOutcome {
            report: GroupReport {
                rows: rows.clone(),
                targets: problem.targets.len(),
                attacked_incumbent: result.incumbent_objective,
                attacked_ub: result.upper_bound,
                optimal: result.status == SolveStatus::Optimal,
                nodes: result.nodes_explored,
                seconds: result.elapsed.as_secs_f64(),
            },
            attack: result.incumbent_attack,
        })
    };
    // collect preserves group order, so the aggregate is thread-count independent
    match config.threads {
        _ if groups.len() <= 1 => groups.iter().map(run).collect(),
        Some(1) => groups.iter().map(run).collect(),
        None => groups.par_iter().map(run).collect(),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CertError::InvalidArgument(format!("thread pool: {e}")))?
            .install(|| groups.par_iter().map(run).collect()),
    }
}

struct Aggregate {
    attacked_ub: usize,
    attacked_incumbent: usize,
    reports: Vec<GroupReport>,
}

/// Sums the group bounds; the incumbent is the best group attack replayed
/// against every target row.
fn aggregate(whole: &BilpProblem, outcomes: Vec<GroupOutcome>) -> Aggregate {
    let attacked_ub = outcomes.iter().map(|o| o.report.attacked_ub).sum();
    let attacked_incumbent = outcomes
        .iter()
        .map(|o| whole.evaluate(&o.attack))
        .max()
        .unwrap_or(0);
    Aggregate {
        attacked_ub,
        attacked_incumbent,
        reports: outcomes.into_iter().map(|o| o.report).collect(),
    }
}

fn run(
    votes: &VoteMatrix,
    structure: &AttackStructure,
    budget: Budget,
    rows: &[usize],
    delta: usize,
    config: &CertifyConfig,
) -> Result<(Aggregate, usize)> {
    let groups: Vec<Vec<usize>> = partition_testset(rows.len(), delta)?
        .into_iter()
        .map(|g| g.into_iter().map(|k| rows[k]).collect())
        .collect();
    let whole = build_for(votes, structure, budget, rows, config.omega_filter)?;
    let outcomes = solve_groups(votes, structure, budget, &groups, config)?;
    Ok((aggregate(&whole, outcomes), whole.targets.len()))
}

/// Decomposed collective certificate with sub-testsets of size `delta`.
pub fn certify_decomposed(
    votes: &VoteMatrix,
    structure: &AttackStructure,
    budget: Budget,
    labels: Option<&[usize]>,
    delta: usize,
    config: &CertifyConfig,
) -> Result<Certificate> {
    check_inputs(votes, structure, labels)?;
    if delta == 0 {
        return Err(CertError::InvalidArgument(
            "delta must be at least 1".into(),
        ));
    }
    let start = Instant::now();
    let all: Vec<usize> = (0..votes.num_samples()).collect();
    let (main, omega_size) = run(votes, structure, budget, &all, delta, config)?;
    let accuracy = match labels {
        Some(labels) => {
            let correct = votes.correct_rows(labels)?;
            let (acc, _) = run(votes, structure, budget, &correct, delta, config)?;
            Some(AccuracyBound {
                correct: correct.len(),
                attacked_ub: acc.attacked_ub,
                attacked_incumbent: acc.attacked_incumbent,
            })
        }
        None => None,
    };
    Ok(Certificate {
        num_samples: votes.num_samples(),
        collective_robustness_lb: votes.num_samples() - main.attacked_ub,
        attacked_ub: main.attacked_ub,
        attacked_incumbent: main.attacked_incumbent,
        certified_accuracy: accuracy.map(|a| a.correct - a.attacked_ub),
        accuracy,
        status: CertStatus::Decomposed,
        solve_seconds: start.elapsed().as_secs_f64(),
        budget,
        omega_size,
        groups: main.reports,
    })
}
