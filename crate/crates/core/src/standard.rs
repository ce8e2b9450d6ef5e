//! Attack problems rewritten as a standard-form binary integer program.
//!
//! Variables come in four blocks plus big-M auxiliaries:
//!
//! * `A_i` (G): classifier `i` is influenced
//! * `Y_j` (M): target row `j` is overturned
//! * `Z_{j,l}` (M x C): row `j` can be moved to class `l`
//! * `W_k` (N): training sample `k` is modified
//! * `U_{j,l}`, `V_j`: selectors for the either/or constraints
//!
//! Every constraint is `sum(coef * x) <= rhs` with integer coefficients and
//! the objective maximizes `sum(Y)`. The class-switch condition here accepts
//! a tie with *any* rival, i.e. it drops the smallest-index tie rule; on
//! instances where that rule binds the optimum can exceed the native one.

use serde::{Deserialize, Serialize};

use crate::bilp::{BilpProblem, ProblemMode};
use crate::error::{CertError, Result};
use crate::hash_bagging::Membership;
use crate::samplewise::swing;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Block {
    A,
    Y,
    Z,
    W,
    /// Selector of a class-switch either/or.
    U,
    /// Selector of a row-overturn either/or.
    V,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Constraint {
    pub terms: Vec<(usize, i64)>,
    pub rhs: i64,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StandardBilp {
    pub names: Vec<String>,
    pub blocks: Vec<Block>,
    pub objective: Vec<(usize, i64)>,
    pub constraints: Vec<Constraint>,
    pub big_m: i64,
}

#[derive(Serialize, Deserialize)]
struct StandardJson {
    sense: String,
    big_m: i64,
    variables: Vec<String>,
    blocks: Vec<Block>,
    lower: i64,
    upper: i64,
    objective: Vec<(usize, i64)>,
    constraint_sense: String,
    rhs: Vec<i64>,
    triplets: Vec<(usize, usize, i64)>,
}

impl StandardBilp {
    pub fn num_variables(&self) -> usize {
        self.names.len()
    }

    pub fn block_size(&self, block: Block) -> usize {
        self.blocks.iter().filter(|&&b| b == block).count()
    }

    /// Size of the A, Y, Z and W blocks together (auxiliaries excluded).
    pub fn num_core_variables(&self) -> usize {
        [Block::A, Block::Y, Block::Z, Block::W]
            .iter()
            .map(|&b| self.block_size(b))
            .sum()
    }

    pub fn is_feasible(&self, x: &[bool]) -> bool {
        self.constraints.iter().all(|c| {
            c.terms
                .iter()
                .map(|&(v, a)| if x[v] { a } else { 0 })
                .sum::<i64>()
                <= c.rhs
        })
    }

    pub fn objective_value(&self, x: &[bool]) -> i64 {
        self.objective
            .iter()
            .map(|&(v, a)| if x[v] { a } else { 0 })
            .sum()
    }

    /// JSON with the objective and constraint matrix as sparse triplets.
    pub fn to_json(&self) -> String {
        let mut rhs = Vec::with_capacity(self.constraints.len());
        let mut triplets = Vec::new();
        for (row, c) in self.constraints.iter().enumerate() {
            rhs.push(c.rhs);
            triplets.extend(c.terms.iter().map(|&(col, a)| (row, col, a)));
        }
        let wire = StandardJson {
            sense: "maximize".into(),
            big_m: self.big_m,
            variables: self.names.clone(),
            blocks: self.blocks.clone(),
            lower: 0,
            upper: 1,
            objective: self.objective.clone(),
            constraint_sense: "<=".into(),
            rhs,
            triplets,
        };
        serde_json::to_string(&wire).expect("standard form serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let wire: StandardJson = serde_json::from_str(text)
            .map_err(|e| CertError::InvalidArgument(format!("standard-form JSON: {e}")))?;
        if wire.variables.len() != wire.blocks.len() {
            return Err(CertError::Structure(
                "variables and blocks differ in length".into(),
            ));
        }
        let mut constraints: Vec<Constraint> = wire
            .rhs
            .iter()
            .map(|&rhs| Constraint {
                terms: Vec::new(),
                rhs,
            })
            .collect();
        for (row, col, a) in wire.triplets {
            if col >= wire.variables.len() {
                return Err(CertError::Structure(format!("column {col} out of range")));
            }
            constraints
                .get_mut(row)
                .ok_or_else(|| CertError::Structure(format!("row {row} out of range")))?
                .terms
                .push((col, a));
        }
        Ok(Self {
            names: wire.variables,
            blocks: wire.blocks,
            objective: wire.objective,
            constraints,
            big_m: wire.big_m,
        })
    }
}

struct Builder {
    names: Vec<String>,
    blocks: Vec<Block>,
    constraints: Vec<Constraint>,
}

impl Builder {
    fn var(&mut self, block: Block, name: String) -> usize {
        self.names.push(name);
        self.blocks.push(block);
        self.names.len() - 1
    }

    fn le(&mut self, terms: Vec<(usize, i64)>, rhs: i64) {
        self.constraints.push(Constraint { terms, rhs });
    }
}

/// Standard form of `problem`. P1 needs the membership for the `W` block;
/// P2 has no `W` block and caps `A` per trainset-hash pair instead.
pub fn to_standard_form(
    problem: &BilpProblem,
    membership: Option<&Membership>,
) -> Result<StandardBilp> {
    let g = problem.num_classifiers;
    let c = problem.num_classes;
    let big_m = 2 * g as i64 + 1;
    let mut b = Builder {
        names: Vec::new(),
        blocks: Vec::new(),
        constraints: Vec::new(),
    };

    let a: Vec<usize> = (0..g).map(|i| b.var(Block::A, format!("A_{i}"))).collect();
    let y: Vec<usize> = (0..problem.targets.len())
        .map(|j| b.var(Block::Y, format!("Y_{j}")))
        .collect();
    let z: Vec<Vec<usize>> = (0..problem.targets.len())
        .map(|j| {
            (0..c)
                .map(|l| b.var(Block::Z, format!("Z_{j}_{l}")))
                .collect()
        })
        .collect();

    match problem.mode {
        ProblemMode::P1 => {
            let membership = membership.ok_or_else(|| {
                CertError::InvalidArgument("P1 standard form needs the training membership".into())
            })?;
            if membership.num_classifiers() != g {
                return Err(CertError::Dimension(
                    "membership and problem disagree on G".into(),
                ));
            }
            let w: Vec<usize> = (0..membership.num_samples())
                .map(|k| b.var(Block::W, format!("W_{k}")))
                .collect();
            b.le(
                w.iter().map(|&v| (v, 1)).collect(),
                problem.budget.r_mod as i64,
            );
            for (i, &ai) in a.iter().enumerate() {
                let mut terms = vec![(ai, 1)];
                terms.extend(
                    (0..membership.num_samples())
                        .filter(|&k| membership.set(k).contains(&i))
                        .map(|k| (w[k], -1)),
                );
                b.le(terms, 0);
            }
        }
        ProblemMode::P2 => {
            for grp in &problem.groups {
                b.le(
                    grp.vars
                        .clone()
                        .map(|v| (a[problem.influence[v][0]], 1))
                        .collect(),
                    grp.cap as i64,
                );
            }
        }
    }

    for (j, t) in problem.targets.iter().enumerate() {
        let pred = t.prediction;
        b.le(vec![(z[j][pred], -1)], -1);
        for l in (0..c).filter(|&l| l != pred) {
            let u = b.var(Block::U, format!("U_{j}_{l}"));
            // either Z_{j,l} <= 0 ...
            b.le(vec![(z[j][l], 1), (u, -big_m)], 0);
            // ... or o(pred) - o(l) <= sum_i A_i * swing_i
            let mut terms: Vec<(usize, i64)> = (0..g)
                .filter_map(|i| {
                    let s = swing(t.votes[i], pred, l) as i64;
                    (s > 0).then_some((a[i], -s))
                })
                .collect();
            terms.push((u, big_m));
            b.le(terms, big_m - (t.counts[pred] as i64 - t.counts[l] as i64));
        }
        let v = b.var(Block::V, format!("V_{j}"));
        // either Y_j <= 0 or sum_l Z_{j,l} >= 2
        b.le(vec![(y[j], 1), (v, -big_m)], 0);
        let mut terms: Vec<(usize, i64)> = z[j].iter().map(|&zv| (zv, -1)).collect();
        terms.push((v, big_m));
        b.le(terms, big_m - 2);
    }

    Ok(StandardBilp {
        objective: y.iter().map(|&v| (v, 1)).collect(),
        names: b.names,
        blocks: b.blocks,
        constraints: b.constraints,
        big_m,
    })
}

/// Whether the smallest-index tie rule can matter on this problem: some
/// target row has a rival `l > prediction` whose gap to the prediction could
/// be closed exactly. With two classes, a controlled voter always swings
/// by 2, so an odd gap can never be closed exactly.
pub fn tie_rule_may_bind(problem: &BilpProblem) -> bool {
    problem.targets.iter().any(|t| {
        (t.prediction + 1..problem.num_classes).any(|l| {
            let gap = t.counts[t.prediction] as i64 - t.counts[l] as i64;
            problem.num_classes > 2 || gap % 2 == 0
        })
    })
}

/// Optimum of a standard-form program by depth-first search with
/// constraint propagation. Returns `None` when infeasible, and an error if
/// more than `node_limit` nodes would be needed.
pub fn solve_standard(bilp: &StandardBilp, node_limit: u64) -> Result<Option<(i64, Vec<bool>)>> {
    let n = bilp.num_variables();
    let rank = |blk: Block| match blk {
        Block::W => 0,
        Block::A => 1,
        Block::U => 2,
        Block::Z => 3,
        Block::V => 4,
        Block::Y => 5,
    };
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by_key(|&v| (rank(bilp.blocks[v]), v));
    let mut touching: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (ci, c) in bilp.constraints.iter().enumerate() {
        for &(v, _) in &c.terms {
            touching[v].push(ci);
        }
    }
    let weight: Vec<i64> = {
        let mut w = vec![0; n];
        for &(v, a) in &bilp.objective {
            w[v] += a;
        }
        w
    };

    struct Dfs<'a> {
        bilp: &'a StandardBilp,
        order: Vec<usize>,
        touching: Vec<Vec<usize>>,
        weight: Vec<i64>,
        value: Vec<Option<bool>>,
        best: Option<(i64, Vec<bool>)>,
        nodes: u64,
        limit: u64,
    }

    impl Dfs<'_> {
        fn min_activity_ok(&self, ci: usize) -> bool {
            let c = &self.bilp.constraints[ci];
            let lhs: i64 = c
                .terms
                .iter()
                .map(|&(v, a)| match self.value[v] {
                    Some(true) => a,
                    Some(false) => 0,
                    None => a.min(0),
                })
                .sum();
            lhs <= c.rhs
        }

        fn optimistic(&self, depth: usize, fixed: i64) -> i64 {
            fixed
                + self.order[depth..]
                    .iter()
                    .map(|&v| self.weight[v].max(0))
                    .sum::<i64>()
        }

        fn go(&mut self, depth: usize, fixed: i64) -> Result<()> {
            self.nodes += 1;
            if self.nodes > self.limit {
                return Err(CertError::TooLarge(
                    "standard-form search exceeded its node limit".into(),
                ));
            }
            if let Some((best, _)) = &self.best {
                if self.optimistic(depth, fixed) <= *best {
                    return Ok(());
                }
            }
            if depth == self.order.len() {
                let x = self.value.iter().map(|v| v.unwrap_or(false)).collect();
                self.best = Some((fixed, x));
                return Ok(());
            }
            let v = self.order[depth];
            let first = self.weight[v] > 0;
            for val in [first, !first] {
                self.value[v] = Some(val);
                if self.touching[v].iter().all(|&ci| self.min_activity_ok(ci)) {
                    let gain = if val { self.weight[v] } else { 0 };
                    self.go(depth + 1, fixed + gain)?;
                }
            }
            self.value[v] = None;
            Ok(())
        }
    }

    let mut dfs = Dfs {
        bilp,
        order,
        touching,
        weight,
        value: vec![None; n],
        best: None,
        nodes: 0,
        limit: node_limit,
    };
    if !(0..bilp.constraints.len()).all(|ci| dfs.min_activity_ok(ci)) {
        return Ok(None);
    }
    dfs.go(0, 0)?;
    Ok(dfs.best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bilp::{build_p1, build_p2};
    use crate::hash_bagging::PairStructure;
    use crate::votes::{Budget, VoteMatrix};

    fn three_way() -> VoteMatrix {
        VoteMatrix::new(3, 2, vec![vec![1, 0, 0], vec![0, 1, 0], vec![0, 0, 1]]).unwrap()
    }

    fn identity(g: usize) -> Membership {
        Membership::vanilla(g, (0..g).map(|i| vec![i]).collect()).unwrap()
    }

    #[test]
    fn three_way_block_sizes() {
        let m = identity(3);
        let p = build_p1(&three_way(), &m, 1).unwrap();
        let s = to_standard_form(&p, Some(&m)).unwrap();
        assert_eq!(s.num_core_variables(), 15);
        assert_eq!(
            [Block::A, Block::Y, Block::Z, Block::W].map(|b| s.block_size(b)),
            [3, 3, 6, 3]
        );
        assert_eq!(s.big_m, 7);
        let (opt, x) = solve_standard(&s, 1_000_000).unwrap().unwrap();
        assert_eq!(opt, 2);
        assert!(s.is_feasible(&x));
    }

    #[test]
    fn zero_budget_optimum_is_zero() {
        let m = identity(3);
        let p = build_p1(&three_way(), &m, 0).unwrap();
        let s = to_standard_form(&p, Some(&m)).unwrap();
        assert_eq!(solve_standard(&s, 1_000_000).unwrap().unwrap().0, 0);
    }

    #[test]
    fn p2_uses_pair_caps() {
        let p = build_p2(
            &three_way(),
            &PairStructure::single(3),
            Budget::new(1, 0, 0),
        )
        .unwrap();
        let s = to_standard_form(&p, None).unwrap();
        assert_eq!(s.block_size(Block::W), 0);
        assert_eq!(solve_standard(&s, 1_000_000).unwrap().unwrap().0, 2);
    }

    #[test]
    fn p1_needs_membership() {
        let m = identity(3);
        let p = build_p1(&three_way(), &m, 1).unwrap();
        assert!(to_standard_form(&p, None).is_err());
    }

    #[test]
    fn ties_can_make_the_relaxed_form_larger() {
        // G=2, C=2, row [0,1]: prediction 0 by tie rule. One controlled
        // classifier voting 1 leaves a tie [1,1] that still predicts 0.
        let v = VoteMatrix::new(2, 2, vec![vec![0, 1]]).unwrap();
        let m = Membership::vanilla(2, vec![vec![1]]).unwrap();
        let p = build_p1(&v, &m, 1).unwrap();
        assert!(tie_rule_may_bind(&p));
        assert_eq!(p.evaluate(&[true]), 0);
        let s = to_standard_form(&p, Some(&m)).unwrap();
        assert_eq!(solve_standard(&s, 1_000_000).unwrap().unwrap().0, 1);
    }

    #[test]
    fn json_round_trip() {
        let m = identity(3);
        let p = build_p1(&three_way(), &m, 1).unwrap();
        let s = to_standard_form(&p, Some(&m)).unwrap();
        let text = s.to_json();
        assert!(text.contains("\"sense\":\"maximize\""));
        assert_eq!(StandardBilp::from_json(&text).unwrap(), s);
    }
}
