//! Seeded random instances for tests, sweeps and oracle cross-checks.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::hash_bagging::{Membership, PairStructure, SampleRecord};
use crate::votes::{Budget, VoteMatrix};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Votes biased toward one class per row, so margins are often small.
pub fn random_votes<R: Rng>(rng: &mut R, g: usize, m: usize, c: usize) -> VoteMatrix {
    let rows = (0..m)
        .map(|_| {
            let favored = rng.gen_range(0..c);
            let p: f64 = rng.gen_range(0.2..0.9);
            (0..g)
                .map(|_| {
                    if rng.gen_bool(p) {
                        favored
                    } else {
                        rng.gen_range(0..c)
                    }
                })
                .collect()
        })
        .collect();
    VoteMatrix::new(g, c, rows).expect("generated votes are in range")
}

pub fn random_pairs<R: Rng>(rng: &mut R, g: usize) -> PairStructure {
    PairStructure::new(g, rng.gen_range(1..=g)).expect("g_hat is positive")
}

/// Vanilla membership over `n` samples drawn from at most `max_patterns`
/// random influence patterns (some may be empty or repeated).
pub fn random_membership<R: Rng>(
    rng: &mut R,
    g: usize,
    n: usize,
    max_patterns: usize,
) -> Membership {
    let density: f64 = rng.gen_range(0.1..0.6);
    let pool: Vec<Vec<usize>> = (0..max_patterns.max(1))
        .map(|_| (0..g).filter(|_| rng.gen_bool(density)).collect())
        .collect();
    let sets = (0..n)
        .map(|_| pool[rng.gen_range(0..pool.len())].clone())
        .collect();
    Membership::vanilla(g, sets).expect("generated patterns are in range")
}

/// Rows whose winner leads the runner-up by roughly a margin drawn from
/// `0..=max_margin`; remaining votes are scattered over the other classes.
pub fn margin_votes<R: Rng>(
    rng: &mut R,
    g: usize,
    m: usize,
    c: usize,
    max_margin: usize,
) -> VoteMatrix {
    let rows = (0..m)
        .map(|_| {
            let winner = rng.gen_range(0..c);
            let target = rng.gen_range(0..=max_margin.min(g));
            let lead = ((g + target) / 2).min(g);
            let mut row = vec![winner; lead];
            let others: Vec<usize> = (0..c).filter(|&y| y != winner).collect();
            while row.len() < g {
                row.push(if others.is_empty() {
                    winner
                } else {
                    *others.choose(rng).unwrap()
                });
            }
            row.shuffle(rng);
            row
        })
        .collect();
    VoteMatrix::new(g, c, rows).expect("generated votes are in range")
}

pub fn random_records<R: Rng>(rng: &mut R, n: usize) -> Vec<SampleRecord> {
    (0..n)
        .map(|i| {
            let len = rng.gen_range(4..24);
            SampleRecord::new(i, (0..len).map(|_| rng.gen::<u8>()).collect::<Vec<u8>>())
        })
        .collect()
}

#[derive(Clone, Debug)]
pub struct P2Instance {
    pub votes: VoteMatrix,
    pub pairs: PairStructure,
    pub budget: Budget,
}

#[derive(Clone, Debug)]
pub struct P1Instance {
    pub votes: VoteMatrix,
    pub membership: Membership,
    pub r_mod: usize,
}

/// Random hash-bagging instances with `G <= max_g`, `M <= max_m`,
/// `C <= max_c` and per-pair caps in `0..=G`.
pub fn p2_corpus(
    seed: u64,
    count: usize,
    max_g: usize,
    max_m: usize,
    max_c: usize,
) -> Vec<P2Instance> {
    let mut r = rng(seed);
    (0..count)
        .map(|_| {
            let g = r.gen_range(1..=max_g);
            let m = r.gen_range(1..=max_m);
            let c = r.gen_range(2..=max_c.max(2));
            let votes = random_votes(&mut r, g, m, c);
            let pairs = random_pairs(&mut r, g);
            let cap = r.gen_range(0..=g);
            P2Instance {
                votes,
                pairs,
                budget: Budget::new(cap, 0, 0),
            }
        })
        .collect()
}

/// Random vanilla-bagging instances with at most `max_patterns` distinct
/// patterns.
pub fn p1_corpus(
    seed: u64,
    count: usize,
    max_g: usize,
    max_m: usize,
    max_patterns: usize,
) -> Vec<P1Instance> {
    let mut r = rng(seed);
    (0..count)
        .map(|_| {
            let g = r.gen_range(1..=max_g);
            let m = r.gen_range(1..=max_m);
            let c = r.gen_range(2..=3);
            let votes = random_votes(&mut r, g, m, c);
            let n = r.gen_range(1..=2 * max_patterns);
            let membership = random_membership(&mut r, g, n, max_patterns);
            let r_mod = r.gen_range(0..=3);
            P1Instance {
                votes,
                membership,
                r_mod,
            }
        })
        .collect()
}
