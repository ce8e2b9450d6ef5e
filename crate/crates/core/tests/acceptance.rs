//! Acceptance suite. Runs every criterion in sequence, prints one line per
//! criterion and exits non-zero if any fails.

use std::collections::{BTreeMap, BTreeSet};
use std::process::ExitCode;
use std::time::Instant;

use poison_cert::bilp::{build_p1_rows, build_p2_rows};
use poison_cert::bound::Tolerable;
use poison_cert::hash_bagging::subsample_with_pairs;
use poison_cert::report::{sweep, Method, SweepPoint};
use poison_cert::samplewise::samplewise_collective_count;
use poison_cert::solver::certify_samplewise;
use poison_cert::standard::{solve_standard, tie_rule_may_bind};
use poison_cert::synthetic::{
    self, margin_votes, p1_corpus, p2_corpus, random_membership, random_records, random_votes,
};
use poison_cert::{
    brute_force_p1, brute_force_p2, build_p1, build_p2, certify, certify_decomposed, solve,
    subsample, to_standard_form, tolerable_budget_exact, tolerable_budget_greedy, AttackStructure,
    Budget, CertifyConfig, Membership, PairStructure, SampleRecord, SolveLimits, VoteMatrix,
};
use rand::Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn three_way() -> VoteMatrix {
    VoteMatrix::new(3, 2, vec![vec![1, 0, 0], vec![0, 1, 0], vec![0, 0, 1]]).unwrap()
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let s = AttackStructure::Hash(PairStructure::single(3));
    let b = Budget::new(1, 0, 0);
    let cfg = CertifyConfig::unlimited();
    let sw = certify_samplewise(&three_way(), &s, b, None, &cfg).map_err(|e| e.to_string())?;
    let col = certify(&three_way(), &s, b, None, &cfg).map_err(|e| e.to_string())?;
    let secs = start.elapsed().as_secs_f64();
    check(sw.collective_robustness_lb == 0, || {
        format!("sample-wise CR {}", sw.collective_robustness_lb)
    })?;
    check(col.collective_robustness_lb == 1, || {
        format!("collective CR {}", col.collective_robustness_lb)
    })?;
    check(secs < 1.0, || format!("took {secs:.3}s"))?;
    Ok(format!("sample-wise CR 0, collective CR 1 in {secs:.3}s"))
}

const P2_COUNT: usize = 600;
const P1_COUNT: usize = 250;

fn criterion_2() -> Outcome {
    let start = Instant::now();
    for (k, inst) in p2_corpus(2024, P2_COUNT, 10, 6, 3).iter().enumerate() {
        let problem = build_p2(&inst.votes, &inst.pairs, inst.budget).map_err(|e| e.to_string())?;
        let got = solve(&problem, SolveLimits::unlimited()).incumbent_objective;
        let want = brute_force_p2(&inst.votes, &inst.pairs, inst.budget)
            .map_err(|e| e.to_string())?
            .max_changed;
        check(got == want, || {
            format!("P2 instance {k}: solver {got}, oracle {want}")
        })?;
    }
    for (k, inst) in p1_corpus(2025, P1_COUNT, 10, 6, 12).iter().enumerate() {
        let problem =
            build_p1(&inst.votes, &inst.membership, inst.r_mod).map_err(|e| e.to_string())?;
        let got = solve(&problem, SolveLimits::unlimited()).incumbent_objective;
        let want = brute_force_p1(&inst.votes, &inst.membership, inst.r_mod)
            .map_err(|e| e.to_string())?
            .max_changed;
        check(got == want, || {
            format!("P1 instance {k}: solver {got}, oracle {want}")
        })?;
    }
    let secs = start.elapsed().as_secs_f64();
    check(secs < 120.0, || format!("took {secs:.1}s"))?;
    Ok(format!(
        "{P2_COUNT} P2 + {P1_COUNT} P1 instances, 0 mismatches in {secs:.2}s"
    ))
}

fn criterion_3() -> Outcome {
    let mut interrupted = 0;
    for (k, inst) in p2_corpus(3031, 1000, 10, 6, 3).iter().enumerate() {
        let problem = build_p2(&inst.votes, &inst.pairs, inst.budget).map_err(|e| e.to_string())?;
        let nodes = 1 + (k as u64 % 8);
        let r = solve(&problem, SolveLimits::nodes(nodes));
        if r.status != poison_cert::SolveStatus::Optimal {
            interrupted += 1;
        }
        let oracle = brute_force_p2(&inst.votes, &inst.pairs, inst.budget)
            .map_err(|e| e.to_string())?
            .max_changed;
        let m = inst.votes.num_samples();
        check(m - r.upper_bound <= m - oracle, || {
            format!(
                "instance {k}: certified CR {} above oracle CR {}",
                m - r.upper_bound,
                m - oracle
            )
        })?;
        check(r.incumbent_objective <= oracle, || {
            format!("instance {k}: incumbent above oracle")
        })?;
    }
    check(interrupted > 0, || "no solve was interrupted".into())?;
    Ok(format!(
        "1000 instances, {interrupted} interrupted, 0 over-certifications"
    ))
}

fn criterion_4() -> Outcome {
    let cfg = CertifyConfig::unlimited();
    let mut cases: Vec<(VoteMatrix, AttackStructure, Budget)> = p2_corpus(2024, P2_COUNT, 10, 6, 3)
        .into_iter()
        .map(|i| (i.votes, AttackStructure::Hash(i.pairs), i.budget))
        .collect();
    cases.extend(p1_corpus(2025, P1_COUNT, 10, 6, 12).into_iter().map(|i| {
        (
            i.votes,
            AttackStructure::Vanilla(i.membership),
            Budget::modifications(i.r_mod),
        )
    }));
    for (k, (votes, s, b)) in cases.iter().enumerate() {
        let err = |e: poison_cert::CertError| e.to_string();
        let sw = certify_samplewise(votes, s, *b, None, &cfg)
            .map_err(err)?
            .collective_robustness_lb;
        let d1 = certify_decomposed(votes, s, *b, None, 1, &cfg)
            .map_err(err)?
            .collective_robustness_lb;
        let d2 = certify_decomposed(votes, s, *b, None, 2, &cfg)
            .map_err(err)?
            .collective_robustness_lb;
        let d3 = certify_decomposed(votes, s, *b, None, 3, &cfg)
            .map_err(err)?
            .collective_robustness_lb;
        let exact = certify(votes, s, *b, None, &cfg)
            .map_err(err)?
            .collective_robustness_lb;
        if let AttackStructure::Hash(ps) = s {
            let closed = samplewise_collective_count(votes, ps, *b);
            check(closed == sw, || {
                format!("instance {k}: closed form {closed} vs sample-wise {sw}")
            })?;
        }
        check(
            sw == d1 && d1 <= d2 && d1 <= d3 && d2 <= exact && d3 <= exact,
            || format!("instance {k}: sw {sw} d1 {d1} d2 {d2} d3 {d3} exact {exact}"),
        )?;
    }
    Ok(format!(
        "{} instances satisfy sw == d1 <= d2, d3 <= exact",
        cases.len()
    ))
}

fn criterion_5() -> Outcome {
    let mut rng = synthetic::rng(5005);
    let cfg = CertifyConfig::unlimited();
    let mut done = 0;
    let mut tries = 0;
    while done < 100 {
        tries += 1;
        check(tries < 10_000, || {
            "could not draw enough coverable memberships".into()
        })?;
        let g = rng.gen_range(1..=9);
        let n = rng.gen_range(1..=14);
        let membership = random_membership(&mut rng, g, n, 10);
        let exact = tolerable_budget_exact(&membership).map_err(|e| e.to_string())?;
        let greedy = tolerable_budget_greedy(&membership);
        let r_bar = exact.r_bar.expect("exact bound computed");
        check(greedy.r_bar_upper >= r_bar, || {
            format!("greedy {} below exact {r_bar}", greedy.r_bar_upper)
        })?;
        let Tolerable::Finite(r) = r_bar else {
            continue;
        };
        let (m, c) = (rng.gen_range(1..=6), rng.gen_range(2..=3));
        let votes = random_votes(&mut rng, g, m, c);
        let cert = certify(
            &votes,
            &AttackStructure::Vanilla(membership),
            Budget::modifications(r),
            None,
            &cfg,
        )
        .map_err(|e| e.to_string())?;
        check(cert.collective_robustness_lb == 0, || {
            format!(
                "CR {} at r_mod = r_bar = {r}",
                cert.collective_robustness_lb
            )
        })?;
        done += 1;
    }
    Ok(format!(
        "100 instances certify CR 0 at r_bar; greedy >= exact on all {tries} draws"
    ))
}

/// Per classifier, the sorted payloads of its sub-trainset.
fn contents(records: &[SampleRecord], m: &Membership) -> Vec<Vec<Vec<u8>>> {
    m.subtrainsets()
        .into_iter()
        .map(|set| {
            let mut p: Vec<Vec<u8>> = set
                .into_iter()
                .map(|i| records[i].payload.clone())
                .collect();
            p.sort();
            p
        })
        .collect()
}

fn max_changed_per_pair(
    pairs: &PairStructure,
    before: &[Vec<Vec<u8>>],
    after: &[Vec<Vec<u8>>],
) -> usize {
    let mut per_pair: BTreeMap<usize, usize> = BTreeMap::new();
    for g in 0..pairs.num_classifiers() {
        if before[g] != after[g] {
            *per_pair.entry(pairs.pair_of(g)).or_default() += 1;
        }
    }
    per_pair.values().copied().max().unwrap_or(0)
}

fn criterion_6() -> Outcome {
    let mut rng = synthetic::rng(6006);
    for _ in 0..50 {
        let g = rng.gen_range(1..=10);
        let k = rng.gen_range(1..=20);
        let records = random_records(&mut rng, g * k);
        let m = subsample(&records, g, k).map_err(|e| e.to_string())?;
        check(m.sets().iter().all(|s| s.len() == 1), || {
            format!("G={g} K={k}: a sample is not in exactly one set")
        })?;
        let covered: BTreeSet<usize> = m.subtrainsets().into_iter().flatten().collect();
        check(covered.len() == g * k, || {
            format!("G={g} K={k}: sets do not cover the trainset")
        })?;
    }

    let (mut mods, mut ins, mut dels) = (0, 0, 0);
    for step in 0..300 {
        let g = rng.gen_range(2..=12);
        let n = rng.gen_range(4..=60);
        let k = rng.gen_range(1..=n);
        let mut records = random_records(&mut rng, n);
        let pairs = PairStructure::for_trainset(g, n, k).map_err(|e| e.to_string())?;
        let before = contents(
            &records,
            &subsample_with_pairs(&records, pairs).map_err(|e| e.to_string())?,
        );
        let (limit, kind) = match step % 3 {
            0 => {
                let i = rng.gen_range(0..n);
                records[i].payload.push(rng.gen());
                mods += 1;
                (2, "modification")
            }
            1 => {
                records.push(SampleRecord::new(n, vec![rng.gen::<u8>(); 9]));
                ins += 1;
                (1, "insertion")
            }
            _ => {
                records.remove(rng.gen_range(0..n));
                dels += 1;
                (1, "deletion")
            }
        };
        let after = contents(
            &records,
            &subsample_with_pairs(&records, pairs).map_err(|e| e.to_string())?,
        );
        let changed = max_changed_per_pair(&pairs, &before, &after);
        check(changed <= limit, || {
            format!("one {kind} changed {changed} sub-trainsets in a pair")
        })?;
    }

    let records = random_records(&mut rng, 200);
    let a = subsample(&records, 25, 30)
        .map_err(|e| e.to_string())?
        .to_json();
    let b = subsample(&records, 25, 30)
        .map_err(|e| e.to_string())?
        .to_json();
    check(a == b, || "membership JSON differs between runs".into())?;
    Ok(format!("disjoint cover holds; {mods} modifications, {ins} insertions, {dels} deletions within limits; JSON stable"))
}

fn criterion_7() -> Outcome {
    let mut n = 0;
    for inst in p2_corpus(2024, P2_COUNT, 10, 6, 3) {
        let rows: Vec<usize> = (0..inst.votes.num_samples()).collect();
        let on = build_p2_rows(&inst.votes, &inst.pairs, inst.budget, &rows, true)
            .map_err(|e| e.to_string())?;
        let off = build_p2_rows(&inst.votes, &inst.pairs, inst.budget, &rows, false)
            .map_err(|e| e.to_string())?;
        let a = solve(&on, SolveLimits::unlimited()).incumbent_objective;
        let b = solve(&off, SolveLimits::unlimited()).incumbent_objective;
        check(a == b, || {
            format!("P2 instance {n}: filtered {a}, unfiltered {b}")
        })?;
        n += 1;
    }
    for inst in p1_corpus(2025, P1_COUNT, 10, 6, 12) {
        let rows: Vec<usize> = (0..inst.votes.num_samples()).collect();
        let b = Budget::modifications(inst.r_mod);
        let on = build_p1_rows(&inst.votes, &inst.membership, b, &rows, true)
            .map_err(|e| e.to_string())?;
        let off = build_p1_rows(&inst.votes, &inst.membership, b, &rows, false)
            .map_err(|e| e.to_string())?;
        let x = solve(&on, SolveLimits::unlimited()).incumbent_objective;
        let y = solve(&off, SolveLimits::unlimited()).incumbent_objective;
        check(x == y, || {
            format!("P1 instance {n}: filtered {x}, unfiltered {y}")
        })?;
        n += 1;
    }
    Ok(format!(
        "{n} instances give identical M_ATK with and without the filter"
    ))
}

fn criterion_8() -> Outcome {
    let mut rng = synthetic::rng(8008);
    let (mut p1, mut p2, mut skipped) = (0, 0, 0);
    while p1 + p2 < 100 {
        let g = 2 * rng.gen_range(0..=3) + 1;
        let m = rng.gen_range(1..=4);
        let votes = random_votes(&mut rng, g, m, 2);
        let use_p1 = (p1 + p2) % 3 == 0;
        let (problem, membership) = if use_p1 {
            let n = rng.gen_range(1..=5);
            let mem = random_membership(&mut rng, g, n, 4);
            let r = rng.gen_range(0..=2);
            (
                build_p1(&votes, &mem, r).map_err(|e| e.to_string())?,
                Some(mem),
            )
        } else {
            let pairs = synthetic::random_pairs(&mut rng, g);
            let b = Budget::new(rng.gen_range(0..=2), 0, 0);
            (
                build_p2(&votes, &pairs, b).map_err(|e| e.to_string())?,
                None,
            )
        };
        if tie_rule_may_bind(&problem) {
            skipped += 1;
            continue;
        }
        let native = solve(&problem, SolveLimits::unlimited()).incumbent_objective as i64;
        let std = to_standard_form(&problem, membership.as_ref()).map_err(|e| e.to_string())?;
        let (opt, x) = solve_standard(&std, 5_000_000)
            .map_err(|e| e.to_string())?
            .ok_or_else(|| "standard form infeasible".to_string())?;
        check(std.is_feasible(&x), || {
            "standard optimum violates a constraint".into()
        })?;
        check(opt == native, || format!("standard {opt}, native {native}"))?;
        if use_p1 {
            p1 += 1;
        } else {
            p2 += 1;
        }
    }
    Ok(format!(
        "{p2} P2 + {p1} P1 instances agree ({skipped} skipped where ties could bind)"
    ))
}

fn criterion_9() -> Outcome {
    let start = Instant::now();
    let mut rng = synthetic::rng(9009);
    let g = 30;
    let votes = margin_votes(&mut rng, g, 80, 3, g);
    let structure = AttackStructure::Hash(PairStructure::single(g));
    let points: Vec<SweepPoint> = (1..=10)
        .map(|k| SweepPoint::from_fraction(0.05 * k as f64, g))
        .collect();
    let cfg = CertifyConfig {
        time_per_sample: None,
        node_limit: Some(20_000),
        ..CertifyConfig::default()
    };
    let rows = sweep(
        &votes,
        &structure,
        None,
        &points,
        &[Method::SampleWise, Method::Collective],
        1,
        &cfg,
    )
    .map_err(|e| e.to_string())?;
    let mut last_cr: Option<usize> = None;
    let mut bounded = 0;
    for pair in rows.chunks(2) {
        if pair[1].status != poison_cert::CertStatus::Exact {
            bounded += 1;
        }
        let (sw, col) = (&pair[0], &pair[1]);
        check(col.cr >= sw.cr, || {
            format!(
                "budget {}: collective {} < sample-wise {}",
                sw.budget_fraction, col.cr, sw.cr
            )
        })?;
        check(col.alpha.flatten().is_none_or(|a| a >= 0.0), || {
            format!("budget {}: negative alpha", sw.budget_fraction)
        })?;
        if let Some(prev) = last_cr {
            check(col.cr <= prev, || {
                format!(
                    "budget {}: CR rose from {prev} to {}",
                    sw.budget_fraction, col.cr
                )
            })?;
        }
        last_cr = Some(col.cr);
    }
    let secs = start.elapsed().as_secs_f64();
    check(secs < 60.0, || format!("took {secs:.1}s"))?;
    let crs: Vec<String> = rows
        .chunks(2)
        .map(|p| format!("{}/{}", p[0].cr, p[1].cr))
        .collect();
    Ok(format!(
        "sample-wise/collective CR by budget 5%..50%: {} ({bounded} anytime bounds) in {secs:.2}s",
        crs.join(" ")
    ))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 9] = [
        ("golden instance", criterion_1),
        ("oracle equivalence", criterion_2),
        ("anytime soundness", criterion_3),
        ("sandwich property", criterion_4),
        ("tolerable budget collapse", criterion_5),
        ("hash bagging structure", criterion_6),
        ("breakable-set soundness", criterion_7),
        ("standard-form equivalence", criterion_8),
        ("synthetic budget sweep", criterion_9),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        match run() {
            Ok(detail) => println!("criterion {} ({name}): PASS - {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {} ({name}): FAIL - {detail}", i + 1);
            }
        }
    }
    println!(
        "acceptance: {}/{} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
