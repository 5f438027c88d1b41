//! Acceptance run: one PASS/FAIL line per criterion.

mod common;

use std::time::Instant;

use common::*;
use ksubmax::cuts::{monotone_transform, CutBuilder, XiValues};
use ksubmax::dcg::{solve, FeasibleRegion, SolveConfig, SolveReport, SolveStatus};
use ksubmax::instances::synthetic_instance;
use ksubmax::milp::{bb_solve, BbStatus};
use ksubmax::oracle::*;
use ksubmax::verify::{check_c1_c2, check_k_submodular_def1, check_monotone, count_exact_feasible, exhaustive_max};
use ksubmax::{GroundSet, KSet};
use num_bigint::BigUint;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: String) -> Outcome {
    Outcome { passed, detail }
}

/// Problems with the trajectory, if any.
fn trajectory_issue(r: &SolveReport, epsilon: f64) -> Option<String> {
    for w in r.trajectory.windows(2) {
        if w[1].ub > w[0].ub {
            return Some(format!("UB rose at iteration {}", w[1].iteration));
        }
        if w[1].lb < w[0].lb {
            return Some(format!("LB fell at iteration {}", w[1].iteration));
        }
    }
    if let Some(p) = r.trajectory.iter().find(|p| p.lb > p.ub) {
        return Some(format!("LB above UB at iteration {}: {:?}", p.iteration, r.trajectory));
    }
    if r.gap > epsilon {
        return Some(format!("final gap {} above {epsilon}", r.gap));
    }
    None
}

/// Entropy (n ≤ 6, t ≤ 20, k ∈ {2,3}), coverage, modular and |S1|−|S2|
/// oracles in turn, each with random bounds.
fn exactness_instances() -> Vec<(Box<dyn ValueOracle>, String, FeasibleRegion)> {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    (0..50)
        .map(|i| {
            let (o, name) = random_oracle(&mut rng, i);
            let g = o.ground();
            let region = FeasibleRegion::per_type(random_bounds(&mut rng, g.n(), g.k()));
            (o, name, region)
        })
        .collect()
}

fn criterion_1_and_8(traj_issues: &mut Vec<String>) -> Outcome {
    let epsilon = 1e-9;
    let cfg = SolveConfig::default().with_epsilon(epsilon);
    let mut worst = 0.0f64;
    let mut failures = Vec::new();
    let instances = exactness_instances();
    for (o, name, region) in &instances {
        let r = solve(o.as_ref(), region, &cfg).expect("solve runs");
        let es = exhaustive_max(o.as_ref(), region, None).expect("enumeration runs");
        let diff = (r.lb - es.value).abs();
        worst = worst.max(diff);
        if r.status != SolveStatus::Optimal || diff > 1e-9 {
            failures.push(format!("{name} B={:?}: {:?} dcg {} es {}", region.per_type, r.status, r.lb, es.value));
        }
        if let Some(issue) = trajectory_issue(&r, epsilon) {
            traj_issues.push(format!("{name}: {issue}"));
        }
    }
    outcome(
        failures.is_empty(),
        format!(
            "{} instances, max |DCG - ES| = {worst:.2e}{}",
            instances.len(),
            failures.first().map_or(String::new(), |f| format!("; first failure: {f}"))
        ),
    )
}

fn criterion_2() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let instances = exactness_instances();
    let (mut generators, mut cuts, mut worst_excess, mut worst_slack) = (0usize, 0usize, f64::NEG_INFINITY, 0.0f64);
    for (o, _, region) in &instances {
        let g = o.ground();
        let builder = CutBuilder::new(o.as_ref());
        let xi = XiValues::PerElement(xi_exact_all(o.as_ref(), XI_PARTITION_CAP).unwrap());
        let zeta = XiValues::Uniform(xi_bound(o.as_ref()).unwrap());
        let feasible: Vec<KSet> = all_ksets(g).into_iter().filter(|s| region.contains(s)).collect();
        let values: Vec<f64> = feasible.iter().map(|s| o.value(s)).collect();
        for _ in 0..5 {
            let labels = (0..g.n()).map(|_| rng.random_range(0..=g.k()) as u8).collect();
            let s = KSet::from_labels(g.k(), labels).unwrap();
            generators += 1;
            let mut family = vec![builder.general(&s, &xi).unwrap(), builder.general(&s, &zeta).unwrap()];
            if o.is_monotone() {
                family.push(builder.monotone(&s).unwrap());
            }
            for c in family {
                cuts += 1;
                worst_slack = worst_slack.max((c.rhs_at(&s) - o.value(&s)).abs());
                for (x, v) in feasible.iter().zip(&values) {
                    worst_excess = worst_excess.max(v - c.rhs_at(x));
                }
            }
        }
    }
    outcome(
        generators >= 200 && worst_excess <= 1e-9 && worst_slack <= 1e-9,
        format!(
            "{generators} generators, {cuts} cuts, max f(X) - rhs = {worst_excess:.2e}, max tightness error = {worst_slack:.2e}"
        ),
    )
}

fn criterion_3() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (mut agree, mut failing) = (0usize, 0usize);
    let total = 60;
    for i in 0..total {
        let t = random_table(&mut rng, i % 2 == 1);
        let a = check_k_submodular_def1(&t).unwrap().passed;
        let b = check_c1_c2(&t).unwrap().passed;
        agree += usize::from(a == b);
        failing += usize::from(!a);
    }
    outcome(
        agree == total && failing > 0 && failing < total,
        format!("{agree}/{total} tables agree, {failing} of them not k-submodular"),
    )
}

fn criterion_4() -> Outcome {
    let mut oracles: Vec<(Box<dyn ValueOracle>, String)> = vec![(Box::new(s1_minus_s2(4)), "|S1|-|S2| n=4".into())];
    for (j, t) in non_monotone_tables(10, 4).into_iter().enumerate() {
        let g = t.ground();
        oracles.push((Box::new(t), format!("perturbed modular #{j} n={} k={}", g.n(), g.k())));
    }
    let mut failures = Vec::new();
    let count = oracles.len();
    for (o, name) in oracles {
        let was_monotone = check_monotone(&o).unwrap().passed;
        let xi = xi_exact_all(o.as_ref(), XI_PARTITION_CAP).unwrap();
        let f = monotone_transform(o, xi).unwrap();
        let mono = check_monotone(&f).unwrap().passed;
        let def1 = check_k_submodular_def1(&f).unwrap().passed;
        if was_monotone || !mono || !def1 {
            failures.push(name);
        }
    }
    outcome(
        failures.is_empty(),
        format!("{count} non-monotone oracles, transforms failing: {failures:?}"),
    )
}

fn criterion_5() -> Outcome {
    let count = count_exact_feasible(50, 2, &[5, 5]).unwrap();
    let expected = BigUint::from(2_118_760u64) * BigUint::from(1_221_759u64);
    let approx: f64 = count.to_string().parse().unwrap();
    let three_sig = format!("{approx:.2e}");
    outcome(
        count == expected && three_sig == "2.59e12",
        format!("count = {count} = C(50,5)*C(45,5), about {three_sig}"),
    )
}

fn criterion_6(traj_issues: &mut Vec<String>) -> Outcome {
    let inst = synthetic_instance(20, 50, 2, 0).unwrap();
    let o = inst.oracle(LogBase::Natural).unwrap();
    let region = inst.region();
    let cfg = SolveConfig::default().with_time_limit(60.0);
    let r = solve(&o, &region, &cfg).unwrap();
    let es = exhaustive_max(&o, &region, None).unwrap();
    if let Some(issue) = trajectory_issue(&r, cfg.epsilon) {
        traj_issues.push(format!("n=20 cell: {issue}"));
    }
    let same_value = (r.lb - es.value).abs() <= 1e-9;
    let passed =
        r.status == SolveStatus::Optimal && r.wall_time_s <= 60.0 && same_value && (5..=500).contains(&r.cuts_added);
    outcome(
        passed,
        format!(
            "B={:?}: {:?} in {:.2} s, {} cuts, {} nodes, DCG {:.9} {} vs ES {:.9} {} ({:.2} s)",
            inst.spec.b,
            r.status,
            r.wall_time_s,
            r.cuts_added,
            r.total_bb_nodes,
            r.lb,
            r.incumbent_text.as_deref().unwrap_or("-"),
            es.value,
            es.best.as_ref().map_or("-".into(), |s| s.to_string()),
            es.wall_time_s,
        ),
    )
}

fn criterion_7() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7007);
    let (mut matched, mut worst) = (0usize, 0.0f64);
    let total = 100;
    for _ in 0..total {
        let p = random_master(&mut rng, 12, 30);
        let res = bb_solve(&p).unwrap();
        match brute_force_master(&p) {
            None => matched += usize::from(res.status == BbStatus::Infeasible),
            Some((_, eta)) => {
                let diff = (res.eta - eta).abs();
                worst = worst.max(diff);
                matched += usize::from(res.status == BbStatus::Optimal && diff <= 1e-8);
            }
        }
    }
    outcome(matched == total, format!("{matched}/{total} masters match, max |bb - brute| = {worst:.2e}"))
}

fn criterion_9() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut mismatches = 0usize;
    let total = 1000;
    for _ in 0..total / 10 {
        let n = rng.random_range(1..=8);
        let t = rng.random_range(1..=50);
        let k = rng.random_range(1..=3);
        let bins: Vec<u32> = (0..k).map(|_| rng.random_range(1..=4)).collect();
        let r = random_readings(&mut rng, k, n, t, &bins);
        let o = EntropyOracle::new(ObservationMatrix::from_nested(&r).unwrap()).unwrap();
        let g: GroundSet = o.ground();
        for _ in 0..10 {
            let labels: Vec<u8> = (0..n).map(|_| rng.random_range(0..=k) as u8).collect();
            let s = KSet::from_labels(g.k(), labels.clone()).unwrap();
            mismatches += usize::from(o.value(&s).to_bits() != tally_entropy(&r, &labels).to_bits());
        }
    }
    outcome(mismatches == 0, format!("{total} placements, {mismatches} differ from the direct tally"))
}

fn main() {
    let mut all_passed = true;
    let mut report = |id: u32, run: &mut dyn FnMut() -> Outcome| {
        let start = Instant::now();
        let o = run();
        let verdict = if o.passed { "PASS" } else { "FAIL" };
        println!("criterion {id}: {verdict} ({:.1} s) {}", start.elapsed().as_secs_f64(), o.detail);
        all_passed &= o.passed;
    };
    let mut traj_issues = Vec::new();
    report(1, &mut || criterion_1_and_8(&mut traj_issues));
    report(2, &mut criterion_2);
    report(3, &mut criterion_3);
    report(4, &mut criterion_4);
    report(5, &mut criterion_5);
    report(6, &mut || criterion_6(&mut traj_issues));
    report(7, &mut criterion_7);
    report(8, &mut || {
        outcome(
            traj_issues.is_empty(),
            format!("trajectories of criteria 1 and 6, problems: {traj_issues:?}"),
        )
    });
    report(9, &mut criterion_9);
    if !all_passed {
        std::process::exit(1);
    }
}
