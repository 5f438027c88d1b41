mod common;

use common::{brute_force_master, random_master};
use ksubmax::milp::{bb_solve, lp_solve, BbStatus, LpStatus};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn bb_matches_enumeration_on_random_masters() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for case in 0..300 {
        let p = random_master(&mut rng, 12, 30);
        let res = bb_solve(&p).unwrap();
        match brute_force_master(&p) {
            None => assert_eq!(res.status, BbStatus::Infeasible, "case {case}"),
            Some((_, eta)) => {
                assert_eq!(res.status, BbStatus::Optimal, "case {case}");
                assert!((res.eta - eta).abs() <= 1e-8, "case {case}: bb {} vs brute {}", res.eta, eta);
                let x = res.x.as_ref().unwrap();
                let xf: Vec<f64> = x.as_slice().iter().map(|&b| b as f64).collect();
                assert!(p.side_constraints().iter().all(|c| c.is_satisfied(&xf, 1e-9)));
                for c in p.cuts() {
                    assert!(c.rhs_relaxed(&xf) - res.eta >= -1e-6);
                }
            }
        }
    }
}

#[test]
fn relaxation_dominates_binary_optimum() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..100 {
        let p = random_master(&mut rng, 12, 20);
        let dim = p.ground().dim();
        let lp = lp_solve(&p, &vec![(0.0, 1.0); dim]).unwrap();
        if let Some((_, eta)) = brute_force_master(&p) {
            assert_eq!(lp.status, LpStatus::Optimal);
            assert!(lp.eta >= eta - 1e-9);
        }
    }
}

#[test]
fn more_cuts_never_raise_the_optimum() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..100 {
        let full = random_master(&mut rng, 10, 25);
        let mut partial = ksubmax::milp::MasterProblem::new(
            full.ground(),
            full.side_constraints().to_vec(),
            full.eta_lower(),
        )
        .unwrap();
        let keep = full.cuts().len().div_ceil(2);
        for c in &full.cuts()[..keep] {
            partial.add_cut(c.clone()).unwrap();
        }
        let (a, b) = (bb_solve(&partial).unwrap(), bb_solve(&full).unwrap());
        if b.status == BbStatus::Optimal {
            assert!(b.eta <= a.eta + 1e-9);
        }
    }
}
