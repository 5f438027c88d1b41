//! Test-only oracles and generators shared by the integration suites.
#![allow(dead_code)]

use ksubmax::cuts::Cut;
use ksubmax::dcg::FeasibleRegion;
use ksubmax::milp::{LinearConstraint, MasterProblem};
use ksubmax::oracle::{CoverageOracle, EntropyOracle, ModularOracle, ObservationMatrix, TableOracle, ValueOracle};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use ksubmax::{GroundSet, KSet};
use rand::Rng;

/// Exhaustive maximum of a master problem over every binary x.
/// Returns `None` when no binary point is feasible.
pub fn brute_force_master(p: &MasterProblem) -> Option<(Vec<u8>, f64)> {
    let ground = p.ground();
    let dim = ground.dim();
    assert!(dim <= 20);
    let mut best: Option<(Vec<u8>, f64)> = None;
    for mask in 0u32..(1 << dim) {
        let bits: Vec<u8> = (0..dim).map(|j| ((mask >> j) & 1) as u8).collect();
        let x: Vec<f64> = bits.iter().map(|&b| b as f64).collect();
        if !p.side_constraints().iter().all(|c| c.is_satisfied(&x, 1e-9)) {
            continue;
        }
        let eta = p
            .cuts()
            .iter()
            .map(|c| c.rhs_relaxed(&x))
            .fold(f64::INFINITY, f64::min);
        if eta < p.eta_lower() {
            continue;
        }
        if best.as_ref().is_none_or(|b| eta > b.1) {
            best = Some((bits, eta));
        }
    }
    best
}

/// A random master with at most `max_cuts` cuts and a few side rows.
pub fn random_master<R: Rng>(rng: &mut R, max_dim: usize, max_cuts: usize) -> MasterProblem {
    let (n, k) = loop {
        let n = rng.random_range(1..=6);
        let k = rng.random_range(1..=3);
        if n * k <= max_dim {
            break (n, k);
        }
    };
    let ground = GroundSet::new(n, k).unwrap();
    let dim = ground.dim();
    let mut side = Vec::new();
    if rng.random_bool(0.7) {
        for i in 0..n {
            side.push(LinearConstraint::le((0..k).map(|q| (ground.var_index(q, i), 1.0)), 1.0).unwrap());
        }
    }
    for _ in 0..rng.random_range(0..4) {
        let mut coeffs: Vec<(usize, f64)> = Vec::new();
        for j in 0..dim {
            if rng.random_bool(0.5) {
                let a = rng.random_range(-2i32..=3) as f64;
                if a != 0.0 {
                    coeffs.push((j, a));
                }
            }
        }
        if coeffs.is_empty() {
            continue;
        }
        let rhs = rng.random_range(-1i32..=3) as f64;
        let c = if rng.random_bool(0.8) {
            LinearConstraint::le(coeffs, rhs)
        } else {
            LinearConstraint::ge(coeffs, rhs)
        };
        side.push(c.unwrap());
    }
    let eta_lower = if rng.random_bool(0.5) { -50.0 } else { f64::NEG_INFINITY };
    let mut p = MasterProblem::new(ground, side, eta_lower).unwrap();
    for _ in 0..rng.random_range(1..=max_cuts) {
        let c0 = rng.random_range(-2.0..10.0);
        let coeffs = (0..dim)
            .map(|_| {
                if rng.random_bool(0.3) {
                    0.0
                } else {
                    rng.random_range(-5.0..5.0)
                }
            })
            .collect();
        p.add_cut(Cut::new(c0, coeffs, KSet::empty(ground)).unwrap()).unwrap();
    }
    p
}

/// Random discretized readings `[feature][location][sample]`.
pub fn random_readings<R: Rng>(rng: &mut R, k: usize, n: usize, t: usize, bins: &[u32]) -> Vec<Vec<Vec<u32>>> {
    (0..k)
        .map(|f| {
            (0..n)
                .map(|_| (0..t).map(|_| rng.random_range(0..bins[f])).collect())
                .collect()
        })
        .collect()
}

/// Entropy by a direct tally of joint outcome tuples. Counts are summed in
/// ascending order, so equal tallies give bit-identical values.
#[allow(clippy::needless_range_loop)]
pub fn tally_entropy(readings: &[Vec<Vec<u32>>], labels: &[u8]) -> f64 {
    let t = readings[0][0].len();
    let mut tally: std::collections::HashMap<Vec<u32>, u32> = std::collections::HashMap::new();
    for sample in 0..t {
        let outcome: Vec<u32> = labels
            .iter()
            .enumerate()
            .filter(|(_, &l)| l > 0)
            .map(|(i, &l)| readings[l as usize - 1][i][sample])
            .collect();
        *tally.entry(outcome).or_insert(0) += 1;
    }
    let mut counts: Vec<u32> = tally.into_values().collect();
    counts.sort_unstable();
    counts
        .iter()
        .map(|&c| {
            let p = c as f64 / t as f64;
            -p * p.ln()
        })
        .sum::<f64>()
        .max(0.0)
}

/// Every k-set on `ground`, built from labels by counting in base k+1.
pub fn all_ksets(ground: GroundSet) -> Vec<KSet> {
    let (n, k) = (ground.n(), ground.k());
    let total = (k + 1).pow(n as u32);
    (0..total)
        .map(|mut r| {
            let mut labels = vec![0u8; n];
            for i in (0..n).rev() {
                labels[i] = (r % (k + 1)) as u8;
                r /= k + 1;
            }
            KSet::from_labels(k, labels).unwrap()
        })
        .collect()
}

/// Best value over `region` by plain enumeration, independent of the
/// library's search.
pub fn brute_max(o: &dyn ValueOracle, region: &FeasibleRegion) -> Option<f64> {
    all_ksets(o.ground())
        .iter()
        .filter(|s| region.contains(s))
        .map(|s| o.value(s))
        .fold(None, |best: Option<f64>, v| Some(best.map_or(v, |b| b.max(v))))
}

/// `f(X) + f(Y) ≥ f(X ⊓ Y) + f(X ⊔ Y)` over all pairs, with meet and join
/// written out on labels.
pub fn brute_def1(o: &dyn ValueOracle, tol: f64) -> bool {
    let sets = all_ksets(o.ground());
    let k = o.ground().k();
    let values: Vec<f64> = sets.iter().map(|s| o.value(s)).collect();
    for (a, x) in sets.iter().enumerate() {
        for (b, y) in sets.iter().enumerate().skip(a) {
            let (lx, ly) = (x.labels(), y.labels());
            let meet: Vec<u8> = lx.iter().zip(ly).map(|(&p, &q)| if p == q { p } else { 0 }).collect();
            let join: Vec<u8> = lx
                .iter()
                .zip(ly)
                .map(|(&p, &q)| match (p, q) {
                    (0, q) => q,
                    (p, 0) => p,
                    (p, q) if p == q => p,
                    _ => 0,
                })
                .collect();
            let m = o.value(&KSet::from_labels(k, meet).unwrap());
            let j = o.value(&KSet::from_labels(k, join).unwrap());
            if values[a] + values[b] + tol < m + j {
                return false;
            }
        }
    }
    true
}

/// Random weights `[q][i]` in `[lo, hi)`.
pub fn random_weights<R: Rng>(rng: &mut R, n: usize, k: usize, lo: f64, hi: f64) -> Vec<Vec<f64>> {
    (0..k).map(|_| (0..n).map(|_| rng.random_range(lo..hi)).collect()).collect()
}

/// Random coverage instance: each (q, i) covers a few of `u` items.
pub fn random_coverage<R: Rng>(rng: &mut R, n: usize, k: usize, u: usize) -> CoverageOracle {
    let covers = (0..k)
        .map(|_| {
            (0..n)
                .map(|_| (0..u).filter(|_| rng.random_bool(0.35)).collect())
                .collect()
        })
        .collect();
    let weights = (0..u).map(|_| rng.random_range(0.5..3.0)).collect();
    CoverageOracle::new(u, covers, weights).unwrap()
}

/// `|S_1| − |S_2|`, the standard non-monotone k-submodular example.
pub fn s1_minus_s2(n: usize) -> ModularOracle {
    ModularOracle::new(&[vec![1.0; n], vec![-1.0; n]]).unwrap()
}

/// Random bounds with `Σ B_q ≤ n`.
pub fn random_bounds<R: Rng>(rng: &mut R, n: usize, k: usize) -> Vec<usize> {
    loop {
        let b: Vec<usize> = (0..k).map(|_| rng.random_range(0..=n.min(3))).collect();
        if b.iter().sum::<usize>() <= n {
            return b;
        }
    }
}

/// A random oracle from the families used throughout the suites, with a
/// description for failure messages.
pub fn random_oracle<R: Rng>(rng: &mut R, family: usize) -> (Box<dyn ValueOracle>, String) {
    let n = rng.random_range(2..=6);
    let k = rng.random_range(2..=3);
    match family % 4 {
        0 => {
            let t = rng.random_range(4..=20);
            let bins: Vec<u32> = (0..k).map(|_| rng.random_range(2..=3)).collect();
            let r = random_readings(rng, k, n, t, &bins);
            let o = EntropyOracle::new(ObservationMatrix::from_nested(&r).unwrap()).unwrap();
            (Box::new(o), format!("entropy n={n} k={k} t={t}"))
        }
        1 => {
            let u = rng.random_range(3..=8);
            (Box::new(random_coverage(rng, n, k, u)), format!("coverage n={n} k={k} u={u}"))
        }
        2 => {
            let w = random_weights(rng, n, k, 0.0, 5.0);
            (Box::new(ModularOracle::new(&w).unwrap()), format!("modular n={n} k={k}"))
        }
        _ => (Box::new(s1_minus_s2(n)), format!("|S1|-|S2| n={n}")),
    }
}

/// Random k-submodular but non-monotone tables: a modular part with some
/// negative weights (every pair of weights at one element sums to at least
/// zero) plus a small coverage term.
pub fn non_monotone_tables(count: usize, seed: u64) -> Vec<TableOracle> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    while out.len() < count {
        let n = rng.random_range(2..=4);
        let k = rng.random_range(2..=3);
        let mut w = random_weights(&mut rng, n, k, 0.0, 3.0);
        let i = rng.random_range(0..n);
        let q = rng.random_range(0..k);
        w[q][i] = -rng.random_range(0.5..2.0);
        let min_other = (0..k).filter(|&p| p != q).map(|p| w[p][i]).fold(f64::INFINITY, f64::min);
        if min_other + w[q][i] < 0.0 {
            for p in (0..k).filter(|&p| p != q) {
                w[p][i] = w[p][i].max(-w[q][i]);
            }
        }
        let modular = ModularOracle::new(&w).unwrap();
        let cover = random_coverage(&mut rng, n, k, 4);
        let scale = rng.random_range(0.0..0.3);
        let t = TableOracle::from_fn(modular.ground(), |s| modular.value(s) + scale * cover.value(s)).unwrap();
        if t.is_monotone() || !brute_def1(&t, 1e-9) {
            continue;
        }
        out.push(t);
    }
    out
}

/// A table that is k-submodular, or a random distortion of one.
pub fn random_table<R: Rng>(rng: &mut R, broken: bool) -> TableOracle {
    let n = rng.random_range(2..=3);
    let k = rng.random_range(2..=3);
    let ground = GroundSet::new(n, k).unwrap();
    let cover = random_coverage(rng, n, k, 5);
    let w = random_weights(rng, n, k, -1.0, 2.0);
    let modular = ModularOracle::new(&w).unwrap();
    let noise = if broken { rng.random_range(0.2..3.0) } else { 0.0 };
    let values: Vec<f64> = all_ksets(ground)
        .iter()
        .map(|s| {
            if s.is_empty() {
                0.0
            } else {
                cover.value(s) + 0.1 * modular.value(s) + noise * rng.random_range(-1.0..1.0)
            }
        })
        .collect();
    TableOracle::from_values(ground, values).unwrap()
}
