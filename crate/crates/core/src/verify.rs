//! Certification of k-submodularity and monotonicity, exhaustive search,
//! and feasible-set counting.
//!
//! The checkers enumerate every k-set when `(k+1)^n` is within the cap and
//! otherwise either sample random instances of the inequality or refuse.
//! A failed check always carries a witness that can be re-evaluated with
//! [`Witness::is_violation`].

use num_bigint::BigUint;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dcg::FeasibleRegion;
use crate::error::{Error, Result};
use crate::kset::{GroundSet, KSet};
use crate::oracle::{ValueOracle, VALUE_TOL};

/// Default cap on `(k+1)^n` for exhaustive checking.
pub const DEFAULT_CHECK_CAP: u128 = 4096;

#[derive(Clone, Debug, PartialEq)]
pub struct VerifyConfig {
    /// Largest `(k+1)^n` enumerated exhaustively.
    pub cap: u128,
    /// Fall back to random sampling above the cap instead of failing.
    pub sample_above_cap: bool,
    pub samples: u64,
    pub seed: u64,
    pub tol: f64,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        VerifyConfig {
            cap: DEFAULT_CHECK_CAP,
            sample_above_cap: true,
            samples: 200_000,
            seed: 0,
            tol: VALUE_TOL,
        }
    }
}

/// A concrete violation. Elements and subsets are 0-based.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Witness {
    /// `f(x) + f(y) < f(x ⊓ y) + f(x ⊔ y)`.
    Pair { x: KSet, y: KSet },
    /// Diminishing returns fails: `ρ_{qi,i}(x) < ρ_{qi,i}(x + j→qj)`.
    Partition {
        x: KSet,
        i: usize,
        qi: usize,
        j: usize,
        qj: usize,
    },
    /// `ρ_{q,i}(x) + ρ_{q2,i}(x) < 0`.
    CrossMarginal { x: KSet, i: usize, q: usize, q2: usize },
    /// `ρ_{q,i}(x) < 0`.
    Decrease { x: KSet, i: usize, q: usize },
}

impl Witness {
    /// Amount by which the inequality is violated (positive means violated).
    pub fn excess<O: ValueOracle + ?Sized>(&self, o: &O) -> Result<f64> {
        Ok(match self {
            Witness::Pair { x, y } => {
                o.eval(&x.meet(y)?)? + o.eval(&x.join(y)?)? - o.eval(x)? - o.eval(y)?
            }
            Witness::Partition { x, i, qi, j, qj } => {
                if i == j {
                    return Err(Error::InvalidElement { element: *j, n: x.n() });
                }
                o.marginal(&x.with(*j, *qj), *qi, *i)? - o.marginal(x, *qi, *i)?
            }
            Witness::CrossMarginal { x, i, q, q2 } => {
                if q == q2 {
                    return Err(Error::InvalidSubset { q: *q2, k: x.k() });
                }
                -(o.marginal(x, *q, *i)? + o.marginal(x, *q2, *i)?)
            }
            Witness::Decrease { x, i, q } => -o.marginal(x, *q, *i)?,
        })
    }

    pub fn is_violation<O: ValueOracle + ?Sized>(&self, o: &O, tol: f64) -> Result<bool> {
        Ok(self.excess(o)? > tol)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub check: String,
    pub passed: bool,
    pub witness: Option<Witness>,
    /// Number of inequality instances evaluated.
    pub checked_pairs: u64,
    pub sampled: bool,
}

impl VerificationReport {
    fn new(check: &str, witness: Option<Witness>, checked_pairs: u64, sampled: bool) -> Self {
        VerificationReport {
            check: check.into(),
            passed: witness.is_none(),
            witness,
            checked_pairs,
            sampled,
        }
    }
}

/// `f(k-set of rank r)` for every rank.
struct ValueTable {
    ground: GroundSet,
    values: Vec<f64>,
    /// `(k+1)^(n-1-i)`, the rank stride of element i.
    stride: Vec<usize>,
}

impl ValueTable {
    fn build<O: ValueOracle + ?Sized>(o: &O) -> Self {
        let ground = o.ground();
        let values = ground.ksets().map(|s| o.value(&s)).collect();
        let radix = ground.k() + 1;
        let mut stride = vec![1usize; ground.n()];
        for i in (0..ground.n().saturating_sub(1)).rev() {
            stride[i] = stride[i + 1] * radix;
        }
        ValueTable { ground, values, stride }
    }

    fn len(&self) -> usize {
        self.values.len()
    }

    fn label(&self, rank: usize, i: usize) -> usize {
        (rank / self.stride[i]) % (self.ground.k() + 1)
    }

    /// Rank after assigning the unassigned element `i` to subset `q`.
    fn add(&self, rank: usize, i: usize, q: usize) -> usize {
        rank + (q + 1) * self.stride[i]
    }

    fn rho(&self, rank: usize, i: usize, q: usize) -> f64 {
        self.values[self.add(rank, i, q)] - self.values[rank]
    }

    fn kset(&self, rank: usize) -> KSet {
        KSet::from_rank(self.ground, rank)
    }
}

enum Mode {
    Exhaustive,
    Sampled(Box<ChaCha8Rng>),
}

fn mode(ground: GroundSet, cfg: &VerifyConfig) -> Result<Mode> {
    let required = ((ground.k() + 1) as u128)
        .checked_pow(ground.n() as u32)
        .unwrap_or(u128::MAX);
    if required <= cfg.cap {
        Ok(Mode::Exhaustive)
    } else if cfg.sample_above_cap {
        Ok(Mode::Sampled(Box::new(ChaCha8Rng::seed_from_u64(cfg.seed))))
    } else {
        Err(Error::EnumerationCap {
            required,
            cap: cfg.cap,
            hint: "enable sampling to check a random subset",
        })
    }
}

fn random_kset(ground: GroundSet, rng: &mut impl Rng) -> KSet {
    let labels = (0..ground.n())
        .map(|_| rng.random_range(0..=ground.k()) as u8)
        .collect();
    KSet::from_labels(ground.k(), labels).expect("labels in range")
}

/// A random k-set with element `i` (and `j`, if given) left unassigned.
fn random_kset_without(ground: GroundSet, rng: &mut impl Rng, i: usize, j: Option<usize>) -> KSet {
    let mut s = random_kset(ground, rng);
    s.set(i, None);
    if let Some(j) = j {
        s.set(j, None);
    }
    s
}

pub fn check_k_submodular_def1<O: ValueOracle + ?Sized>(o: &O) -> Result<VerificationReport> {
    check_k_submodular_def1_with(o, &VerifyConfig::default())
}

/// `f(X) + f(Y) ≥ f(X ⊓ Y) + f(X ⊔ Y)` for every unordered pair.
pub fn check_k_submodular_def1_with<O: ValueOracle + ?Sized>(
    o: &O,
    cfg: &VerifyConfig,
) -> Result<VerificationReport> {
    const NAME: &str = "def1";
    let ground = o.ground();
    match mode(ground, cfg)? {
        Mode::Exhaustive => {
            let table = ValueTable::build(o);
            let sets: Vec<KSet> = ground.ksets().collect();
            let mut checked = 0u64;
            for a in 0..table.len() {
                for b in a..table.len() {
                    checked += 1;
                    let meet = sets[a].meet(&sets[b])?.rank();
                    let join = sets[a].join(&sets[b])?.rank();
                    let excess = table.values[meet] + table.values[join]
                        - table.values[a]
                        - table.values[b];
                    if excess > cfg.tol {
                        let w = Witness::Pair {
                            x: sets[a].clone(),
                            y: sets[b].clone(),
                        };
                        return Ok(VerificationReport::new(NAME, Some(w), checked, false));
                    }
                }
            }
            Ok(VerificationReport::new(NAME, None, checked, false))
        }
        Mode::Sampled(mut rng) => {
            for checked in 1..=cfg.samples {
                let w = Witness::Pair {
                    x: random_kset(ground, &mut rng),
                    y: random_kset(ground, &mut rng),
                };
                if w.is_violation(o, cfg.tol)? {
                    return Ok(VerificationReport::new(NAME, Some(w), checked, true));
                }
            }
            Ok(VerificationReport::new(NAME, None, cfg.samples, true))
        }
    }
}

pub fn check_c1_c2<O: ValueOracle + ?Sized>(o: &O) -> Result<VerificationReport> {
    check_c1_c2_with(o, &VerifyConfig::default())
}

/// Submodularity over every partition, via diminishing returns of single
/// additions, together with non-negative pairwise cross marginals.
pub fn check_c1_c2_with<O: ValueOracle + ?Sized>(
    o: &O,
    cfg: &VerifyConfig,
) -> Result<VerificationReport> {
    const NAME: &str = "c1c2";
    let ground = o.ground();
    let (n, k) = (ground.n(), ground.k());
    match mode(ground, cfg)? {
        Mode::Exhaustive => {
            let table = ValueTable::build(o);
            let mut checked = 0u64;
            for r in 0..table.len() {
                for i in (0..n).filter(|&i| table.label(r, i) == 0) {
                    for qi in 0..k {
                        let rho = table.rho(r, i, qi);
                        for j in (0..n).filter(|&j| j != i && table.label(r, j) == 0) {
                            for qj in 0..k {
                                checked += 1;
                                if table.rho(table.add(r, j, qj), i, qi) - rho > cfg.tol {
                                    let w = Witness::Partition {
                                        x: table.kset(r),
                                        i,
                                        qi,
                                        j,
                                        qj,
                                    };
                                    return Ok(VerificationReport::new(NAME, Some(w), checked, false));
                                }
                            }
                        }
                        for q2 in qi + 1..k {
                            checked += 1;
                            if -(rho + table.rho(r, i, q2)) > cfg.tol {
                                let w = Witness::CrossMarginal {
                                    x: table.kset(r),
                                    i,
                                    q: qi,
                                    q2,
                                };
                                return Ok(VerificationReport::new(NAME, Some(w), checked, false));
                            }
                        }
                    }
                }
            }
            Ok(VerificationReport::new(NAME, None, checked, false))
        }
        Mode::Sampled(mut rng) => {
            for checked in 1..=cfg.samples {
                let i = rng.random_range(0..n);
                let qi = rng.random_range(0..k);
                let w = if n > 1 && (k == 1 || rng.random_bool(0.5)) {
                    let j = (i + rng.random_range(1..n)) % n;
                    Witness::Partition {
                        x: random_kset_without(ground, &mut rng, i, Some(j)),
                        i,
                        qi,
                        j,
                        qj: rng.random_range(0..k),
                    }
                } else if k > 1 {
                    Witness::CrossMarginal {
                        x: random_kset_without(ground, &mut rng, i, None),
                        i,
                        q: qi,
                        q2: (qi + rng.random_range(1..k)) % k,
                    }
                } else {
                    continue;
                };
                if w.is_violation(o, cfg.tol)? {
                    return Ok(VerificationReport::new(NAME, Some(w), checked, true));
                }
            }
            Ok(VerificationReport::new(NAME, None, cfg.samples, true))
        }
    }
}

pub fn check_monotone<O: ValueOracle + ?Sized>(o: &O) -> Result<VerificationReport> {
    check_monotone_with(o, &VerifyConfig::default())
}

/// Every single-element addition has a non-negative marginal.
pub fn check_monotone_with<O: ValueOracle + ?Sized>(
    o: &O,
    cfg: &VerifyConfig,
) -> Result<VerificationReport> {
    const NAME: &str = "monotone";
    let ground = o.ground();
    let (n, k) = (ground.n(), ground.k());
    match mode(ground, cfg)? {
        Mode::Exhaustive => {
            let table = ValueTable::build(o);
            let mut checked = 0u64;
            for r in 0..table.len() {
                for i in (0..n).filter(|&i| table.label(r, i) == 0) {
                    for q in 0..k {
                        checked += 1;
                        if -table.rho(r, i, q) > cfg.tol {
                            let w = Witness::Decrease { x: table.kset(r), i, q };
                            return Ok(VerificationReport::new(NAME, Some(w), checked, false));
                        }
                    }
                }
            }
            Ok(VerificationReport::new(NAME, None, checked, false))
        }
        Mode::Sampled(mut rng) => {
            for checked in 1..=cfg.samples {
                let i = rng.random_range(0..n);
                let w = Witness::Decrease {
                    x: random_kset_without(ground, &mut rng, i, None),
                    i,
                    q: rng.random_range(0..k),
                };
                if w.is_violation(o, cfg.tol)? {
                    return Ok(VerificationReport::new(NAME, Some(w), checked, true));
                }
            }
            Ok(VerificationReport::new(NAME, None, cfg.samples, true))
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EsResult {
    /// Lexicographically smallest maximizer among the k-sets visited.
    pub best: Option<KSet>,
    pub value: f64,
    pub evaluations: u64,
    /// False when the evaluation budget ran out before the enumeration did.
    pub complete: bool,
    pub wall_time_s: f64,
}

/// Exhaustive search over the feasible region, one oracle call per
/// feasible k-set. Label vectors are visited in lexicographic order and
/// branches exceeding a cardinality bound are skipped.
pub fn exhaustive_max<O: ValueOracle + ?Sized>(
    o: &O,
    feas: &FeasibleRegion,
    budget: Option<u64>,
) -> Result<EsResult> {
    let start = std::time::Instant::now();
    let ground = o.ground();
    feas.validate(ground)?;
    let mut search = Es {
        o,
        feas,
        ground,
        budget: budget.unwrap_or(u64::MAX),
        labels: vec![0; ground.n()],
        counts: vec![0; ground.k()],
        total: 0,
        best: None,
        value: f64::NEG_INFINITY,
        evaluations: 0,
    };
    let complete = search.visit(0)?;
    Ok(EsResult {
        best: search.best,
        value: search.value,
        evaluations: search.evaluations,
        complete,
        wall_time_s: start.elapsed().as_secs_f64(),
    })
}

struct Es<'a, O: ?Sized> {
    o: &'a O,
    feas: &'a FeasibleRegion,
    ground: GroundSet,
    budget: u64,
    labels: Vec<u8>,
    counts: Vec<usize>,
    total: usize,
    best: Option<KSet>,
    value: f64,
    evaluations: u64,
}

impl<O: ValueOracle + ?Sized> Es<'_, O> {
    /// Returns false once the budget is exhausted.
    fn visit(&mut self, i: usize) -> Result<bool> {
        if i == self.ground.n() {
            let s = KSet::from_labels(self.ground.k(), self.labels.clone())?;
            if !self.feas.extra.iter().all(|c| c.is_satisfied_by(&s, 1e-9)) {
                return Ok(true);
            }
            if self.evaluations >= self.budget {
                return Ok(false);
            }
            self.evaluations += 1;
            let v = self.o.value(&s);
            if v > self.value {
                self.value = v;
                self.best = Some(s);
            }
            return Ok(true);
        }
        if !self.visit(i + 1)? {
            return Ok(false);
        }
        if self.feas.total.is_some_and(|t| self.total >= t) {
            return Ok(true);
        }
        for q in 0..self.ground.k() {
            if let Some(b) = &self.feas.per_type {
                if self.counts[q] >= b[q] {
                    continue;
                }
            }
            self.labels[i] = q as u8 + 1;
            self.counts[q] += 1;
            self.total += 1;
            let go_on = self.visit(i + 1)?;
            self.labels[i] = 0;
            self.counts[q] -= 1;
            self.total -= 1;
            if !go_on {
                return Ok(false);
            }
        }
        Ok(true)
    }
}

/// Number of k-sets with `|S_q| = B_q` exactly:
/// `n! / (B_1! ⋯ B_k! (n − ΣB)!)`.
pub fn count_exact_feasible(n: usize, k: usize, bounds: &[usize]) -> Result<BigUint> {
    if bounds.len() != k {
        return Err(Error::DimensionMismatch {
            expected: format!("{k} bounds"),
            found: format!("{} bounds", bounds.len()),
        });
    }
    let total: usize = bounds.iter().sum();
    if total > n {
        return Err(Error::InvalidRegion(format!(
            "bounds sum to {total}, more than n = {n}"
        )));
    }
    let mut count = BigUint::from(1u32);
    let mut remaining = n;
    for &b in bounds {
        count *= binomial(remaining, b);
        remaining -= b;
    }
    Ok(count)
}

fn binomial(n: usize, r: usize) -> BigUint {
    let r = r.min(n - r);
    let mut c = BigUint::from(1u32);
    for j in 0..r {
        c *= BigUint::from(n - j);
        c /= BigUint::from(j + 1);
    }
    c
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::{ModularOracle, TableOracle};

    fn g(n: usize, k: usize) -> GroundSet {
        GroundSet::new(n, k).unwrap()
    }

    fn square_first(n: usize) -> TableOracle {
        TableOracle::from_fn(g(n, 2), |s| (s.sizes()[0] as f64).powi(2)).unwrap()
    }

    fn difference(n: usize) -> ModularOracle {
        ModularOracle::new(&[vec![1.0; n], vec![-1.0; n]]).unwrap()
    }

    #[test]
    fn modular_passes_def1() {
        let f = ModularOracle::new(&[vec![1.0; 3], vec![2.0; 3]]).unwrap();
        let r = check_k_submodular_def1(&f).unwrap();
        assert!(r.passed && r.witness.is_none() && !r.sampled);
        assert_eq!(r.checked_pairs, 27 * 28 / 2);
    }

    #[test]
    fn square_fails_def1_with_genuine_witness() {
        let f = square_first(2);
        let r = check_k_submodular_def1(&f).unwrap();
        assert!(!r.passed);
        let w = r.witness.unwrap();
        assert!(w.is_violation(&f, 1e-9).unwrap());
        assert!(matches!(w, Witness::Pair { .. }));
    }

    #[test]
    fn square_fails_at_c1() {
        let f = square_first(2);
        let r = check_c1_c2(&f).unwrap();
        assert!(!r.passed);
        assert!(matches!(r.witness, Some(Witness::Partition { .. })));
        assert!(r.witness.unwrap().is_violation(&f, 1e-9).unwrap());
    }

    #[test]
    fn difference_is_k_submodular_not_monotone() {
        let f = difference(3);
        assert!(check_c1_c2(&f).unwrap().passed);
        assert!(check_k_submodular_def1(&f).unwrap().passed);
        let r = check_monotone(&f).unwrap();
        assert!(!r.passed);
        match r.witness.unwrap() {
            Witness::Decrease { q, .. } => assert_eq!(q, 1),
            w => panic!("unexpected witness {w:?}"),
        }
    }

    #[test]
    fn zero_oracle_passes_everything() {
        let f = ModularOracle::zeros(g(3, 3));
        assert!(check_k_submodular_def1(&f).unwrap().passed);
        assert!(check_c1_c2(&f).unwrap().passed);
        assert!(check_monotone(&f).unwrap().passed);
    }

    #[test]
    fn sampling_above_cap() {
        let f = difference(9);
        let r = check_monotone(&f).unwrap();
        assert!(r.sampled && !r.passed);
        let strict = VerifyConfig {
            sample_above_cap: false,
            ..VerifyConfig::default()
        };
        assert!(matches!(
            check_monotone_with(&f, &strict),
            Err(Error::EnumerationCap { .. })
        ));
        let f = square_first(9);
        assert!(!check_k_submodular_def1(&f).unwrap().passed);
        assert!(!check_c1_c2(&f).unwrap().passed);
    }

    #[test]
    fn es_tie_break_is_lexicographic() {
        let f = ModularOracle::new(&[vec![1.0; 2], vec![2.0; 2]]).unwrap();
        let r = exhaustive_max(&f, &FeasibleRegion::per_type(vec![1, 1]), None).unwrap();
        assert_eq!(r.value, 3.0);
        assert_eq!(r.best.unwrap().to_string(), "({1},{2})");
        assert_eq!(r.evaluations, 7);
        assert!(r.complete);
    }

    #[test]
    fn es_zero_oracle_and_budget() {
        let f = ModularOracle::zeros(g(3, 2));
        let r = exhaustive_max(&f, &FeasibleRegion::unconstrained(), None).unwrap();
        assert_eq!((r.value, r.evaluations), (0.0, 27));
        assert!(r.best.unwrap().is_empty());
        let r = exhaustive_max(&f, &FeasibleRegion::unconstrained(), Some(5)).unwrap();
        assert!(!r.complete);
        assert_eq!(r.evaluations, 5);
    }

    #[test]
    fn counts() {
        assert_eq!(count_exact_feasible(2, 2, &[1, 1]).unwrap(), BigUint::from(2u32));
        assert_eq!(count_exact_feasible(3, 3, &[1, 1, 1]).unwrap(), BigUint::from(6u32));
        assert_eq!(
            count_exact_feasible(50, 2, &[5, 5]).unwrap(),
            BigUint::from(2_118_760u64) * BigUint::from(1_221_759u64)
        );
        assert!(count_exact_feasible(3, 2, &[2, 2]).is_err());
        assert!(count_exact_feasible(3, 2, &[1]).is_err());
    }

    #[test]
    fn report_json_shape() {
        let r = check_monotone(&difference(2)).unwrap();
        let v = serde_json::to_value(&r).unwrap();
        assert_eq!(v["passed"], false);
        assert_eq!(v["witness"]["kind"], "decrease");
        assert!(v["checked_pairs"].is_u64());
        assert_eq!(v["sampled"], false);
    }
}
