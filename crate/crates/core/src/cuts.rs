//! k-submodular inequalities over the hypograph of f.
//!
//! A cut generated at a k-set `S` has the form
//!
//! ```text
//! η ≤ f(S) + Σ_q Σ_{i ∉ ∪S} ρ_{q,i}(S) x_i^q
//!          + Σ_q Σ_{p ≠ q} Σ_{i ∈ S_p} ρ_{q,i}(∅) x_i^q
//!          − Σ_q Σ_{i ∈ S_q} ξ_i^q (1 − x_i^q)
//! ```
//!
//! For monotone f the last term is dropped. Either way the cut is tight at
//! `S` and valid at every binary point.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kset::{CharVector, GroundSet, KSet};
use crate::oracle::{ValueOracle, XiTable};

/// `η ≤ c0 + Σ coeff[q][i] x_i^q`, generated at `source`.
#[derive(Clone, Debug, PartialEq)]
pub struct Cut {
    c0: f64,
    coeffs: Vec<f64>,
    source: KSet,
}

impl Cut {
    pub fn new(c0: f64, coeffs: Vec<f64>, source: KSet) -> Result<Self> {
        let ground = source.ground();
        if coeffs.len() != ground.dim() {
            return Err(Error::DimensionMismatch {
                expected: format!("{} coefficients", ground.dim()),
                found: format!("{} coefficients", coeffs.len()),
            });
        }
        if !c0.is_finite() || coeffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::NonFinite("cut coefficient".into()));
        }
        Ok(Cut { c0, coeffs, source })
    }

    pub fn constant(&self) -> f64 {
        self.c0
    }

    /// Coefficients laid out like a characteristic vector.
    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn coeff(&self, q: usize, i: usize) -> f64 {
        self.coeffs[self.ground().var_index(q, i)]
    }

    pub fn source(&self) -> &KSet {
        &self.source
    }

    pub fn ground(&self) -> GroundSet {
        self.source.ground()
    }

    /// Right-hand side at an arbitrary (possibly fractional) point.
    pub fn rhs_relaxed(&self, x: &[f64]) -> f64 {
        self.c0 + self.coeffs.iter().zip(x).map(|(c, v)| c * v).sum::<f64>()
    }

    /// Right-hand side at the characteristic vector of `s`.
    pub fn rhs_at(&self, s: &KSet) -> f64 {
        let n = s.n();
        self.c0
            + s.assignments()
                .map(|(q, i)| self.coeffs[q * n + i])
                .sum::<f64>()
    }

    pub fn to_json(&self) -> CutJson {
        let ground = self.ground();
        CutJson {
            c0: self.c0,
            coeffs: self
                .coeffs
                .chunks(ground.n())
                .map(<[f64]>::to_vec)
                .collect(),
            source: self.source.labels().to_vec(),
        }
    }

    pub fn from_json(json: &CutJson) -> Result<Self> {
        let k = json.coeffs.len();
        let source = KSet::from_labels(k, json.source.clone())?;
        if json.coeffs.iter().any(|row| row.len() != source.n()) {
            return Err(Error::DimensionMismatch {
                expected: format!("{k} rows of {}", source.n()),
                found: "ragged coefficient rows".into(),
            });
        }
        Cut::new(json.c0, json.coeffs.concat(), source)
    }
}

/// Serialized cut: `{c0, coeffs: [[...]], source: labels}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CutJson {
    pub c0: f64,
    pub coeffs: Vec<Vec<f64>>,
    pub source: Vec<u8>,
}

/// `c0 + Σ c_{q,i} x_i^q`.
pub fn cut_rhs(c: &Cut, x: &CharVector) -> Result<f64> {
    c.ground().check_same(&x.ground())?;
    Ok(c.c0
        + c.coeffs
            .iter()
            .zip(x.as_slice())
            .filter(|(_, &b)| b != 0)
            .map(|(c, _)| c)
            .sum::<f64>())
}

/// ξ values for the removal term of general cuts.
#[derive(Clone, Debug, PartialEq)]
pub enum XiValues {
    PerElement(XiTable),
    Uniform(f64),
}

impl XiValues {
    fn get(&self, q: usize, i: usize) -> f64 {
        match self {
            XiValues::PerElement(t) => t.get(q, i),
            XiValues::Uniform(z) => *z,
        }
    }
}

/// Builds cuts for one oracle, caching the marginals at the empty k-set.
pub struct CutBuilder<'a, O: ValueOracle + ?Sized> {
    oracle: &'a O,
    empty_marginals: Vec<f64>,
}

impl<'a, O: ValueOracle + ?Sized> CutBuilder<'a, O> {
    pub fn new(oracle: &'a O) -> Self {
        let ground = oracle.ground();
        let empty = KSet::empty(ground);
        let base = oracle.value(&empty);
        let mut empty_marginals = vec![0.0; ground.dim()];
        for q in 0..ground.k() {
            for i in 0..ground.n() {
                empty_marginals[ground.var_index(q, i)] = oracle.value(&empty.with(i, q)) - base;
            }
        }
        CutBuilder {
            oracle,
            empty_marginals,
        }
    }

    pub fn oracle(&self) -> &O {
        self.oracle
    }

    /// Inequality (4); requires a monotone oracle.
    pub fn monotone(&self, s: &KSet) -> Result<Cut> {
        if !self.oracle.is_monotone() {
            return Err(Error::NonMonotoneOracle);
        }
        self.build(s, None)
    }

    /// Inequality (5) with the given ξ values or lower bounds on them.
    pub fn general(&self, s: &KSet, xi: &XiValues) -> Result<Cut> {
        if let XiValues::PerElement(t) = xi {
            self.oracle.ground().check_same(&t.ground())?;
        }
        self.build(s, Some(xi))
    }

    fn build(&self, s: &KSet, xi: Option<&XiValues>) -> Result<Cut> {
        let ground = self.oracle.ground();
        ground.check_same(&s.ground())?;
        let fs = self.oracle.value(s);
        let mut c0 = fs;
        let mut coeffs = vec![0.0; ground.dim()];
        for i in 0..ground.n() {
            match s.subset_of(i) {
                None => {
                    for q in 0..ground.k() {
                        coeffs[ground.var_index(q, i)] = self.oracle.value(&s.with(i, q)) - fs;
                    }
                }
                Some(p) => {
                    for q in (0..ground.k()).filter(|&q| q != p) {
                        let v = ground.var_index(q, i);
                        coeffs[v] = self.empty_marginals[v];
                    }
                    if let Some(xi) = xi {
                        let x = xi.get(p, i);
                        coeffs[ground.var_index(p, i)] = x;
                        c0 -= x;
                    }
                }
            }
        }
        Cut::new(c0, coeffs, s.clone())
    }
}

/// Inequality (4) at `s` for a monotone oracle.
pub fn build_cut_monotone<O: ValueOracle + ?Sized>(o: &O, s: &KSet) -> Result<Cut> {
    CutBuilder::new(o).monotone(s)
}

/// Inequality (5) at `s`; each ξ must not exceed the true ξ_i^q.
pub fn build_cut_general<O: ValueOracle + ?Sized>(o: &O, s: &KSet, xi: &XiValues) -> Result<Cut> {
    CutBuilder::new(o).general(s, xi)
}

/// `f*(X) = f(X) − Σ_q Σ_{i ∈ X_q} ξ_i^q`. With exact ξ the result is
/// monotone and k-submodular.
pub struct MonotoneTransform<O> {
    inner: O,
    xi: XiTable,
    lower: f64,
    upper: f64,
}

impl<O: ValueOracle> MonotoneTransform<O> {
    pub fn new(inner: O, xi: XiTable) -> Result<Self> {
        let ground = inner.ground();
        ground.check_same(&xi.ground())?;
        let (mut min_charge, mut max_charge) = (0.0, 0.0);
        for i in 0..ground.n() {
            let col = (0..ground.k()).map(|q| xi.get(q, i));
            min_charge += col.clone().fold(0.0, f64::min);
            max_charge += col.fold(0.0, f64::max);
        }
        let lower = inner.lower_bound() - max_charge;
        let upper = inner.upper_bound() - min_charge;
        Ok(MonotoneTransform {
            inner,
            xi,
            lower,
            upper,
        })
    }

    pub fn xi(&self) -> &XiTable {
        &self.xi
    }
}

/// Wraps `o` as `f*` using exact ξ values.
pub fn monotone_transform<O: ValueOracle>(o: O, xi: XiTable) -> Result<MonotoneTransform<O>> {
    MonotoneTransform::new(o, xi)
}

impl<O: ValueOracle> ValueOracle for MonotoneTransform<O> {
    fn ground(&self) -> GroundSet {
        self.inner.ground()
    }

    fn value(&self, s: &KSet) -> f64 {
        self.inner.value(s) - s.assignments().map(|(q, i)| self.xi.get(q, i)).sum::<f64>()
    }

    fn is_monotone(&self) -> bool {
        true
    }

    fn lower_bound(&self) -> f64 {
        self.lower
    }

    fn upper_bound(&self) -> f64 {
        self.upper
    }

    fn is_cheap(&self) -> bool {
        self.inner.is_cheap()
    }

    fn kind(&self) -> &'static str {
        "monotone-transform"
    }
}
