//! Value oracles for k-set functions.
//!
//! Every oracle is normalized so that the empty k-set evaluates to 0, and
//! carries a declared lower and upper bound on its values. The bounds feed
//! the ζ = f̲ − f̄ lower bound used by general cuts.

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kset::{GroundSet, KSet};

/// Absolute tolerance used when certifying signs of marginals.
pub const VALUE_TOL: f64 = 1e-9;

/// Default cap on the number of partitions enumerated by [`xi_exact`]
/// (`2^15`, i.e. `n = 16` with `k = 2`).
pub const XI_PARTITION_CAP: u128 = 1 << 15;

/// An evaluatable function on the k-sets of a ground set.
///
/// Implementations must be pure: concurrent calls to [`ValueOracle::value`]
/// on the same oracle are allowed.
pub trait ValueOracle: Send + Sync {
    fn ground(&self) -> GroundSet;

    /// `f(s)`. Callers guarantee that `s` lives on [`ValueOracle::ground`];
    /// use [`ValueOracle::eval`] for a checked call.
    fn value(&self, s: &KSet) -> f64;

    /// Declared monotonicity. Cuts rely on it, so it must be truthful.
    fn is_monotone(&self) -> bool;

    /// A lower bound f̲ on every value.
    fn lower_bound(&self) -> f64;

    /// An upper bound f̄ on every value.
    fn upper_bound(&self) -> f64;

    /// Whether exact ξ enumeration is affordable for this oracle family.
    fn is_cheap(&self) -> bool {
        false
    }

    fn kind(&self) -> &'static str;

    fn eval(&self, s: &KSet) -> Result<f64> {
        self.ground().check_same(&s.ground())?;
        Ok(self.value(s))
    }

    /// ρ_{q,i}(s) = f(s with i added to S_q) − f(s).
    fn marginal(&self, s: &KSet, q: usize, i: usize) -> Result<f64> {
        let ground = self.ground();
        ground.check_same(&s.ground())?;
        if q >= ground.k() {
            return Err(Error::InvalidSubset { q, k: ground.k() });
        }
        if i >= ground.n() {
            return Err(Error::InvalidElement {
                element: i,
                n: ground.n(),
            });
        }
        if s.is_assigned(i) {
            return Err(Error::ElementAssigned { element: i });
        }
        Ok(self.value(&s.with(i, q)) - self.value(s))
    }
}

impl<T: ValueOracle + ?Sized> ValueOracle for &T {
    fn ground(&self) -> GroundSet {
        (**self).ground()
    }
    fn value(&self, s: &KSet) -> f64 {
        (**self).value(s)
    }
    fn is_monotone(&self) -> bool {
        (**self).is_monotone()
    }
    fn lower_bound(&self) -> f64 {
        (**self).lower_bound()
    }
    fn upper_bound(&self) -> f64 {
        (**self).upper_bound()
    }
    fn is_cheap(&self) -> bool {
        (**self).is_cheap()
    }
    fn kind(&self) -> &'static str {
        (**self).kind()
    }
}

impl<T: ValueOracle + ?Sized> ValueOracle for Box<T> {
    fn ground(&self) -> GroundSet {
        (**self).ground()
    }
    fn value(&self, s: &KSet) -> f64 {
        (**self).value(s)
    }
    fn is_monotone(&self) -> bool {
        (**self).is_monotone()
    }
    fn lower_bound(&self) -> f64 {
        (**self).lower_bound()
    }
    fn upper_bound(&self) -> f64 {
        (**self).upper_bound()
    }
    fn is_cheap(&self) -> bool {
        (**self).is_cheap()
    }
    fn kind(&self) -> &'static str {
        (**self).kind()
    }
}

/// Wraps an oracle and counts calls to [`ValueOracle::value`].
pub struct CountingOracle<O> {
    inner: O,
    calls: AtomicU64,
}

impl<O: ValueOracle> CountingOracle<O> {
    pub fn new(inner: O) -> Self {
        CountingOracle {
            inner,
            calls: AtomicU64::new(0),
        }
    }

    pub fn evaluations(&self) -> u64 {
        self.calls.load(Ordering::Relaxed)
    }

    pub fn inner(&self) -> &O {
        &self.inner
    }
}

impl<O: ValueOracle> ValueOracle for CountingOracle<O> {
    fn ground(&self) -> GroundSet {
        self.inner.ground()
    }
    fn value(&self, s: &KSet) -> f64 {
        self.calls.fetch_add(1, Ordering::Relaxed);
        self.inner.value(s)
    }
    fn is_monotone(&self) -> bool {
        self.inner.is_monotone()
    }
    fn lower_bound(&self) -> f64 {
        self.inner.lower_bound()
    }
    fn upper_bound(&self) -> f64 {
        self.inner.upper_bound()
    }
    fn is_cheap(&self) -> bool {
        self.inner.is_cheap()
    }
    fn kind(&self) -> &'static str {
        self.inner.kind()
    }
}

/// Per-(q, i) reals laid out like a characteristic vector.
#[derive(Clone, Debug, PartialEq)]
pub struct XiTable {
    ground: GroundSet,
    values: Vec<f64>,
}

impl XiTable {
    pub fn new(ground: GroundSet, values: Vec<f64>) -> Result<Self> {
        if values.len() != ground.dim() {
            return Err(Error::DimensionMismatch {
                expected: format!("{} entries", ground.dim()),
                found: format!("{} entries", values.len()),
            });
        }
        Ok(XiTable { ground, values })
    }

    pub fn uniform(ground: GroundSet, value: f64) -> Self {
        XiTable {
            ground,
            values: vec![value; ground.dim()],
        }
    }

    /// From a `[q][i]` nested array.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let k = rows.len();
        let n = rows.first().map_or(0, Vec::len);
        let ground = GroundSet::new(n, k)?;
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::DimensionMismatch {
                expected: format!("{k} rows of {n}"),
                found: "ragged rows".into(),
            });
        }
        Ok(XiTable {
            ground,
            values: rows.concat(),
        })
    }

    pub fn ground(&self) -> GroundSet {
        self.ground
    }

    #[inline]
    pub fn get(&self, q: usize, i: usize) -> f64 {
        self.values[self.ground.var_index(q, i)]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }
}

/// ξ_i^q: the smallest marginal of adding `i` to subset `q`, over every
/// partition of the ground set without `i`.
pub fn xi_exact<O: ValueOracle + ?Sized>(o: &O, q: usize, i: usize) -> Result<f64> {
    xi_exact_with_cap(o, q, i, XI_PARTITION_CAP)
}

pub fn xi_exact_with_cap<O: ValueOracle + ?Sized>(
    o: &O,
    q: usize,
    i: usize,
    cap: u128,
) -> Result<f64> {
    let ground = o.ground();
    if q >= ground.k() {
        return Err(Error::InvalidSubset { q, k: ground.k() });
    }
    if i >= ground.n() {
        return Err(Error::InvalidElement {
            element: i,
            n: ground.n(),
        });
    }
    check_xi_cap(ground, cap)?;
    let mut best = f64::INFINITY;
    for s in ground.partitions_without(i) {
        let rho = o.value(&s.with(i, q)) - o.value(&s);
        best = best.min(rho);
    }
    Ok(best)
}

/// Exact ξ for every (q, i).
pub fn xi_exact_all<O: ValueOracle + ?Sized>(o: &O, cap: u128) -> Result<XiTable> {
    let ground = o.ground();
    check_xi_cap(ground, cap)?;
    let mut values = vec![f64::INFINITY; ground.dim()];
    for i in 0..ground.n() {
        for s in ground.partitions_without(i) {
            let base = o.value(&s);
            for q in 0..ground.k() {
                let rho = o.value(&s.with(i, q)) - base;
                let slot = &mut values[ground.var_index(q, i)];
                *slot = slot.min(rho);
            }
        }
    }
    XiTable::new(ground, values)
}

fn check_xi_cap(ground: GroundSet, cap: u128) -> Result<()> {
    let required = (ground.k() as u128)
        .checked_pow(ground.n() as u32 - 1)
        .unwrap_or(u128::MAX);
    if required > cap {
        return Err(Error::EnumerationCap {
            required,
            cap,
            hint: "use xi_bound for a cheap lower bound",
        });
    }
    Ok(())
}

/// ζ = f̲ − f̄, a lower bound on every ξ_i^q.
pub fn xi_bound<O: ValueOracle + ?Sized>(o: &O) -> Result<f64> {
    let (lower, upper) = (o.lower_bound(), o.upper_bound());
    if !lower.is_finite() || !upper.is_finite() {
        return Err(Error::UnboundedOracle { lower, upper });
    }
    Ok(lower - upper)
}

/// `f(s) = Σ_q Σ_{i ∈ S_q} w[q][i]`.
#[derive(Clone, Debug)]
pub struct ModularOracle {
    ground: GroundSet,
    weights: Vec<f64>,
    lower: f64,
    upper: f64,
}

impl ModularOracle {
    /// `weights` is indexed `[q][i]`.
    pub fn new(weights: &[Vec<f64>]) -> Result<Self> {
        let table = XiTable::from_rows(weights)?;
        if let Some(w) = table.values.iter().find(|w| !w.is_finite()) {
            return Err(Error::NonFinite(format!("modular weight {w}")));
        }
        let ground = table.ground;
        let (mut lower, mut upper) = (0.0, 0.0);
        for i in 0..ground.n() {
            let column = (0..ground.k()).map(|q| table.get(q, i));
            let lo = column.clone().fold(f64::INFINITY, f64::min);
            let hi = column.fold(f64::NEG_INFINITY, f64::max);
            lower += lo.min(0.0);
            upper += hi.max(0.0);
        }
        Ok(ModularOracle {
            ground,
            weights: table.values,
            lower,
            upper,
        })
    }

    pub fn zeros(ground: GroundSet) -> Self {
        ModularOracle {
            ground,
            weights: vec![0.0; ground.dim()],
            lower: 0.0,
            upper: 0.0,
        }
    }

    pub fn weight(&self, q: usize, i: usize) -> f64 {
        self.weights[self.ground.var_index(q, i)]
    }
}

impl ValueOracle for ModularOracle {
    fn ground(&self) -> GroundSet {
        self.ground
    }

    fn value(&self, s: &KSet) -> f64 {
        s.assignments().map(|(q, i)| self.weight(q, i)).sum()
    }

    fn is_monotone(&self) -> bool {
        self.weights.iter().all(|&w| w >= 0.0)
    }

    fn lower_bound(&self) -> f64 {
        self.lower
    }

    fn upper_bound(&self) -> f64 {
        self.upper
    }

    fn is_cheap(&self) -> bool {
        true
    }

    fn kind(&self) -> &'static str {
        "modular"
    }
}

/// Weighted coverage: `f(s)` is the total weight of universe items covered
/// by `covers[q][i]` over all `i ∈ S_q`.
#[derive(Clone, Debug)]
pub struct CoverageOracle {
    ground: GroundSet,
    item_weights: Vec<f64>,
    covers: Vec<Vec<usize>>,
    total: f64,
}

impl CoverageOracle {
    /// `covers` is indexed `[q][i]` and lists covered universe items.
    pub fn new(
        universe_size: usize,
        covers: Vec<Vec<Vec<usize>>>,
        item_weights: Vec<f64>,
    ) -> Result<Self> {
        let k = covers.len();
        let n = covers.first().map_or(0, Vec::len);
        let ground = GroundSet::new(n, k)?;
        if covers.iter().any(|row| row.len() != n) {
            return Err(Error::DimensionMismatch {
                expected: format!("{k} rows of {n} cover lists"),
                found: "ragged cover rows".into(),
            });
        }
        if item_weights.len() != universe_size {
            return Err(Error::DimensionMismatch {
                expected: format!("{universe_size} item weights"),
                found: format!("{} item weights", item_weights.len()),
            });
        }
        if let Some(w) = item_weights.iter().find(|w| !(w.is_finite() && **w >= 0.0)) {
            return Err(Error::NonFinite(format!("coverage weight {w} must be finite and non-negative")));
        }
        let covers: Vec<Vec<usize>> = covers.into_iter().flatten().collect();
        if let Some(&item) = covers.iter().flatten().find(|&&u| u >= universe_size) {
            return Err(Error::InvalidElement {
                element: item,
                n: universe_size,
            });
        }
        let total = item_weights.iter().sum();
        Ok(CoverageOracle {
            ground,
            item_weights,
            covers,
            total,
        })
    }

    /// Unit item weights.
    pub fn unit(universe_size: usize, covers: Vec<Vec<Vec<usize>>>) -> Result<Self> {
        CoverageOracle::new(universe_size, covers, vec![1.0; universe_size])
    }
}

impl ValueOracle for CoverageOracle {
    fn ground(&self) -> GroundSet {
        self.ground
    }

    fn value(&self, s: &KSet) -> f64 {
        let mut covered = vec![false; self.item_weights.len()];
        for (q, i) in s.assignments() {
            for &u in &self.covers[self.ground.var_index(q, i)] {
                covered[u] = true;
            }
        }
        covered
            .iter()
            .zip(&self.item_weights)
            .filter(|(&c, _)| c)
            .map(|(_, w)| w)
            .sum()
    }

    fn is_monotone(&self) -> bool {
        true
    }

    fn lower_bound(&self) -> f64 {
        0.0
    }

    fn upper_bound(&self) -> f64 {
        self.total
    }

    fn is_cheap(&self) -> bool {
        true
    }

    fn kind(&self) -> &'static str {
        "coverage"
    }
}

/// Explicit value table over all `(k + 1)^n` k-sets.
#[derive(Clone, Debug)]
pub struct TableOracle {
    ground: GroundSet,
    values: Vec<f64>,
    monotone: bool,
    lower: f64,
    upper: f64,
}

/// Largest table [`TableOracle`] will allocate.
pub const TABLE_CAP: u128 = 1 << 22;

impl TableOracle {
    pub fn new(ground: GroundSet, table: &HashMap<KSet, f64>) -> Result<Self> {
        check_table_size(ground)?;
        let values = ground
            .ksets()
            .map(|s| {
                table
                    .get(&s)
                    .copied()
                    .ok_or_else(|| Error::MissingTableEntry(s.to_string()))
            })
            .collect::<Result<Vec<_>>>()?;
        TableOracle::from_values(ground, values)
    }

    /// Values in [`KSet::rank`] order.
    pub fn from_values(ground: GroundSet, values: Vec<f64>) -> Result<Self> {
        check_table_size(ground)?;
        if values.len() as u128 != ground.num_ksets() {
            return Err(Error::DimensionMismatch {
                expected: format!("{} table entries", ground.num_ksets()),
                found: format!("{} table entries", values.len()),
            });
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("table value {v}")));
        }
        if values[0] != 0.0 {
            return Err(Error::NotNormalized(values[0]));
        }
        let lower = values.iter().copied().fold(f64::INFINITY, f64::min);
        let upper = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let monotone = table_is_monotone(ground, &values);
        Ok(TableOracle {
            ground,
            values,
            monotone,
            lower,
            upper,
        })
    }

    pub fn from_fn(ground: GroundSet, f: impl Fn(&KSet) -> f64) -> Result<Self> {
        check_table_size(ground)?;
        TableOracle::from_values(ground, ground.ksets().map(|s| f(&s)).collect())
    }

    /// Tabulates another oracle.
    pub fn from_oracle<O: ValueOracle + ?Sized>(o: &O) -> Result<Self> {
        TableOracle::from_fn(o.ground(), |s| o.value(s))
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

fn check_table_size(ground: GroundSet) -> Result<()> {
    if ground.num_ksets() > TABLE_CAP {
        return Err(Error::EnumerationCap {
            required: ground.num_ksets(),
            cap: TABLE_CAP,
            hint: "table oracles must be small",
        });
    }
    Ok(())
}

fn table_is_monotone(ground: GroundSet, values: &[f64]) -> bool {
    let radix = ground.k() + 1;
    let n = ground.n();
    // Adding label q+1 at element i raises the rank by (q+1) * radix^(n-1-i).
    ground.ksets().all(|s| {
        let r = s.rank();
        (0..n).filter(|&i| !s.is_assigned(i)).all(|i| {
            let place = radix.pow((n - 1 - i) as u32);
            (1..radix).all(|l| values[r + l * place] - values[r] >= -VALUE_TOL)
        })
    })
}

impl ValueOracle for TableOracle {
    fn ground(&self) -> GroundSet {
        self.ground
    }

    fn value(&self, s: &KSet) -> f64 {
        self.values[s.rank()]
    }

    fn is_monotone(&self) -> bool {
        self.monotone
    }

    fn lower_bound(&self) -> f64 {
        self.lower
    }

    fn upper_bound(&self) -> f64 {
        self.upper
    }

    fn is_cheap(&self) -> bool {
        true
    }

    fn kind(&self) -> &'static str {
        "table"
    }
}

/// Discretized sensor readings, `values[feature][location][sample]`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObservationMatrix {
    n_locations: usize,
    k_features: usize,
    t_samples: usize,
    bins: Vec<u32>,
    values: Vec<u32>,
}

impl ObservationMatrix {
    /// `values` is row-major over `[feature][location][sample]`.
    pub fn new(
        n_locations: usize,
        k_features: usize,
        t_samples: usize,
        bins: Vec<u32>,
        values: Vec<u32>,
    ) -> Result<Self> {
        if n_locations == 0 || k_features == 0 {
            return Err(Error::InvalidGroundSet {
                n: n_locations,
                k: k_features,
            });
        }
        if t_samples == 0 {
            return Err(Error::InsufficientData("at least one sample is required".into()));
        }
        if bins.len() != k_features {
            return Err(Error::DimensionMismatch {
                expected: format!("{k_features} bin counts"),
                found: format!("{} bin counts", bins.len()),
            });
        }
        if bins.contains(&0) {
            return Err(Error::InvalidRegion("every feature needs at least one bin".into()));
        }
        let expected = k_features * n_locations * t_samples;
        if values.len() != expected {
            return Err(Error::DimensionMismatch {
                expected: format!("{expected} readings"),
                found: format!("{} readings", values.len()),
            });
        }
        for (idx, &v) in values.iter().enumerate() {
            let feature = idx / (n_locations * t_samples);
            if v >= bins[feature] {
                return Err(Error::InvalidLabel {
                    label: v as usize,
                    k: bins[feature] as usize - 1,
                });
            }
        }
        Ok(ObservationMatrix {
            n_locations,
            k_features,
            t_samples,
            bins,
            values,
        })
    }

    /// Builds a matrix from `[feature][location][sample]` nested vectors,
    /// taking each feature's bin count as one more than its largest reading.
    pub fn from_nested(readings: &[Vec<Vec<u32>>]) -> Result<Self> {
        let k = readings.len();
        let n = readings.first().map_or(0, Vec::len);
        let t = readings.first().and_then(|f| f.first()).map_or(0, Vec::len);
        let bins = readings
            .iter()
            .map(|f| f.iter().flatten().copied().max().unwrap_or(0) + 1)
            .collect();
        let mut values = Vec::with_capacity(k * n * t);
        for feature in readings {
            if feature.len() != n || feature.iter().any(|loc| loc.len() != t) {
                return Err(Error::DimensionMismatch {
                    expected: format!("{n} locations x {t} samples per feature"),
                    found: "ragged readings".into(),
                });
            }
            values.extend(feature.iter().flatten());
        }
        ObservationMatrix::new(n, k, t, bins, values)
    }

    pub fn n_locations(&self) -> usize {
        self.n_locations
    }

    pub fn k_features(&self) -> usize {
        self.k_features
    }

    pub fn t_samples(&self) -> usize {
        self.t_samples
    }

    pub fn bins(&self) -> &[u32] {
        &self.bins
    }

    /// Row-major `[feature][location][sample]` readings.
    pub fn values(&self) -> &[u32] {
        &self.values
    }

    #[inline]
    pub fn get(&self, feature: usize, location: usize, sample: usize) -> u32 {
        self.values[(feature * self.n_locations + location) * self.t_samples + sample]
    }

    /// Readings of one feature at one location, across samples.
    #[inline]
    pub fn series(&self, feature: usize, location: usize) -> &[u32] {
        let start = (feature * self.n_locations + location) * self.t_samples;
        &self.values[start..start + self.t_samples]
    }

    /// Keeps the given locations and samples, in the given order.
    pub fn select(&self, locations: &[usize], samples: &[usize]) -> Result<Self> {
        if let Some(&l) = locations.iter().find(|&&l| l >= self.n_locations) {
            return Err(Error::InvalidElement {
                element: l,
                n: self.n_locations,
            });
        }
        if let Some(&s) = samples.iter().find(|&&s| s >= self.t_samples) {
            return Err(Error::InvalidElement {
                element: s,
                n: self.t_samples,
            });
        }
        let mut values = Vec::with_capacity(self.k_features * locations.len() * samples.len());
        for f in 0..self.k_features {
            for &l in locations {
                values.extend(samples.iter().map(|&s| self.get(f, l, s)));
            }
        }
        ObservationMatrix::new(
            locations.len(),
            self.k_features,
            samples.len(),
            self.bins.clone(),
            values,
        )
    }

    /// Writes the `location,sample,f1,...,fk` CSV form (1-based locations
    /// and samples).
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["location".to_string(), "sample".to_string()];
        header.extend((1..=self.k_features).map(|f| format!("f{f}")));
        w.write_record(&header).map_err(csv_error)?;
        for l in 0..self.n_locations {
            for s in 0..self.t_samples {
                let mut row = vec![(l + 1).to_string(), (s + 1).to_string()];
                row.extend((0..self.k_features).map(|f| self.get(f, l, s).to_string()));
                w.write_record(&row).map_err(csv_error)?;
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Reads the CSV written by [`ObservationMatrix::write_csv`]. Bin counts
    /// are taken from `bins` when given, else from the largest reading.
    pub fn read_csv<R: std::io::Read>(input: R, bins: Option<Vec<u32>>) -> Result<Self> {
        let mut reader = csv::Reader::from_reader(input);
        let header = reader.headers().map_err(csv_error)?.clone();
        if header.len() < 3 || &header[0] != "location" || &header[1] != "sample" {
            return Err(Error::parse(
                Some(1),
                None,
                "header must be `location,sample,f1,...,fk`",
            ));
        }
        let k = header.len() - 2;
        let mut rows: Vec<(usize, usize, Vec<u32>)> = Vec::new();
        for (idx, record) in reader.records().enumerate() {
            let line = idx + 2;
            let record = record.map_err(csv_error)?;
            let field = |j: usize| -> Result<usize> {
                record[j]
                    .trim()
                    .parse::<usize>()
                    .map_err(|e| Error::parse(Some(line), Some(&header[j]), e.to_string()))
            };
            let (loc, sample) = (field(0)?, field(1)?);
            if loc == 0 || sample == 0 {
                return Err(Error::parse(Some(line), None, "locations and samples are 1-based"));
            }
            let readings = (2..2 + k)
                .map(|j| field(j).map(|v| v as u32))
                .collect::<Result<Vec<_>>>()?;
            rows.push((loc - 1, sample - 1, readings));
        }
        let n = rows.iter().map(|r| r.0 + 1).max().unwrap_or(0);
        let t = rows.iter().map(|r| r.1 + 1).max().unwrap_or(0);
        if rows.len() != n * t {
            return Err(Error::parse(
                None,
                None,
                format!("expected {} rows for {n} locations x {t} samples, found {}", n * t, rows.len()),
            ));
        }
        let mut values = vec![u32::MAX; k * n * t];
        for (loc, sample, readings) in rows {
            for (f, v) in readings.into_iter().enumerate() {
                values[(f * n + loc) * t + sample] = v;
            }
        }
        if values.contains(&u32::MAX) {
            return Err(Error::parse(None, None, "duplicate (location, sample) rows"));
        }
        let bins = bins.unwrap_or_else(|| {
            (0..k)
                .map(|f| values[f * n * t..(f + 1) * n * t].iter().copied().max().unwrap_or(0) + 1)
                .collect()
        });
        ObservationMatrix::new(n, k, t, bins, values)
    }
}

pub(crate) fn csv_error(e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line() as usize);
    Error::parse(line, None, e.to_string())
}

/// Logarithm base used by the entropy oracle.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LogBase {
    #[default]
    Natural,
    Two,
}

impl LogBase {
    fn scale(self) -> f64 {
        match self {
            LogBase::Natural => 1.0,
            LogBase::Two => std::f64::consts::LN_2,
        }
    }
}

/// Empirical joint entropy of the readings selected by a placement.
///
/// Element `i ∈ S_q` observes feature `q` at location `i`. Each sample gives
/// one joint outcome (the tuple of selected readings), and the value is the
/// entropy of the empirical distribution of those outcomes.
#[derive(Clone, Debug)]
pub struct EntropyOracle {
    obs: ObservationMatrix,
    ground: GroundSet,
    base: LogBase,
}

impl EntropyOracle {
    pub fn new(obs: ObservationMatrix) -> Result<Self> {
        EntropyOracle::with_base(obs, LogBase::Natural)
    }

    pub fn with_base(obs: ObservationMatrix, base: LogBase) -> Result<Self> {
        let ground = GroundSet::new(obs.n_locations, obs.k_features)?;
        Ok(EntropyOracle { obs, ground, base })
    }

    pub fn observations(&self) -> &ObservationMatrix {
        &self.obs
    }

    /// Counts of each distinct joint outcome under placement `s`.
    pub fn outcome_counts(&self, s: &KSet) -> Vec<u32> {
        let t = self.obs.t_samples;
        let mut class = vec![0u32; t];
        let mut n_classes = 1usize;
        let mut remap: Vec<u32> = Vec::new();
        // Refine the sample partition one placed sensor at a time; two samples
        // share a class iff they agree on every reading seen so far.
        for (q, i) in s.assignments() {
            let bins = self.obs.bins[q] as usize;
            remap.clear();
            remap.resize(n_classes * bins, u32::MAX);
            let mut next = 0u32;
            for (c, &v) in class.iter_mut().zip(self.obs.series(q, i)) {
                let key = *c as usize * bins + v as usize;
                if remap[key] == u32::MAX {
                    remap[key] = next;
                    next += 1;
                }
                *c = remap[key];
            }
            n_classes = next as usize;
        }
        let mut counts = vec![0u32; n_classes];
        for &c in &class {
            counts[c as usize] += 1;
        }
        counts
    }
}

/// `−Σ p ln p` over outcome counts, `p = count / t`. Counts are summed in
/// ascending order so equal multisets give bit-identical results.
pub fn entropy_from_counts(counts: &mut [u32], t: usize) -> f64 {
    counts.sort_unstable();
    let t = t as f64;
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / t;
            -p * p.ln()
        })
        .sum::<f64>()
        .max(0.0)
}

impl ValueOracle for EntropyOracle {
    fn ground(&self) -> GroundSet {
        self.ground
    }

    fn value(&self, s: &KSet) -> f64 {
        let mut counts = self.outcome_counts(s);
        entropy_from_counts(&mut counts, self.obs.t_samples) / self.base.scale()
    }

    fn is_monotone(&self) -> bool {
        true
    }

    fn lower_bound(&self) -> f64 {
        0.0
    }

    fn upper_bound(&self) -> f64 {
        (self.obs.t_samples as f64).ln() / self.base.scale()
    }

    fn kind(&self) -> &'static str {
        "entropy"
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::LN_2;

    fn g(n: usize, k: usize) -> GroundSet {
        GroundSet::new(n, k).unwrap()
    }

    fn ks(text: &str, n: usize) -> KSet {
        KSet::parse(text, n).unwrap()
    }

    fn s1_minus_s2(n: usize) -> ModularOracle {
        ModularOracle::new(&[vec![1.0; n], vec![-1.0; n]]).unwrap()
    }

    fn one_location(readings: &[u32]) -> EntropyOracle {
        let obs = ObservationMatrix::from_nested(&[vec![readings.to_vec()], vec![readings.to_vec()]])
            .unwrap();
        EntropyOracle::new(obs).unwrap()
    }

    #[test]
    fn modular_eval_examples() {
        let f = ModularOracle::new(&[vec![1.0, 1.0], vec![2.0, 2.0]]).unwrap();
        assert_eq!(f.eval(&ks("({1},{2})", 2)).unwrap(), 3.0);
        assert!(f.is_monotone());

        let zero = ModularOracle::zeros(g(3, 2));
        assert!(g(3, 2).ksets().all(|s| zero.value(&s) == 0.0));

        let f = s1_minus_s2(2);
        assert!(!f.is_monotone());
        for s in g(2, 2).ksets() {
            let sizes = s.sizes();
            assert_eq!(f.value(&s), sizes[0] as f64 - sizes[1] as f64);
        }
    }

    #[test]
    fn eval_rejects_wrong_ground() {
        let f = ModularOracle::zeros(g(3, 2));
        assert!(f.eval(&KSet::empty(g(2, 2))).is_err());
    }

    #[test]
    fn marginal_examples() {
        let f = ModularOracle::new(&[vec![1.0, 1.0], vec![2.0, 2.0]]).unwrap();
        let empty = KSet::empty(g(2, 2));
        assert_eq!(f.marginal(&empty, 1, 0).unwrap(), 2.0);
        assert_eq!(s1_minus_s2(2).marginal(&empty, 1, 0).unwrap(), -1.0);
        assert!(matches!(
            f.marginal(&ks("({1},{})", 2), 1, 0),
            Err(Error::ElementAssigned { element: 0 })
        ));

        let h = one_location(&[0, 0, 1, 1]);
        let e = KSet::empty(h.ground());
        let brute = h.value(&e.with(0, 0)) - h.value(&e);
        assert_eq!(h.marginal(&e, 0, 0).unwrap(), brute);
        assert_abs_diff_eq!(brute, LN_2, epsilon = 1e-15);
    }

    #[test]
    fn entropy_examples() {
        let h = one_location(&[0, 0, 1, 1]);
        assert_eq!(h.value(&KSet::empty(h.ground())), 0.0);
        assert_abs_diff_eq!(h.value(&ks("({1},{})", 1)), LN_2, epsilon = 1e-15);

        let obs = ObservationMatrix::from_nested(&[
            vec![vec![0, 0, 1, 1], vec![0, 0, 0, 0]],
            vec![vec![0, 0, 0, 0], vec![0, 1, 0, 1]],
        ])
        .unwrap();
        let h = EntropyOracle::new(obs).unwrap();
        assert_abs_diff_eq!(h.value(&ks("({1},{2})", 2)), 4f64.ln(), epsilon = 1e-15);
        assert_abs_diff_eq!(h.upper_bound(), 4f64.ln(), epsilon = 1e-15);

        let h = one_location(&[0, 0, 0, 0]);
        assert!(h.ground().ksets().all(|s| h.value(&s) == 0.0));
    }

    #[test]
    fn entropy_base_two() {
        let obs = ObservationMatrix::from_nested(&[vec![vec![0, 1, 2, 3]]]).unwrap();
        let h = EntropyOracle::with_base(obs, LogBase::Two).unwrap();
        assert_abs_diff_eq!(h.value(&ks("({1})", 1)), 2.0, epsilon = 1e-12);
    }

    #[test]
    fn observation_rejects_bad_bins() {
        assert!(ObservationMatrix::new(1, 1, 2, vec![2], vec![0, 2]).is_err());
        assert!(ObservationMatrix::new(1, 1, 0, vec![2], vec![]).is_err());
    }

    #[test]
    fn observation_csv_round_trip() {
        let obs = ObservationMatrix::from_nested(&[
            vec![vec![0, 1, 2], vec![2, 2, 0]],
            vec![vec![1, 0, 0], vec![0, 1, 1]],
        ])
        .unwrap();
        let mut buf = Vec::new();
        obs.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("location,sample,f1,f2\n1,1,0,1\n"));
        let back = ObservationMatrix::read_csv(buf.as_slice(), Some(obs.bins().to_vec())).unwrap();
        assert_eq!(back, obs);
    }

    #[test]
    fn xi_exact_examples() {
        for n in 1..=5 {
            let f = s1_minus_s2(n);
            for i in 0..n {
                assert_eq!(xi_exact(&f, 0, i).unwrap(), 1.0);
                assert_eq!(xi_exact(&f, 1, i).unwrap(), -1.0);
            }
        }
        let h = one_location(&[0, 1, 1, 2]);
        assert!(xi_exact(&h, 0, 0).unwrap() >= 0.0);
    }

    #[test]
    fn xi_exact_all_agrees_with_single() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let ground = g(4, 3);
        let f = TableOracle::from_fn(ground, |s| {
            if s.is_empty() {
                0.0
            } else {
                (s.rank() as f64 * 0.37).sin()
            }
        })
        .unwrap();
        let all = xi_exact_all(&f, XI_PARTITION_CAP).unwrap();
        for _ in 0..10 {
            let (q, i) = (rng.random_range(0..3), rng.random_range(0..4));
            assert_eq!(all.get(q, i), xi_exact(&f, q, i).unwrap());
        }
    }

    #[test]
    fn xi_exact_cap() {
        let f = ModularOracle::zeros(g(17, 2));
        assert!(matches!(xi_exact(&f, 0, 0), Err(Error::EnumerationCap { .. })));
        let f = ModularOracle::zeros(g(16, 2));
        assert!(xi_exact(&f, 0, 0).is_ok());
    }

    #[test]
    fn xi_bound_examples() {
        let f = s1_minus_s2(3);
        assert_eq!((f.lower_bound(), f.upper_bound()), (-3.0, 3.0));
        assert_eq!(xi_bound(&f).unwrap(), -6.0);
        assert!(xi_bound(&f).unwrap() <= xi_exact(&f, 1, 0).unwrap());

        let h = one_location(&[0, 1, 1, 1]);
        assert_eq!(xi_bound(&h).unwrap(), -h.upper_bound());
    }

    #[test]
    fn coverage_examples() {
        // covers[q][i]
        let f = CoverageOracle::unit(1, vec![vec![vec![0]], vec![vec![0]]]).unwrap();
        assert_eq!(f.value(&ks("({1},{})", 1)), 1.0);
        assert_eq!(f.value(&ks("({},{1})", 1)), 1.0);

        let f = CoverageOracle::unit(
            5,
            vec![
                vec![vec![0, 1], vec![1], vec![4, 2]],
                vec![vec![2], vec![3], vec![0]],
            ],
        )
        .unwrap();
        assert_eq!(f.value(&ks("({1},{2})", 3)), 3.0);
        assert_eq!(f.value(&ks("({1,3},{2})", 3)), 5.0);
        assert!(CoverageOracle::unit(1, vec![vec![vec![3]]]).is_err());
    }

    #[test]
    fn table_examples() {
        let ground = g(2, 2);
        let sq = TableOracle::from_fn(ground, |s| (s.sizes()[0] as f64).powi(2)).unwrap();
        assert_eq!(sq.value(&ks("({1,2},{})", 2)), 4.0);
        assert_eq!(sq.value(&KSet::empty(ground)), 0.0);

        let modular = ModularOracle::new(&[vec![1.0, 3.0], vec![-2.0, 0.5]]).unwrap();
        let map: HashMap<KSet, f64> = ground.ksets().map(|s| (s.clone(), modular.value(&s))).collect();
        let table = TableOracle::new(ground, &map).unwrap();
        assert_eq!(map.len(), 9);
        assert!(ground.ksets().all(|s| table.value(&s) == modular.value(&s)));
        assert!(!table.is_monotone());

        let mut partial = map.clone();
        partial.remove(&ks("({},{2})", 2));
        assert!(matches!(TableOracle::new(ground, &partial), Err(Error::MissingTableEntry(_))));
        assert!(matches!(
            TableOracle::from_fn(ground, |_| 1.0),
            Err(Error::NotNormalized(_))
        ));
    }

    #[test]
    fn table_monotone_flag_matches_definition() {
        let ground = g(3, 2);
        let cov = CoverageOracle::unit(
            3,
            vec![vec![vec![0], vec![1], vec![2]], vec![vec![1], vec![2], vec![0]]],
        )
        .unwrap();
        assert!(TableOracle::from_oracle(&cov).unwrap().is_monotone());
        assert!(!TableOracle::from_oracle(&s1_minus_s2(3)).unwrap().is_monotone());
        let _ = ground;
    }

    #[test]
    fn counting_oracle_counts() {
        let f = CountingOracle::new(ModularOracle::zeros(g(2, 2)));
        for s in g(2, 2).ksets() {
            f.value(&s);
        }
        assert_eq!(f.evaluations(), 9);
    }
}
