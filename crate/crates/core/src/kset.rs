//! Ground sets, k-sets and their characteristic vectors.
//!
//! A [`KSet`] stores one label per element: `0` means unassigned and `q + 1`
//! means the element belongs to subset `q`. Disjointness of the subsets is
//! therefore structural. Elements and subset indices are 0-based everywhere in
//! the API; the textual notation `({1,3},{2},{})` is 1-based.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The ground set `{1, ..., n}` together with the number of subsets `k`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GroundSet {
    n: usize,
    k: usize,
}

impl GroundSet {
    pub fn new(n: usize, k: usize) -> Result<Self> {
        if n == 0 || k == 0 || k > u8::MAX as usize {
            return Err(Error::InvalidGroundSet { n, k });
        }
        Ok(GroundSet { n, k })
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn k(&self) -> usize {
        self.k
    }

    /// Length of the characteristic vector, `k * n`.
    #[inline]
    pub fn dim(&self) -> usize {
        self.k * self.n
    }

    /// Position of `x_i^q` inside a characteristic vector.
    #[inline]
    pub fn var_index(&self, q: usize, i: usize) -> usize {
        q * self.n + i
    }

    /// Inverse of [`GroundSet::var_index`].
    #[inline]
    pub fn var_position(&self, var: usize) -> (usize, usize) {
        (var / self.n, var % self.n)
    }

    /// Number of k-sets, `(k + 1)^n`, saturating at `u128::MAX`.
    pub fn num_ksets(&self) -> u128 {
        (self.k as u128 + 1).checked_pow(self.n as u32).unwrap_or(u128::MAX)
    }

    /// Every k-set over this ground set, in lexicographic order of the
    /// label vectors.
    pub fn ksets(&self) -> KSetIter {
        KSetIter::new(*self, None)
    }

    /// Every partition of `N \ {excluded}`: the excluded element stays
    /// unassigned and every other element carries a label in `1..=k`.
    pub fn partitions_without(&self, excluded: usize) -> KSetIter {
        KSetIter::new(*self, Some(excluded))
    }

    pub(crate) fn check_same(&self, other: &GroundSet) -> Result<()> {
        if self != other {
            return Err(Error::DimensionMismatch {
                expected: format!("n = {}, k = {}", self.n, self.k),
                found: format!("n = {}, k = {}", other.n, other.k),
            });
        }
        Ok(())
    }
}

/// A k-tuple of pairwise disjoint subsets of the ground set.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "KSetRepr", into = "KSetRepr")]
pub struct KSet {
    k: usize,
    labels: Vec<u8>,
}

impl KSet {
    pub fn empty(ground: GroundSet) -> Self {
        KSet {
            k: ground.k,
            labels: vec![0; ground.n],
        }
    }

    /// Builds a k-set from a label vector over `{0, ..., k}`.
    pub fn from_labels(k: usize, labels: Vec<u8>) -> Result<Self> {
        GroundSet::new(labels.len(), k)?;
        if let Some(&bad) = labels.iter().find(|&&l| l as usize > k) {
            return Err(Error::InvalidLabel {
                label: bad as usize,
                k,
            });
        }
        Ok(KSet { k, labels })
    }

    /// Builds a k-set from its subsets, given as 0-based element lists.
    pub fn from_subsets<S: AsRef<[usize]>>(ground: GroundSet, subsets: &[S]) -> Result<Self> {
        if subsets.len() != ground.k {
            return Err(Error::DimensionMismatch {
                expected: format!("{} subsets", ground.k),
                found: format!("{} subsets", subsets.len()),
            });
        }
        let mut labels = vec![0u8; ground.n];
        for (q, subset) in subsets.iter().enumerate() {
            for &i in subset.as_ref() {
                if i >= ground.n {
                    return Err(Error::InvalidElement {
                        element: i,
                        n: ground.n,
                    });
                }
                if labels[i] != 0 && labels[i] as usize != q + 1 {
                    return Err(Error::OverlappingAssignment { element: i });
                }
                labels[i] = (q + 1) as u8;
            }
        }
        Ok(KSet { k: ground.k, labels })
    }

    /// Parses the `({1,3},{2},{})` notation (1-based elements).
    pub fn parse(text: &str, n: usize) -> Result<Self> {
        let body = text.trim();
        let body = body
            .strip_prefix('(')
            .and_then(|b| b.strip_suffix(')'))
            .ok_or_else(|| Error::parse(None, None, format!("k-set `{text}` is not parenthesized")))?;
        let mut subsets: Vec<Vec<usize>> = Vec::new();
        let mut rest = body.trim();
        while !rest.is_empty() {
            let open = rest
                .strip_prefix('{')
                .ok_or_else(|| Error::parse(None, None, format!("expected `{{` in `{text}`")))?;
            let close = open
                .find('}')
                .ok_or_else(|| Error::parse(None, None, format!("unclosed subset in `{text}`")))?;
            let mut subset = Vec::new();
            for tok in open[..close].split(',').map(str::trim).filter(|t| !t.is_empty()) {
                let e: usize = tok
                    .parse()
                    .map_err(|_| Error::parse(None, None, format!("bad element `{tok}` in `{text}`")))?;
                if e == 0 {
                    return Err(Error::parse(None, None, "elements are numbered from 1"));
                }
                subset.push(e - 1);
            }
            subsets.push(subset);
            rest = open[close + 1..].trim_start();
            rest = rest.strip_prefix(',').unwrap_or(rest).trim_start();
        }
        let ground = GroundSet::new(n, subsets.len())?;
        KSet::from_subsets(ground, &subsets)
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.labels.len()
    }

    #[inline]
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn ground(&self) -> GroundSet {
        GroundSet {
            n: self.labels.len(),
            k: self.k,
        }
    }

    #[inline]
    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    /// Subset holding element `i`, if any.
    #[inline]
    pub fn subset_of(&self, i: usize) -> Option<usize> {
        match self.labels[i] {
            0 => None,
            l => Some(l as usize - 1),
        }
    }

    #[inline]
    pub fn is_assigned(&self, i: usize) -> bool {
        self.labels[i] != 0
    }

    /// Assigns `i` to subset `q` (or unassigns it for `None`).
    #[inline]
    pub fn set(&mut self, i: usize, q: Option<usize>) {
        debug_assert!(q.is_none_or(|q| q < self.k));
        self.labels[i] = q.map_or(0, |q| (q + 1) as u8);
    }

    /// Copy of `self` with element `i` moved into subset `q`.
    pub fn with(&self, i: usize, q: usize) -> KSet {
        let mut out = self.clone();
        out.set(i, Some(q));
        out
    }

    /// Elements of subset `q`, ascending.
    pub fn subset(&self, q: usize) -> impl Iterator<Item = usize> + '_ {
        let label = (q + 1) as u8;
        self.labels
            .iter()
            .enumerate()
            .filter(move |(_, &l)| l == label)
            .map(|(i, _)| i)
    }

    /// `(q, i)` pairs of all assigned elements, by element.
    pub fn assignments(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.labels
            .iter()
            .enumerate()
            .filter(|(_, &l)| l != 0)
            .map(|(i, &l)| (l as usize - 1, i))
    }

    /// `|S_q|` for every q.
    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &l in &self.labels {
            if l != 0 {
                sizes[l as usize - 1] += 1;
            }
        }
        sizes
    }

    /// Number of assigned elements.
    pub fn len(&self) -> usize {
        self.labels.iter().filter(|&&l| l != 0).count()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.iter().all(|&l| l == 0)
    }

    /// True iff the subsets jointly cover the ground set.
    pub fn is_partition(&self) -> bool {
        self.labels.iter().all(|&l| l != 0)
    }

    /// Componentwise inclusion `X_q ⊆ Y_q` for all q.
    pub fn is_subset_of(&self, other: &KSet) -> bool {
        self.k == other.k
            && self.labels.len() == other.labels.len()
            && self
                .labels
                .iter()
                .zip(&other.labels)
                .all(|(&a, &b)| a == 0 || a == b)
    }

    pub fn to_char_vector(&self) -> CharVector {
        let n = self.labels.len();
        let mut bits = vec![0u8; self.k * n];
        for (q, i) in self.assignments() {
            bits[q * n + i] = 1;
        }
        CharVector { k: self.k, n, bits }
    }

    /// Inverse of [`KSet::to_char_vector`]; rejects vectors that put an
    /// element into two subsets.
    pub fn from_char_vector(x: &CharVector) -> Result<Self> {
        let mut labels = vec![0u8; x.n];
        for q in 0..x.k {
            for (i, label) in labels.iter_mut().enumerate() {
                if x.get(q, i) {
                    if *label != 0 {
                        return Err(Error::OverlappingAssignment { element: i });
                    }
                    *label = (q + 1) as u8;
                }
            }
        }
        Ok(KSet { k: x.k, labels })
    }

    /// Componentwise intersection `(A_1 ∩ B_1, ..., A_k ∩ B_k)`.
    pub fn meet(&self, other: &KSet) -> Result<KSet> {
        self.ground().check_same(&other.ground())?;
        let labels = self
            .labels
            .iter()
            .zip(&other.labels)
            .map(|(&a, &b)| if a == b { a } else { 0 })
            .collect();
        Ok(KSet { k: self.k, labels })
    }

    /// Componentwise union with every element claimed by two different
    /// subsets removed.
    pub fn join(&self, other: &KSet) -> Result<KSet> {
        self.ground().check_same(&other.ground())?;
        let labels = self
            .labels
            .iter()
            .zip(&other.labels)
            .map(|(&a, &b)| join_label(a, b))
            .collect();
        Ok(KSet { k: self.k, labels })
    }

    /// Mixed-radix rank with radix `k + 1`, element 0 most significant.
    /// Agrees with the order of [`GroundSet::ksets`].
    pub fn rank(&self) -> usize {
        let radix = self.k + 1;
        self.labels
            .iter()
            .fold(0usize, |acc, &l| acc * radix + l as usize)
    }

    /// Inverse of [`KSet::rank`].
    pub fn from_rank(ground: GroundSet, mut rank: usize) -> KSet {
        let radix = ground.k + 1;
        let mut labels = vec![0u8; ground.n];
        for l in labels.iter_mut().rev() {
            *l = (rank % radix) as u8;
            rank /= radix;
        }
        KSet { k: ground.k, labels }
    }
}

#[derive(Serialize, Deserialize)]
struct KSetRepr {
    k: usize,
    labels: Vec<u8>,
}

impl TryFrom<KSetRepr> for KSet {
    type Error = Error;

    fn try_from(r: KSetRepr) -> Result<Self> {
        KSet::from_labels(r.k, r.labels)
    }
}

impl From<KSet> for KSetRepr {
    fn from(s: KSet) -> Self {
        KSetRepr {
            k: s.k,
            labels: s.labels,
        }
    }
}

#[inline]
pub(crate) fn join_label(a: u8, b: u8) -> u8 {
    match (a, b) {
        (0, b) => b,
        (a, 0) => a,
        (a, b) if a == b => a,
        _ => 0,
    }
}

impl fmt::Display for KSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for q in 0..self.k {
            if q > 0 {
                write!(f, ",")?;
            }
            write!(f, "{{")?;
            for (j, i) in self.subset(q).enumerate() {
                if j > 0 {
                    write!(f, ",")?;
                }
                write!(f, "{}", i + 1)?;
            }
            write!(f, "}}")?;
        }
        write!(f, ")")
    }
}

/// The 0/1 vector `x` with `x_i^q = 1` iff element `i` lies in subset `q`.
/// Entries are laid out subset-major: `x_i^q` sits at `q * n + i`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct CharVector {
    k: usize,
    n: usize,
    bits: Vec<u8>,
}

impl CharVector {
    pub fn new(k: usize, n: usize, bits: Vec<u8>) -> Result<Self> {
        GroundSet::new(n, k)?;
        if bits.len() != k * n {
            return Err(Error::DimensionMismatch {
                expected: format!("{} entries", k * n),
                found: format!("{} entries", bits.len()),
            });
        }
        if let Some(&b) = bits.iter().find(|&&b| b > 1) {
            return Err(Error::NonFinite(format!("characteristic entry {b} is not 0/1")));
        }
        Ok(CharVector { k, n, bits })
    }

    pub fn zeros(ground: GroundSet) -> Self {
        CharVector {
            k: ground.k,
            n: ground.n,
            bits: vec![0; ground.dim()],
        }
    }

    /// Rounds a relaxed solution to the nearest 0/1 vector.
    pub fn round(ground: GroundSet, values: &[f64]) -> Result<Self> {
        let bits = values.iter().map(|&v| u8::from(v > 0.5)).collect();
        CharVector::new(ground.k, ground.n, bits)
    }

    pub fn ground(&self) -> GroundSet {
        GroundSet { n: self.n, k: self.k }
    }

    #[inline]
    pub fn get(&self, q: usize, i: usize) -> bool {
        self.bits[q * self.n + i] != 0
    }

    #[inline]
    pub fn set(&mut self, q: usize, i: usize, on: bool) {
        self.bits[q * self.n + i] = u8::from(on);
    }

    #[inline]
    pub fn as_slice(&self) -> &[u8] {
        &self.bits
    }
}

/// Odometer over label vectors; the last element turns fastest, so the
/// output is in ascending lexicographic order.
pub struct KSetIter {
    ground: GroundSet,
    excluded: Option<usize>,
    current: Option<Vec<u8>>,
}

impl KSetIter {
    fn new(ground: GroundSet, excluded: Option<usize>) -> Self {
        let start = match excluded {
            None => vec![0u8; ground.n],
            Some(ex) => (0..ground.n).map(|i| u8::from(i != ex)).collect(),
        };
        KSetIter {
            ground,
            excluded,
            current: Some(start),
        }
    }
}

impl Iterator for KSetIter {
    type Item = KSet;

    fn next(&mut self) -> Option<KSet> {
        let labels = self.current.as_mut()?;
        let out = KSet {
            k: self.ground.k,
            labels: labels.clone(),
        };
        let k = self.ground.k as u8;
        let low = u8::from(self.excluded.is_some());
        let mut pos = labels.len();
        loop {
            if pos == 0 {
                self.current = None;
                break;
            }
            pos -= 1;
            if Some(pos) == self.excluded {
                continue;
            }
            if labels[pos] < k {
                labels[pos] += 1;
                break;
            }
            labels[pos] = low;
        }
        Some(out)
    }
}
