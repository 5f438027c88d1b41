//! Master problem and its branch-and-bound solver.
//!
//! The master maximizes the free variable η over binary characteristic
//! vectors `x`, subject to the accumulated cut pool (`η ≤ c0 + c·x`) and the
//! side constraints describing the feasible k-sets.

mod simplex;

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::fmt::Write as _;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::cuts::Cut;
use crate::error::{Error, Result};
use crate::kset::{CharVector, GroundSet, KSet};

use simplex::{LpOutcome, LpProblem, Row, Simplex, Status};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Sense {
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = ">=")]
    Ge,
    #[serde(rename = "=")]
    Eq,
}

/// `Σ coeffs[j] · x_j (≤|≥|=) rhs` over characteristic-vector positions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearConstraint {
    coeffs: Vec<(usize, f64)>,
    sense: Sense,
    rhs: f64,
}

impl LinearConstraint {
    /// Duplicate variables are merged and zero coefficients dropped.
    pub fn new(coeffs: impl IntoIterator<Item = (usize, f64)>, sense: Sense, rhs: f64) -> Result<Self> {
        let mut merged: Vec<(usize, f64)> = coeffs.into_iter().collect();
        merged.sort_by_key(|&(j, _)| j);
        merged.dedup_by(|b, a| {
            if a.0 == b.0 {
                a.1 += b.1;
                true
            } else {
                false
            }
        });
        merged.retain(|&(_, a)| a != 0.0);
        if merged.iter().any(|(_, a)| !a.is_finite()) || !rhs.is_finite() {
            return Err(Error::NonFinite("constraint coefficient".into()));
        }
        if merged.is_empty() {
            return Err(Error::InvalidRegion("constraint has no nonzero coefficient".into()));
        }
        Ok(LinearConstraint {
            coeffs: merged,
            sense,
            rhs,
        })
    }

    pub fn le(coeffs: impl IntoIterator<Item = (usize, f64)>, rhs: f64) -> Result<Self> {
        LinearConstraint::new(coeffs, Sense::Le, rhs)
    }

    pub fn ge(coeffs: impl IntoIterator<Item = (usize, f64)>, rhs: f64) -> Result<Self> {
        LinearConstraint::new(coeffs, Sense::Ge, rhs)
    }

    pub fn eq(coeffs: impl IntoIterator<Item = (usize, f64)>, rhs: f64) -> Result<Self> {
        LinearConstraint::new(coeffs, Sense::Eq, rhs)
    }

    pub fn coeffs(&self) -> &[(usize, f64)] {
        &self.coeffs
    }

    pub fn sense(&self) -> Sense {
        self.sense
    }

    pub fn rhs(&self) -> f64 {
        self.rhs
    }

    pub fn max_var(&self) -> usize {
        self.coeffs.last().map_or(0, |&(j, _)| j)
    }

    pub fn activity(&self, x: &[f64]) -> f64 {
        self.coeffs.iter().map(|&(j, a)| a * x[j]).sum()
    }

    pub fn is_satisfied(&self, x: &[f64], tol: f64) -> bool {
        let lhs = self.activity(x);
        match self.sense {
            Sense::Le => lhs <= self.rhs + tol,
            Sense::Ge => lhs >= self.rhs - tol,
            Sense::Eq => (lhs - self.rhs).abs() <= tol,
        }
    }

    /// Evaluates the constraint at the characteristic vector of `s`.
    pub fn is_satisfied_by(&self, s: &KSet, tol: f64) -> bool {
        let n = s.n();
        let lhs: f64 = self
            .coeffs
            .iter()
            .filter(|&&(j, _)| s.labels()[j % n] as usize == j / n + 1)
            .map(|&(_, a)| a)
            .sum();
        match self.sense {
            Sense::Le => lhs <= self.rhs + tol,
            Sense::Ge => lhs >= self.rhs - tol,
            Sense::Eq => (lhs - self.rhs).abs() <= tol,
        }
    }
}

/// max η s.t. cuts, side constraints, x binary, η ≥ `eta_lower`.
#[derive(Clone, Debug)]
pub struct MasterProblem {
    ground: GroundSet,
    cuts: Vec<Cut>,
    cut_rows: Vec<Vec<(usize, f64)>>,
    side: Vec<LinearConstraint>,
    eta_lower: f64,
}

impl MasterProblem {
    pub fn new(ground: GroundSet, side: Vec<LinearConstraint>, eta_lower: f64) -> Result<Self> {
        if eta_lower.is_nan() || eta_lower == f64::INFINITY {
            return Err(Error::NonFinite(format!("eta lower bound {eta_lower}")));
        }
        if let Some(c) = side.iter().find(|c| c.max_var() >= ground.dim()) {
            return Err(Error::DimensionMismatch {
                expected: format!("variables below {}", ground.dim()),
                found: format!("variable {}", c.max_var()),
            });
        }
        Ok(MasterProblem {
            ground,
            cuts: Vec::new(),
            cut_rows: Vec::new(),
            side,
            eta_lower,
        })
    }

    pub fn ground(&self) -> GroundSet {
        self.ground
    }

    pub fn cuts(&self) -> &[Cut] {
        &self.cuts
    }

    pub fn side_constraints(&self) -> &[LinearConstraint] {
        &self.side
    }

    pub fn eta_lower(&self) -> f64 {
        self.eta_lower
    }

    pub fn add_cut(&mut self, c: Cut) -> Result<()> {
        self.ground.check_same(&c.ground())?;
        // Row form: η − Σ c x ≤ c0, η sits at column `dim`.
        let eta = self.ground.dim();
        let mut row: Vec<(usize, f64)> = c
            .coeffs()
            .iter()
            .enumerate()
            .filter(|(_, &a)| a != 0.0)
            .map(|(j, &a)| (j, -a))
            .collect();
        row.push((eta, 1.0));
        self.cut_rows.push(row);
        self.cuts.push(c);
        Ok(())
    }

    /// Builder form of [`MasterProblem::add_cut`].
    pub fn with_cut(mut self, c: Cut) -> Result<Self> {
        self.add_cut(c)?;
        Ok(self)
    }

    pub fn has_cut_from(&self, s: &KSet) -> bool {
        self.cuts.iter().any(|c| c.source() == s)
    }

    /// Smallest cut right-hand side at a binary point: the η the pool
    /// allows there.
    pub fn eta_at(&self, s: &KSet) -> f64 {
        self.cuts
            .iter()
            .map(|c| c.rhs_at(s))
            .fold(f64::INFINITY, f64::min)
    }

    /// Whether `s` satisfies every side constraint.
    pub fn admits(&self, s: &KSet, tol: f64) -> bool {
        self.side.iter().all(|c| c.is_satisfied_by(s, tol))
    }

    /// LP-format text dump (variables `x_q_i`, 1-based, and `eta`).
    pub fn to_lp_string(&self) -> String {
        let name = |j: usize| {
            let (q, i) = self.ground.var_position(j);
            format!("x_{}_{}", q + 1, i + 1)
        };
        let term = |out: &mut String, a: f64, var: &str| {
            let sign = if a < 0.0 { "-" } else { "+" };
            let _ = write!(out, " {sign} {} {var}", a.abs());
        };
        let mut out = String::from("\\ k-submodular master problem\nMaximize\n obj: eta\nSubject To\n");
        for (r, c) in self.cuts.iter().enumerate() {
            let _ = write!(out, " cut{r}: eta");
            for (j, &a) in c.coeffs().iter().enumerate() {
                if a != 0.0 {
                    term(&mut out, -a, &name(j));
                }
            }
            let _ = writeln!(out, " <= {}", c.constant());
        }
        for (r, c) in self.side.iter().enumerate() {
            let _ = write!(out, " side{r}:");
            for &(j, a) in c.coeffs() {
                term(&mut out, a, &name(j));
            }
            let op = match c.sense() {
                Sense::Le => "<=",
                Sense::Ge => ">=",
                Sense::Eq => "=",
            };
            let _ = writeln!(out, " {op} {}", c.rhs());
        }
        out.push_str("Bounds\n");
        if self.eta_lower.is_finite() {
            let _ = writeln!(out, " eta >= {}", self.eta_lower);
        } else {
            out.push_str(" eta free\n");
        }
        out.push_str("Binary\n");
        for j in 0..self.ground.dim() {
            let _ = writeln!(out, " {}", name(j));
        }
        out.push_str("End\n");
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LpStatus {
    Optimal,
    Infeasible,
}

#[derive(Clone, Debug)]
pub struct LpSolution {
    pub status: LpStatus,
    /// Relaxed x values (empty when infeasible).
    pub x: Vec<f64>,
    pub eta: f64,
}

/// Solves the linear relaxation of `p` with per-variable bounds on x.
pub fn lp_solve(p: &MasterProblem, var_bounds: &[(f64, f64)]) -> Result<LpSolution> {
    lp_solve_with_tol(p, var_bounds, DEFAULT_FEASIBILITY_TOL)
}

pub fn lp_solve_with_tol(p: &MasterProblem, var_bounds: &[(f64, f64)], feas_tol: f64) -> Result<LpSolution> {
    let problem = master_lp(p, var_bounds)?;
    match simplex::solve(&problem, feas_tol)? {
        LpOutcome::Optimal { mut values, objective } => {
            values.pop();
            Ok(LpSolution {
                status: LpStatus::Optimal,
                x: values,
                eta: objective,
            })
        }
        LpOutcome::Infeasible => Ok(LpSolution {
            status: LpStatus::Infeasible,
            x: Vec::new(),
            eta: f64::NEG_INFINITY,
        }),
        LpOutcome::Unbounded => Err(Error::Unbounded),
    }
}

/// The linear relaxation as a simplex problem; η is the last column.
fn master_lp<'a>(p: &'a MasterProblem, var_bounds: &[(f64, f64)]) -> Result<LpProblem<'a>> {
    let dim = p.ground.dim();
    if var_bounds.len() != dim {
        return Err(Error::DimensionMismatch {
            expected: format!("{dim} variable bounds"),
            found: format!("{} variable bounds", var_bounds.len()),
        });
    }
    if let Some(&(lo, hi)) = var_bounds.iter().find(|(lo, hi)| !lo.is_finite() || !hi.is_finite()) {
        return Err(Error::NonFinite(format!("x bound [{lo}, {hi}]")));
    }
    let mut objective = vec![0.0; dim + 1];
    objective[dim] = 1.0;
    let mut lower: Vec<f64> = var_bounds.iter().map(|b| b.0).collect();
    let mut upper: Vec<f64> = var_bounds.iter().map(|b| b.1).collect();
    lower.push(p.eta_lower);
    upper.push(f64::INFINITY);

    let rows = p
        .cut_rows
        .iter()
        .zip(&p.cuts)
        .map(|(row, c)| Row {
            coeffs: row,
            sense: Sense::Le,
            rhs: c.constant(),
        })
        .chain(p.side.iter().map(|c| Row {
            coeffs: &c.coeffs,
            sense: c.sense,
            rhs: c.rhs,
        }))
        .collect();
    Ok(LpProblem {
        objective,
        rows,
        lower,
        upper,
    })
}

pub const DEFAULT_FEASIBILITY_TOL: f64 = 1e-9;
pub const DEFAULT_INTEGRALITY_TOL: f64 = 1e-6;

#[derive(Clone, Debug)]
pub struct BbConfig {
    pub feasibility_tol: f64,
    pub integrality_tol: f64,
    pub max_nodes: u64,
    pub deadline: Option<Instant>,
    pub branching: Branching,
}

/// Choice of the branching variable among the fractional ones.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Branching {
    /// Farthest from integrality, lowest index on ties.
    #[default]
    MostFractional,
    /// Largest product of estimated bound losses in the two children, from
    /// the losses observed when branching on each variable so far.
    PseudoCost,
}

impl Default for BbConfig {
    fn default() -> Self {
        BbConfig {
            feasibility_tol: DEFAULT_FEASIBILITY_TOL,
            integrality_tol: DEFAULT_INTEGRALITY_TOL,
            max_nodes: 1_000_000,
            deadline: None,
            branching: Branching::MostFractional,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BbStatus {
    Optimal,
    Infeasible,
    NodeLimit,
    TimeLimit,
}

#[derive(Clone, Debug)]
pub struct BbResult {
    pub status: BbStatus,
    /// Best binary point found (the optimum when `status` is optimal).
    pub x: Option<CharVector>,
    pub eta: f64,
    pub nodes: u64,
    /// Best bound still open when the search stopped early.
    pub bound: f64,
}

impl BbResult {
    pub fn kset(&self) -> Option<KSet> {
        self.x.as_ref().and_then(|x| KSet::from_char_vector(x).ok())
    }
}

struct Node {
    bound: f64,
    id: u64,
    bounds: Vec<(f64, f64)>,
    x: Vec<f64>,
    /// Optimal basis of this node's relaxation, kept to warm start children.
    basis: Option<Box<Simplex>>,
}

/// Open nodes beyond this count do not keep their basis.
const MAX_STORED_BASES: usize = 4096;

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Node {}

impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Node {
    // Max-heap on bound; among equal bounds the older node first.
    fn cmp(&self, other: &Self) -> Ordering {
        self.bound
            .total_cmp(&other.bound)
            .then_with(|| other.id.cmp(&self.id))
    }
}

/// Best-bound branch-and-bound with most-fractional branching.
pub fn bb_solve(p: &MasterProblem) -> Result<BbResult> {
    bb_solve_with(p, &BbConfig::default())
}

pub fn bb_solve_with(p: &MasterProblem, cfg: &BbConfig) -> Result<BbResult> {
    bb_solve_from(p, cfg, None)
}

/// Branch-and-bound started from a known binary point, which is used as the
/// first incumbent when it satisfies the side constraints. The result is
/// still the exact master optimum; a good start only prunes earlier.
pub fn bb_solve_from(p: &MasterProblem, cfg: &BbConfig, start: Option<&KSet>) -> Result<BbResult> {
    if p.cuts.is_empty() {
        return Err(Error::EmptyCutPool);
    }
    let ground = p.ground;
    let dim = ground.dim();
    let mut nodes = 0u64;
    let mut next_id = 0u64;
    let mut heap = BinaryHeap::new();
    let mut best: Option<(CharVector, f64)> = None;
    if let Some(s) = start {
        ground.check_same(&s.ground())?;
        if p.side.iter().all(|c| c.is_satisfied_by(s, 1e-9)) {
            let eta = p.eta_at(s);
            if eta >= p.eta_lower {
                best = Some((s.to_char_vector(), eta));
            }
        }
    }

    // Solves a node cold from its bounds, or warm from the parent's basis
    // after fixing one variable; falls back to a cold solve on trouble.
    let solve = |bounds: &[(f64, f64)], warm: Option<(&Simplex, usize)>| -> Result<Option<Simplex>> {
        if let Some((parent, j)) = warm {
            let mut s = parent.clone();
            s.set_bounds(j, bounds[j].0, bounds[j].1);
            match s.dual() {
                Ok(Status::Optimal) => return Ok(Some(s)),
                Ok(Status::Infeasible) => return Ok(None),
                Ok(Status::Unbounded) => return Err(Error::Unbounded),
                Err(Error::Numerical(_)) => {}
                Err(e) => return Err(e),
            }
        }
        if bounds.iter().any(|(lo, hi)| lo > hi) {
            return Ok(None);
        }
        let problem = master_lp(p, bounds)?;
        let mut s = Simplex::new(&problem, cfg.feasibility_tol)?;
        match s.primal()? {
            Status::Optimal => Ok(Some(s)),
            Status::Infeasible => Ok(None),
            Status::Unbounded => Err(Error::Unbounded),
        }
    };
    let mut make_node = |bounds: Vec<(f64, f64)>, s: Simplex, keep: bool| -> Node {
        let id = next_id;
        next_id += 1;
        let mut x = s.values();
        let bound = s.objective();
        x.pop();
        Node {
            bound,
            id,
            bounds,
            x,
            basis: keep.then(|| Box::new(s)),
        }
    };

    let mut pseudo = PseudoCosts::new(dim);
    let root_bounds = vec![(0.0, 1.0); dim];
    nodes += 1;
    match solve(&root_bounds, None)? {
        None => {
            return Ok(BbResult {
                status: BbStatus::Infeasible,
                x: None,
                eta: f64::NEG_INFINITY,
                nodes,
                bound: f64::NEG_INFINITY,
            })
        }
        Some(s) => heap.push(make_node(root_bounds, s, true)),
    }

    let prune = |bound: f64, best: &Option<(CharVector, f64)>| match best {
        Some((_, v)) => bound <= v + 1e-9 * v.abs().max(1.0),
        None => false,
    };

    let mut stopped = None;
    while let Some(node) = heap.pop() {
        if prune(node.bound, &best) {
            // Best-first: nothing left can beat the incumbent.
            heap.clear();
            break;
        }
        if cfg.deadline.is_some_and(|d| Instant::now() >= d) {
            stopped = Some((BbStatus::TimeLimit, node.bound));
            break;
        }
        if nodes >= cfg.max_nodes {
            stopped = Some((BbStatus::NodeLimit, node.bound));
            break;
        }

        let branch = match cfg.branching {
            Branching::MostFractional => most_fractional(&node.x, cfg.integrality_tol),
            Branching::PseudoCost => pseudo.choose(&node.x, cfg.integrality_tol),
        };
        match branch {
            None => {
                let x = CharVector::round(ground, &node.x)?;
                let xf: Vec<f64> = x.as_slice().iter().map(|&b| f64::from(b)).collect();
                if !p.side.iter().all(|c| c.is_satisfied(&xf, 1e-6)) {
                    return Err(Error::Numerical(
                        "rounded master solution violates a side constraint".into(),
                    ));
                }
                let eta = p
                    .cuts
                    .iter()
                    .map(|c| c.rhs_relaxed(&xf))
                    .fold(f64::INFINITY, f64::min);
                if eta < p.eta_lower - 1e-6 {
                    return Err(Error::Numerical(
                        "rounded master solution violates the eta lower bound".into(),
                    ));
                }
                if best.as_ref().is_none_or(|(_, v)| eta > *v) {
                    best = Some((x, eta));
                }
            }
            Some(j) => {
                for fixed in [0.0, 1.0] {
                    let mut bounds = node.bounds.clone();
                    bounds[j] = (fixed, fixed);
                    nodes += 1;
                    let warm = node.basis.as_deref().map(|s| (s, j));
                    if let Some(s) = solve(&bounds, warm)? {
                        let keep = heap.len() < MAX_STORED_BASES;
                        let child = make_node(bounds, s, keep);
                        pseudo.record(j, fixed > 0.5, node.x[j], node.bound - child.bound);
                        if !prune(child.bound, &best) {
                            heap.push(child);
                        }
                    }
                }
            }
        }
    }

    let (status, bound) = match stopped {
        Some((status, bound)) => {
            let open = heap.iter().map(|n| n.bound).fold(bound, f64::max);
            (status, open)
        }
        None if best.is_none() => (BbStatus::Infeasible, f64::NEG_INFINITY),
        None => (BbStatus::Optimal, best.as_ref().map_or(f64::NEG_INFINITY, |b| b.1)),
    };
    let (x, eta) = match best {
        Some((x, eta)) => (Some(x), eta),
        None => (None, f64::NEG_INFINITY),
    };
    Ok(BbResult {
        status,
        x,
        eta,
        nodes,
        bound,
    })
}

/// Average bound loss per unit change, per variable and direction.
struct PseudoCosts {
    sum: [Vec<f64>; 2],
    count: [Vec<u32>; 2],
}

impl PseudoCosts {
    fn new(dim: usize) -> Self {
        PseudoCosts {
            sum: [vec![0.0; dim], vec![0.0; dim]],
            count: [vec![0; dim], vec![0; dim]],
        }
    }

    fn record(&mut self, j: usize, up: bool, value: f64, loss: f64) {
        let dist = if up { 1.0 - value } else { value };
        if dist > 1e-9 && loss.is_finite() {
            let d = usize::from(up);
            self.sum[d][j] += loss.max(0.0) / dist;
            self.count[d][j] += 1;
        }
    }

    fn estimate(&self, d: usize, j: usize, fallback: f64) -> f64 {
        match self.count[d][j] {
            0 => fallback,
            c => self.sum[d][j] / c as f64,
        }
    }

    fn average(&self, d: usize) -> f64 {
        let (s, c) = self.sum[d]
            .iter()
            .zip(&self.count[d])
            .fold((0.0, 0u32), |(s, c), (&v, &n)| (s + v, c + n));
        if c == 0 {
            1.0
        } else {
            s / c as f64
        }
    }

    /// Highest product score, lowest index on ties.
    fn choose(&self, x: &[f64], tol: f64) -> Option<usize> {
        let avg = [self.average(0), self.average(1)];
        let mut best = None;
        let mut best_score = f64::NEG_INFINITY;
        for (j, &v) in x.iter().enumerate() {
            if (v - v.round()).abs() <= tol {
                continue;
            }
            let down = self.estimate(0, j, avg[0]) * v;
            let up = self.estimate(1, j, avg[1]) * (1.0 - v);
            let score = down.max(1e-6) * up.max(1e-6);
            if score > best_score * (1.0 + 1e-12) {
                best_score = score;
                best = Some(j);
            }
        }
        best
    }
}

/// Index of the variable farthest from integrality, lowest index on ties.
fn most_fractional(x: &[f64], tol: f64) -> Option<usize> {
    let mut best = None;
    let mut best_frac = tol;
    for (j, &v) in x.iter().enumerate() {
        let frac = (v - v.round()).abs();
        if frac > best_frac + 1e-12 {
            best_frac = frac;
            best = Some(j);
        }
    }
    best
}
