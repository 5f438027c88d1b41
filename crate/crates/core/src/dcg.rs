//! Delayed constraint generation.
//!
//! Each iteration solves the binary master from scratch, evaluates the oracle
//! at the master's k-set, and adds one k-submodular inequality generated at
//! that k-set whenever the master overestimates it. The master optimum is an
//! upper bound, the best evaluated k-set a lower bound.

use std::time::{Duration, Instant};

use log::{debug, info, warn};
use serde::{Deserialize, Serialize};

use crate::cuts::{Cut, CutBuilder, XiValues};
use crate::error::{Error, Result};
use crate::kset::{GroundSet, KSet};
use crate::milp::{bb_solve_from, BbConfig, Branching, BbStatus, LinearConstraint, MasterProblem};
use crate::oracle::{xi_bound, xi_exact_all, CountingOracle, ValueOracle, XI_PARTITION_CAP};

/// Constraints on the feasible k-sets beyond disjointness.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FeasibleRegion {
    /// `|S_q| ≤ B_q` for every q.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub per_type: Option<Vec<usize>>,
    /// `Σ_q |S_q| ≤ total`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub total: Option<usize>,
    /// Arbitrary linear rows over characteristic-vector positions.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub extra: Vec<LinearConstraint>,
}

impl FeasibleRegion {
    pub fn unconstrained() -> Self {
        FeasibleRegion::default()
    }

    pub fn per_type(bounds: Vec<usize>) -> Self {
        FeasibleRegion {
            per_type: Some(bounds),
            ..FeasibleRegion::default()
        }
    }

    pub fn with_total(mut self, total: usize) -> Self {
        self.total = Some(total);
        self
    }

    pub fn with_extra(mut self, c: LinearConstraint) -> Self {
        self.extra.push(c);
        self
    }

    pub fn validate(&self, ground: GroundSet) -> Result<()> {
        if let Some(b) = &self.per_type {
            if b.len() != ground.k() {
                return Err(Error::InvalidRegion(format!(
                    "{} per-type bounds given for k = {}",
                    b.len(),
                    ground.k()
                )));
            }
            if let Some(&bad) = b.iter().find(|&&b| b > ground.n()) {
                return Err(Error::InvalidRegion(format!(
                    "per-type bound {bad} exceeds n = {}",
                    ground.n()
                )));
            }
        }
        if let Some(t) = self.total {
            if t > ground.n() {
                return Err(Error::InvalidRegion(format!(
                    "total bound {t} exceeds n = {}",
                    ground.n()
                )));
            }
        }
        if let Some(c) = self.extra.iter().find(|c| c.max_var() >= ground.dim()) {
            return Err(Error::InvalidRegion(format!(
                "extra constraint uses variable {} but k * n = {}",
                c.max_var(),
                ground.dim()
            )));
        }
        Ok(())
    }

    /// Membership test for a k-set.
    pub fn contains(&self, s: &KSet) -> bool {
        let sizes = s.sizes();
        if let Some(b) = &self.per_type {
            if sizes.iter().zip(b).any(|(s, b)| s > b) {
                return false;
            }
        }
        if let Some(t) = self.total {
            if sizes.iter().sum::<usize>() > t {
                return false;
            }
        }
        self.extra.iter().all(|c| c.is_satisfied_by(s, 1e-9))
    }
}

/// The rows of 𝒦: disjointness for every element, then per-type and total
/// cardinality rows, then the extras verbatim.
pub fn compile_region(feas: &FeasibleRegion, ground: GroundSet) -> Result<Vec<LinearConstraint>> {
    feas.validate(ground)?;
    let (n, k) = (ground.n(), ground.k());
    let mut rows = Vec::with_capacity(n + k + 1 + feas.extra.len());
    for i in 0..n {
        rows.push(LinearConstraint::le(
            (0..k).map(|q| (ground.var_index(q, i), 1.0)),
            1.0,
        )?);
    }
    if let Some(b) = &feas.per_type {
        for (q, &bound) in b.iter().enumerate() {
            rows.push(LinearConstraint::le(
                (0..n).map(|i| (ground.var_index(q, i), 1.0)),
                bound as f64,
            )?);
        }
    }
    if let Some(t) = feas.total {
        rows.push(LinearConstraint::le((0..ground.dim()).map(|j| (j, 1.0)), t as f64)?);
    }
    rows.extend(feas.extra.iter().cloned());
    Ok(rows)
}

/// How the removal coefficients ξ of general cuts are obtained.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum XiPolicy {
    /// Exact ξ for cheap oracles within the enumeration cap, ζ otherwise.
    #[default]
    Auto,
    Exact,
    Zeta,
}

/// The inequality family a run ended up using.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CutFamily {
    Monotone,
    GeneralExactXi,
    GeneralZeta,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    pub feasibility: f64,
    pub integrality: f64,
    pub cut_violation: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            feasibility: 1e-9,
            integrality: 1e-6,
            cut_violation: 1e-7,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveConfig {
    /// Relative optimality gap `(UB − LB) / UB` at which to stop.
    pub epsilon: f64,
    pub time_limit_s: f64,
    pub xi_policy: XiPolicy,
    /// Cap on partitions enumerated per ξ when computing exact ξ.
    pub xi_cap: u128,
    /// Extra k-sets whose cuts seed the pool besides the empty k-set.
    #[serde(default)]
    pub seed_cuts: Vec<KSet>,
    pub tolerances: Tolerances,
    pub max_nodes_per_master: u64,
    #[serde(default)]
    pub max_iterations: Option<u64>,
    #[serde(default)]
    pub branching: Branching,
}

impl Default for SolveConfig {
    fn default() -> Self {
        SolveConfig {
            epsilon: 1e-6,
            time_limit_s: 3600.0,
            xi_policy: XiPolicy::Auto,
            xi_cap: XI_PARTITION_CAP,
            seed_cuts: Vec::new(),
            tolerances: Tolerances::default(),
            max_nodes_per_master: 1_000_000,
            max_iterations: None,
            branching: Branching::default(),
        }
    }
}

impl SolveConfig {
    pub fn with_epsilon(mut self, epsilon: f64) -> Self {
        self.epsilon = epsilon;
        self
    }

    pub fn with_time_limit(mut self, seconds: f64) -> Self {
        self.time_limit_s = seconds;
        self
    }

    pub fn with_xi_policy(mut self, policy: XiPolicy) -> Self {
        self.xi_policy = policy;
        self
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Optimal,
    /// Stopped with the gap above ε: no further progress was possible
    /// (node limit, iteration limit or a numerically repeated master point).
    GapLimit,
    TimeLimit,
    Infeasible,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPoint {
    pub iteration: u64,
    pub lb: f64,
    pub ub: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SolveReport {
    pub status: SolveStatus,
    pub incumbent: Option<KSet>,
    /// The incumbent in `({..},{..})` notation.
    pub incumbent_text: Option<String>,
    pub lb: f64,
    pub ub: f64,
    pub gap: f64,
    pub cuts_added: u64,
    pub total_bb_nodes: u64,
    pub wall_time_s: f64,
    pub iterations: u64,
    pub evaluations: u64,
    pub cut_family: CutFamily,
    pub n: usize,
    pub k: usize,
    pub per_type_bounds: Option<Vec<usize>>,
    pub trajectory: Vec<TrajectoryPoint>,
    pub config: SolveConfig,
}

impl SolveReport {
    /// Table row `n,t,B,time_s,cuts,nodes,end_gap`; B is `;`-separated.
    pub fn table_row(&self, t: Option<usize>) -> String {
        format!(
            "{},{},{},{:.3},{},{},{}",
            self.n,
            t.map_or(String::new(), |t| t.to_string()),
            format_bounds(self.per_type_bounds.as_deref()),
            self.wall_time_s,
            self.cuts_added,
            self.total_bb_nodes,
            format_gap(self.gap),
        )
    }
}

pub const TABLE_HEADER: &str = "n,t,B,time_s,cuts,nodes,end_gap";

pub fn format_bounds(b: Option<&[usize]>) -> String {
    b.map_or(String::new(), |b| {
        b.iter().map(usize::to_string).collect::<Vec<_>>().join(";")
    })
}

pub fn format_gap(gap: f64) -> String {
    if gap.is_finite() {
        format!("{gap:.3e}")
    } else {
        "inf".into()
    }
}

/// Gap denominator: `UB` when positive, else `max(1, |UB|)`.
fn gap_scale(ub: f64) -> f64 {
    if ub > 0.0 {
        ub
    } else {
        ub.abs().max(1.0)
    }
}

/// `(UB − LB) / UB`, falling back to an absolute gap when `UB ≤ 0`.
pub fn optimality_gap(ub: f64, lb: f64) -> f64 {
    if !ub.is_finite() || !lb.is_finite() {
        return f64::INFINITY;
    }
    ((ub - lb) / gap_scale(ub)).max(0.0)
}

/// Maximizes `oracle` over the k-sets in `feas`.
pub fn solve<O: ValueOracle + ?Sized>(
    oracle: &O,
    feas: &FeasibleRegion,
    config: &SolveConfig,
) -> Result<SolveReport> {
    let start = Instant::now();
    if config.epsilon.is_nan() || config.epsilon <= 0.0 || config.time_limit_s.is_nan() || config.time_limit_s <= 0.0 {
        return Err(Error::InvalidRegion(
            "epsilon and time limit must be positive".into(),
        ));
    }
    let deadline = start + Duration::from_secs_f64(config.time_limit_s.min(1e9));
    let counting = CountingOracle::new(oracle);
    let ground = counting.ground();
    let side = compile_region(feas, ground)?;

    let (family, xi) = choose_cut_family(&counting, config)?;
    info!(
        "dcg: n = {}, k = {}, oracle = {}, cuts = {:?}, epsilon = {:e}, time limit = {} s, tolerances = {:?}",
        ground.n(),
        ground.k(),
        counting.kind(),
        family,
        config.epsilon,
        config.time_limit_s,
        config.tolerances
    );
    let builder = CutBuilder::new(&counting);
    let make_cut = |s: &KSet| -> Result<Cut> {
        match &xi {
            None => builder.monotone(s),
            Some(xi) => builder.general(s, xi),
        }
    };

    let mut master = MasterProblem::new(ground, side, counting.lower_bound())?;
    let mut cuts_added = 0u64;
    let empty = KSet::empty(ground);
    master.add_cut(make_cut(&empty)?)?;
    for s in &config.seed_cuts {
        if !master.has_cut_from(s) {
            master.add_cut(make_cut(s)?)?;
        }
    }

    let mut lb = f64::NEG_INFINITY;
    let mut ub = f64::INFINITY;
    let mut incumbent: Option<KSet> = None;
    // The empty k-set's value is already known from the seed cut.
    if feas.contains(&empty) {
        lb = counting.value(&empty);
        incumbent = Some(empty.clone());
    }

    let bb_config = BbConfig {
        feasibility_tol: config.tolerances.feasibility,
        integrality_tol: config.tolerances.integrality,
        max_nodes: config.max_nodes_per_master,
        deadline: Some(deadline),
        branching: config.branching,
    };

    let mut iterations = 0u64;
    let mut nodes = 0u64;
    let mut trajectory = Vec::new();
    let status = loop {
        if Instant::now() >= deadline {
            break SolveStatus::TimeLimit;
        }
        if config.max_iterations.is_some_and(|m| iterations >= m) {
            break SolveStatus::GapLimit;
        }
        iterations += 1;

        let bb = bb_solve_from(&master, &bb_config, incumbent.as_ref())?;
        nodes += bb.nodes;
        match bb.status {
            BbStatus::Optimal => {}
            BbStatus::Infeasible => {
                if incumbent.is_none() {
                    break SolveStatus::Infeasible;
                }
                return Err(Error::Numerical(
                    "master became infeasible after a feasible iterate".into(),
                ));
            }
            BbStatus::TimeLimit | BbStatus::NodeLimit => {
                ub = ub.min(bb.bound).max(lb);
                trajectory.push(TrajectoryPoint { iteration: iterations, lb, ub });
                break if bb.status == BbStatus::TimeLimit {
                    SolveStatus::TimeLimit
                } else {
                    SolveStatus::GapLimit
                };
            }
        }

        let eta = bb.eta;
        let x_bar = bb
            .kset()
            .ok_or_else(|| Error::Numerical("master returned no k-set".into()))?;
        if eta > ub + 1e-9 * gap_scale(ub.abs()) {
            warn!("dcg: master bound rose from {ub} to {eta}");
        }
        ub = ub.min(eta);

        let fx = counting.value(&x_bar);
        if fx > lb {
            lb = fx;
            incumbent = Some(x_bar.clone());
        }
        // η̄ can sit a rounding error below f(x̄).
        ub = ub.max(lb);
        trajectory.push(TrajectoryPoint { iteration: iterations, lb, ub });
        debug!("dcg: iter {iterations}: eta = {eta}, f = {fx}, lb = {lb}, ub = {ub}, x = {x_bar}");

        if optimality_gap(ub, lb) <= config.epsilon {
            break SolveStatus::Optimal;
        }

        let threshold = config
            .tolerances
            .cut_violation
            .min(config.epsilon * gap_scale(ub));
        if eta <= fx + threshold {
            warn!("dcg: master overestimate {} below threshold with gap open", eta - fx);
            break SolveStatus::GapLimit;
        }
        if master.has_cut_from(&x_bar) {
            warn!("dcg: master repeated {x_bar} despite its cut; stopping");
            break SolveStatus::GapLimit;
        }
        let cut = make_cut(&x_bar)?;
        debug_assert!((cut.rhs_at(&x_bar) - fx).abs() <= 1e-9 * fx.abs().max(1.0));
        master.add_cut(cut)?;
        cuts_added += 1;
    };

    let wall = start.elapsed().as_secs_f64();
    let gap = optimality_gap(ub, lb);
    info!(
        "dcg: {:?} after {iterations} iterations, {cuts_added} cuts, {nodes} nodes, lb = {lb}, ub = {ub}, gap = {gap:e}, {wall:.3} s",
        status
    );
    Ok(SolveReport {
        status,
        incumbent_text: incumbent.as_ref().map(KSet::to_string),
        incumbent,
        lb,
        ub,
        gap,
        cuts_added,
        total_bb_nodes: nodes,
        wall_time_s: wall,
        iterations,
        evaluations: counting.evaluations(),
        cut_family: family,
        n: ground.n(),
        k: ground.k(),
        per_type_bounds: feas.per_type.clone(),
        trajectory,
        config: config.clone(),
    })
}

fn choose_cut_family<O: ValueOracle + ?Sized>(
    oracle: &O,
    config: &SolveConfig,
) -> Result<(CutFamily, Option<XiValues>)> {
    if oracle.is_monotone() {
        return Ok((CutFamily::Monotone, None));
    }
    let exact = || -> Result<(CutFamily, Option<XiValues>)> {
        let table = xi_exact_all(oracle, config.xi_cap)?;
        Ok((CutFamily::GeneralExactXi, Some(XiValues::PerElement(table))))
    };
    let zeta = || -> Result<(CutFamily, Option<XiValues>)> {
        Ok((CutFamily::GeneralZeta, Some(XiValues::Uniform(xi_bound(oracle)?))))
    };
    match config.xi_policy {
        XiPolicy::Exact => exact(),
        XiPolicy::Zeta => zeta(),
        XiPolicy::Auto => match exact() {
            Ok(found) if oracle.is_cheap() => Ok(found),
            _ => zeta(),
        },
    }
}
