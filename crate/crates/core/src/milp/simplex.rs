//! Dense bounded-variable simplex on a condensed tableau.
//!
//! Every row `a·z (≤|≥|=) b` is given a row variable `y = a·z` bounded by the
//! sense, so the system is homogeneous: each basic variable is a linear
//! combination of the nonbasic ones, `x_B = T x_N`. Only `T` (rows × number
//! of structural variables) is stored. The primal method minimizes the sum
//! of bound violations first and then maximizes the objective; the dual
//! method restores primal feasibility after bounds change on an optimal
//! basis, which is how branch-and-bound children are warm started. Dantzig
//! pricing is used until a streak of degenerate pivots, after which Bland's
//! rule takes over.

use crate::error::{Error, Result};

use super::Sense;

const PIVOT_TOL: f64 = 1e-9;
const COST_TOL: f64 = 1e-9;
const DEGENERATE_STEP: f64 = 1e-12;
const BLAND_AFTER: usize = 50;
const REFRESH_EVERY: usize = 32;

pub(crate) struct Row<'a> {
    pub coeffs: &'a [(usize, f64)],
    pub sense: Sense,
    pub rhs: f64,
}

pub(crate) struct LpProblem<'a> {
    pub objective: Vec<f64>,
    pub rows: Vec<Row<'a>>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

#[derive(Debug)]
pub(crate) enum LpOutcome {
    Optimal { values: Vec<f64>, objective: f64 },
    Infeasible,
    Unbounded,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Status {
    Optimal,
    Infeasible,
    Unbounded,
}

/// A basis with its condensed tableau. Variables `0..nv` are structural,
/// `nv..nv+m` are row variables.
#[derive(Clone)]
pub(crate) struct Simplex {
    m: usize,
    nv: usize,
    /// `T`, row-major `m × nv`; column c belongs to `nonbasic[c]`.
    t: Vec<f64>,
    basic: Vec<usize>,
    nonbasic: Vec<usize>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    value: Vec<f64>,
    cost: Vec<f64>,
    tol: f64,
    iterations: usize,
    limit: usize,
    d: Vec<f64>,
}

enum Step {
    Done,
    Unbounded,
    Moved,
}

impl Simplex {
    pub fn new(problem: &LpProblem<'_>, feas_tol: f64) -> Result<Self> {
        let nv = problem.objective.len();
        let m = problem.rows.len();
        let mut t = vec![0.0; m * nv];
        let mut lower = problem.lower.clone();
        let mut upper = problem.upper.clone();
        for (r, row) in problem.rows.iter().enumerate() {
            for &(j, a) in row.coeffs {
                t[r * nv + j] += a;
            }
            let (lo, hi) = match row.sense {
                Sense::Le => (f64::NEG_INFINITY, row.rhs),
                Sense::Ge => (row.rhs, f64::INFINITY),
                Sense::Eq => (row.rhs, row.rhs),
            };
            lower.push(lo);
            upper.push(hi);
        }
        let mut value = vec![0.0; nv + m];
        for j in 0..nv {
            let (lo, hi) = (lower[j], upper[j]);
            value[j] = if lo.is_finite() {
                lo
            } else if hi.is_finite() {
                hi
            } else {
                0.0
            };
        }
        let mut cost = problem.objective.clone();
        cost.resize(nv + m, 0.0);
        let mut s = Simplex {
            m,
            nv,
            t,
            basic: (nv..nv + m).collect(),
            nonbasic: (0..nv).collect(),
            lower,
            upper,
            value,
            cost,
            tol: feas_tol,
            iterations: 0,
            limit: 50_000 + 50 * (m + nv),
            d: vec![0.0; nv],
        };
        s.refresh_basic_values();
        Ok(s)
    }

    /// Structural values clamped to their bounds.
    pub fn values(&self) -> Vec<f64> {
        (0..self.nv)
            .map(|j| self.value[j].clamp(self.lower[j], self.upper[j]))
            .collect()
    }

    pub fn objective(&self) -> f64 {
        self.values()
            .iter()
            .zip(&self.cost)
            .map(|(v, c)| v * c)
            .sum()
    }

    pub fn outcome(&self, status: Status) -> LpOutcome {
        match status {
            Status::Optimal => LpOutcome::Optimal {
                values: self.values(),
                objective: self.objective(),
            },
            Status::Infeasible => LpOutcome::Infeasible,
            Status::Unbounded => LpOutcome::Unbounded,
        }
    }

    /// Changes the bounds of structural variable `j`. A nonbasic variable
    /// moves onto its new bound and the basic values follow.
    pub fn set_bounds(&mut self, j: usize, lo: f64, hi: f64) {
        self.lower[j] = lo;
        self.upper[j] = hi;
        if let Some(c) = self.nonbasic.iter().position(|&v| v == j) {
            let old = self.value[j];
            let new = if old < lo || !old.is_finite() {
                lo
            } else if old > hi {
                hi
            } else {
                old
            };
            let delta = new - old;
            if delta != 0.0 {
                self.value[j] = new;
                for r in 0..self.m {
                    let a = self.t[r * self.nv + c];
                    if a != 0.0 {
                        self.value[self.basic[r]] += a * delta;
                    }
                }
            }
        }
    }

    fn refresh_basic_values(&mut self) {
        for r in 0..self.m {
            let row = &self.t[r * self.nv..(r + 1) * self.nv];
            let v: f64 = row
                .iter()
                .zip(&self.nonbasic)
                .map(|(&a, &j)| a * self.value[j])
                .sum();
            self.value[self.basic[r]] = v;
        }
    }

    fn slack_tol(&self, bound: f64) -> f64 {
        self.tol * (1.0 + bound.abs())
    }

    fn below(&self, v: usize) -> bool {
        self.value[v] < self.lower[v] - self.slack_tol(self.lower[v])
    }

    fn above(&self, v: usize) -> bool {
        self.value[v] > self.upper[v] + self.slack_tol(self.upper[v])
    }

    /// Reduced costs of the nonbasic columns for basic costs `cb` and
    /// nonbasic costs taken from `self.cost` when `phase_two`.
    fn price(&mut self, phase_two: bool) -> bool {
        let mut infeasible = false;
        self.d.iter_mut().for_each(|d| *d = 0.0);
        if phase_two {
            for (c, &j) in self.nonbasic.iter().enumerate() {
                self.d[c] = self.cost[j];
            }
        }
        for r in 0..self.m {
            let b = self.basic[r];
            let cb = if phase_two {
                self.cost[b]
            } else if self.below(b) {
                infeasible = true;
                1.0
            } else if self.above(b) {
                infeasible = true;
                -1.0
            } else {
                0.0
            };
            if cb != 0.0 {
                let row = &self.t[r * self.nv..(r + 1) * self.nv];
                for (d, &a) in self.d.iter_mut().zip(row) {
                    *d += cb * a;
                }
            }
        }
        infeasible
    }

    fn choose_entering(&self, bland: bool) -> Option<(usize, f64)> {
        let mut best: Option<(usize, f64)> = None;
        let mut best_score = 0.0;
        for (c, &j) in self.nonbasic.iter().enumerate() {
            if self.lower[j] == self.upper[j] {
                continue;
            }
            let d = self.d[c];
            let dir = if d > COST_TOL && self.value[j] < self.upper[j] {
                1.0
            } else if d < -COST_TOL && self.value[j] > self.lower[j] {
                -1.0
            } else {
                continue;
            };
            if bland {
                if best.is_none_or(|(b, _)| j < self.nonbasic[b]) {
                    best = Some((c, dir));
                }
            } else if d.abs() > best_score {
                best_score = d.abs();
                best = Some((c, dir));
            }
        }
        best
    }

    /// One primal iteration; in phase one, infeasible basic variables may
    /// move toward their violated bound and stop there.
    fn primal_step(&mut self, bland: bool, degenerate: &mut usize) -> Step {
        let Some((c, dir)) = self.choose_entering(bland) else {
            return Step::Done;
        };
        let enter = self.nonbasic[c];
        let mut theta = self.upper[enter] - self.lower[enter];
        let mut leave: Option<(usize, f64)> = None;
        let mut leave_pivot = 0.0;
        for r in 0..self.m {
            let a = self.t[r * self.nv + c];
            if a.abs() <= PIVOT_TOL {
                continue;
            }
            let b = self.basic[r];
            let rate = dir * a;
            let x = self.value[b];
            let (limit, bound) = if rate > 0.0 {
                if self.below(b) {
                    ((self.lower[b] - x) / rate, self.lower[b])
                } else if self.above(b) || self.upper[b] == f64::INFINITY {
                    continue;
                } else {
                    (((self.upper[b] - x) / rate).max(0.0), self.upper[b])
                }
            } else if self.above(b) {
                ((self.upper[b] - x) / rate, self.upper[b])
            } else if self.below(b) || self.lower[b] == f64::NEG_INFINITY {
                continue;
            } else {
                (((self.lower[b] - x) / rate).max(0.0), self.lower[b])
            };
            let better = match leave {
                None => limit < theta || (limit == theta && theta.is_finite()),
                Some((cur, _)) => {
                    if limit < theta - DEGENERATE_STEP {
                        true
                    } else if limit <= theta + DEGENERATE_STEP {
                        if bland {
                            b < self.basic[cur]
                        } else {
                            a.abs() > leave_pivot
                        }
                    } else {
                        false
                    }
                }
            };
            if better {
                theta = theta.min(limit);
                leave = Some((r, bound));
                leave_pivot = a.abs();
            }
        }
        if theta == f64::INFINITY {
            return Step::Unbounded;
        }
        if theta < DEGENERATE_STEP {
            *degenerate += 1;
        } else {
            *degenerate = 0;
        }
        self.move_nonbasic(c, dir * theta);
        self.iterations += 1;
        match leave {
            None => {
                self.value[enter] = if dir > 0.0 {
                    self.upper[enter]
                } else {
                    self.lower[enter]
                };
            }
            Some((r, bound)) => {
                self.value[self.basic[r]] = bound;
                self.pivot(r, c);
            }
        }
        Step::Moved
    }

    fn move_nonbasic(&mut self, c: usize, delta: f64) {
        if delta == 0.0 {
            return;
        }
        for r in 0..self.m {
            let a = self.t[r * self.nv + c];
            if a != 0.0 {
                self.value[self.basic[r]] += a * delta;
            }
        }
        self.value[self.nonbasic[c]] += delta;
    }

    /// Exchanges basic row `r` with nonbasic column `c`.
    fn pivot(&mut self, r: usize, c: usize) {
        let nv = self.nv;
        let p = self.t[r * nv + c];
        {
            let row = &mut self.t[r * nv..(r + 1) * nv];
            for v in row.iter_mut() {
                *v = -*v / p;
            }
            row[c] = 1.0 / p;
        }
        let pivot_row: Vec<f64> = self.t[r * nv..(r + 1) * nv].to_vec();
        for i in 0..self.m {
            if i == r {
                continue;
            }
            let f = self.t[i * nv + c];
            if f != 0.0 {
                let row = &mut self.t[i * nv..(i + 1) * nv];
                for (v, &pr) in row.iter_mut().zip(&pivot_row) {
                    *v += f * pr;
                }
                row[c] = f * pivot_row[c];
            }
        }
        std::mem::swap(&mut self.basic[r], &mut self.nonbasic[c]);
        if self.iterations.is_multiple_of(REFRESH_EVERY) {
            self.refresh_basic_values();
        }
    }

    fn check_limit(&self) -> Result<()> {
        if self.iterations > self.limit {
            return Err(Error::Numerical(format!(
                "simplex exceeded {} iterations",
                self.limit
            )));
        }
        Ok(())
    }

    /// Primal simplex from the current basis: feasibility first, then
    /// optimality.
    pub fn primal(&mut self) -> Result<Status> {
        let mut degenerate = 0usize;
        loop {
            self.check_limit()?;
            let infeasible = self.price(false);
            if !infeasible {
                self.price(true);
            }
            match self.primal_step(degenerate >= BLAND_AFTER, &mut degenerate) {
                Step::Moved => {}
                Step::Done if infeasible => {
                    self.refresh_basic_values();
                    if self.price(false) {
                        return Ok(Status::Infeasible);
                    }
                }
                Step::Done => {
                    self.refresh_basic_values();
                    if self.price(false) {
                        continue;
                    }
                    return Ok(Status::Optimal);
                }
                Step::Unbounded if infeasible => {
                    return Err(Error::Numerical("phase one reported unbounded".into()));
                }
                Step::Unbounded => return Ok(Status::Unbounded),
            }
        }
    }

    /// Dual simplex from a dual feasible basis, followed by a primal pass
    /// that cleans up any residual dual infeasibility.
    pub fn dual(&mut self) -> Result<Status> {
        let mut degenerate = 0usize;
        loop {
            self.check_limit()?;
            let bland = degenerate >= BLAND_AFTER;
            let mut leave: Option<(usize, f64)> = None;
            let mut worst = 0.0;
            for r in 0..self.m {
                let b = self.basic[r];
                let (viol, target) = if self.below(b) {
                    (self.lower[b] - self.value[b], self.lower[b])
                } else if self.above(b) {
                    (self.value[b] - self.upper[b], self.upper[b])
                } else {
                    continue;
                };
                if bland {
                    if leave.is_none_or(|(cur, _)| b < self.basic[cur]) {
                        leave = Some((r, target));
                    }
                } else if viol > worst {
                    worst = viol;
                    leave = Some((r, target));
                }
            }
            let Some((r, target)) = leave else {
                return self.primal();
            };
            self.price(true);
            let need = target - self.value[self.basic[r]];
            let mut enter: Option<(usize, f64)> = None;
            let mut best_ratio = f64::INFINITY;
            let mut best_pivot = 0.0;
            for (c, &j) in self.nonbasic.iter().enumerate() {
                let a = self.t[r * self.nv + c];
                if a.abs() <= PIVOT_TOL || self.lower[j] == self.upper[j] {
                    continue;
                }
                // Direction of x_j that moves the leaving variable toward
                // its target.
                let dir = if need * a > 0.0 { 1.0 } else { -1.0 };
                if (dir > 0.0 && self.value[j] >= self.upper[j])
                    || (dir < 0.0 && self.value[j] <= self.lower[j])
                {
                    continue;
                }
                let ratio = (-dir * self.d[c]).max(0.0) / a.abs();
                let better = if ratio < best_ratio - DEGENERATE_STEP {
                    true
                } else if ratio <= best_ratio + DEGENERATE_STEP {
                    match enter {
                        None => true,
                        Some((cur, _)) if bland => j < self.nonbasic[cur],
                        Some(_) => a.abs() > best_pivot,
                    }
                } else {
                    false
                };
                if better {
                    best_ratio = best_ratio.min(ratio);
                    best_pivot = a.abs();
                    enter = Some((c, dir));
                }
            }
            let Some((c, _)) = enter else {
                return Ok(Status::Infeasible);
            };
            if best_ratio < DEGENERATE_STEP {
                degenerate += 1;
            } else {
                degenerate = 0;
            }
            let delta = need / self.t[r * self.nv + c];
            self.move_nonbasic(c, delta);
            self.value[self.basic[r]] = target;
            self.iterations += 1;
            self.pivot(r, c);
        }
    }
}

pub(crate) fn solve(problem: &LpProblem<'_>, feas_tol: f64) -> Result<LpOutcome> {
    if (0..problem.objective.len()).any(|j| problem.lower[j] > problem.upper[j]) {
        return Ok(LpOutcome::Infeasible);
    }
    let mut s = Simplex::new(problem, feas_tol)?;
    let status = s.primal()?;
    Ok(s.outcome(status))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn optimum(out: LpOutcome) -> (Vec<f64>, f64) {
        match out {
            LpOutcome::Optimal { values, objective } => (values, objective),
            other => panic!("expected optimum, got {other:?}"),
        }
    }

    #[test]
    fn textbook_maximization() {
        // max 3a + 5b, a ≤ 4, 2b ≤ 12, 3a + 2b ≤ 18 → (2, 6), 36
        let r1 = [(0, 1.0)];
        let r2 = [(1, 2.0)];
        let r3 = [(0, 3.0), (1, 2.0)];
        let p = LpProblem {
            objective: vec![3.0, 5.0],
            rows: vec![
                Row { coeffs: &r1, sense: Sense::Le, rhs: 4.0 },
                Row { coeffs: &r2, sense: Sense::Le, rhs: 12.0 },
                Row { coeffs: &r3, sense: Sense::Le, rhs: 18.0 },
            ],
            lower: vec![0.0, 0.0],
            upper: vec![f64::INFINITY, f64::INFINITY],
        };
        let (x, obj) = optimum(solve(&p, 1e-9).unwrap());
        assert!((obj - 36.0).abs() < 1e-9);
        assert!((x[0] - 2.0).abs() < 1e-9 && (x[1] - 6.0).abs() < 1e-9);
    }

    #[test]
    fn needs_phase_one() {
        // max -a - b, a + b ≥ 2, a - b = 0, a,b ∈ [0, 5] → (1, 1)
        let r1 = [(0, 1.0), (1, 1.0)];
        let r2 = [(0, 1.0), (1, -1.0)];
        let p = LpProblem {
            objective: vec![-1.0, -1.0],
            rows: vec![
                Row { coeffs: &r1, sense: Sense::Ge, rhs: 2.0 },
                Row { coeffs: &r2, sense: Sense::Eq, rhs: 0.0 },
            ],
            lower: vec![0.0, 0.0],
            upper: vec![5.0, 5.0],
        };
        let (x, obj) = optimum(solve(&p, 1e-9).unwrap());
        assert!((obj + 2.0).abs() < 1e-9);
        assert!((x[0] - 1.0).abs() < 1e-9 && (x[1] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn detects_infeasible_and_unbounded() {
        let r1 = [(0, 1.0)];
        let p = LpProblem {
            objective: vec![1.0],
            rows: vec![Row { coeffs: &r1, sense: Sense::Ge, rhs: 3.0 }],
            lower: vec![0.0],
            upper: vec![1.0],
        };
        assert!(matches!(solve(&p, 1e-9).unwrap(), LpOutcome::Infeasible));

        let p = LpProblem {
            objective: vec![1.0],
            rows: vec![Row { coeffs: &r1, sense: Sense::Ge, rhs: 0.0 }],
            lower: vec![0.0],
            upper: vec![f64::INFINITY],
        };
        assert!(matches!(solve(&p, 1e-9).unwrap(), LpOutcome::Unbounded));
    }

    #[test]
    fn bound_flip_only() {
        // max a + b with a, b ∈ [0, 1] and no rows.
        let p = LpProblem {
            objective: vec![1.0, 1.0],
            rows: vec![],
            lower: vec![0.0, 0.0],
            upper: vec![1.0, 1.0],
        };
        let (x, obj) = optimum(solve(&p, 1e-9).unwrap());
        assert_eq!(x, vec![1.0, 1.0]);
        assert_eq!(obj, 2.0);
    }

    #[test]
    fn free_variable() {
        // max -a with a free, a ≥ -3 as a row → a = -3 gives 3.
        let r1 = [(0, 1.0)];
        let p = LpProblem {
            objective: vec![-1.0],
            rows: vec![Row { coeffs: &r1, sense: Sense::Ge, rhs: -3.0 }],
            lower: vec![f64::NEG_INFINITY],
            upper: vec![f64::INFINITY],
        };
        let (x, obj) = optimum(solve(&p, 1e-9).unwrap());
        assert!((x[0] + 3.0).abs() < 1e-9 && (obj - 3.0).abs() < 1e-9);
    }

    #[test]
    fn dual_warm_start_matches_cold_solve() {
        // max a + b + 2c, a + b + c ≤ 2, a + c ≤ 1.5, all in [0, 1].
        let r1 = [(0, 1.0), (1, 1.0), (2, 1.0)];
        let r2 = [(0, 1.0), (2, 1.0)];
        let p = LpProblem {
            objective: vec![1.0, 1.0, 2.0],
            rows: vec![
                Row { coeffs: &r1, sense: Sense::Le, rhs: 2.0 },
                Row { coeffs: &r2, sense: Sense::Le, rhs: 1.5 },
            ],
            lower: vec![0.0; 3],
            upper: vec![1.0; 3],
        };
        let mut s = Simplex::new(&p, 1e-9).unwrap();
        assert_eq!(s.primal().unwrap(), Status::Optimal);
        assert!((s.objective() - 3.0).abs() < 1e-9);
        for (j, v) in [(2, 0.0), (2, 1.0), (1, 0.0)] {
            let mut warm = s.clone();
            warm.set_bounds(j, v, v);
            let status = warm.dual().unwrap();
            let mut lower = vec![0.0; 3];
            let mut upper = vec![1.0; 3];
            lower[j] = v;
            upper[j] = v;
            let cold = solve(&LpProblem { lower, upper, ..LpProblem { objective: p.objective.clone(), rows: vec![
                Row { coeffs: &r1, sense: Sense::Le, rhs: 2.0 },
                Row { coeffs: &r2, sense: Sense::Le, rhs: 1.5 },
            ], lower: vec![], upper: vec![] } }, 1e-9).unwrap();
            let (_, obj) = optimum(cold);
            assert_eq!(status, Status::Optimal);
            assert!((warm.objective() - obj).abs() < 1e-9, "fix x{j} = {v}");
        }
    }
}
