//! Dense bounded-variable primal simplex.
//!
//! Every constraint row gets a slack (`a'x + s = rhs`) whose bounds encode
//! the relation, so row duals are exactly `d(objective)/d(rhs)`. Phase 1
//! adds an artificial only on rows whose initial slack value violates the
//! slack bounds and minimizes total artificial magnitude.

use super::{
    BoundStatus, LinearProblem, LpError, LpSolution, LpStatus, Relation, Tolerances,
};

const MAX_ITERATIONS: usize = 200_000;
const REFACTOR_EVERY: usize = 64;
const PIVOT_TOL: f64 = 1e-9;
const STALL_LIMIT: usize = 500;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Status {
    Basic,
    AtLower,
    AtUpper,
    FreeAtZero,
}

struct Tableau {
    m: usize,
    /// Sparse columns of [A | I | artificials].
    cols: Vec<Vec<(usize, f64)>>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    rhs: Vec<f64>,
    x: Vec<f64>,
    status: Vec<Status>,
    /// Column occupying each basis row.
    basis: Vec<usize>,
    /// Dense row-major inverse of the basis matrix.
    binv: Vec<f64>,
    pivots_since_refactor: usize,
    iterations: usize,
}

enum LoopResult {
    Optimal,
    Unbounded,
}

impl Tableau {
    fn ncols(&self) -> usize {
        self.cols.len()
    }

    fn refactor(&mut self) -> Result<(), LpError> {
        let m = self.m;
        // Gauss-Jordan on [B | I] with partial pivoting.
        let mut b = vec![0.0; m * m];
        for (row_pos, &col) in self.basis.iter().enumerate() {
            for &(r, v) in &self.cols[col] {
                b[r * m + row_pos] = v;
            }
        }
        let mut inv = vec![0.0; m * m];
        for i in 0..m {
            inv[i * m + i] = 1.0;
        }
        for k in 0..m {
            let mut piv_row = k;
            let mut piv_val = b[k * m + k].abs();
            for r in k + 1..m {
                let v = b[r * m + k].abs();
                if v > piv_val {
                    piv_val = v;
                    piv_row = r;
                }
            }
            if piv_val < 1e-12 {
                return Err(LpError::Numerical {
                    iterations: self.iterations,
                    detail: format!("singular basis during refactorization at column {k}"),
                });
            }
            if piv_row != k {
                for c in 0..m {
                    b.swap(k * m + c, piv_row * m + c);
                    inv.swap(k * m + c, piv_row * m + c);
                }
            }
            let piv = b[k * m + k];
            for c in 0..m {
                b[k * m + c] /= piv;
                inv[k * m + c] /= piv;
            }
            for r in 0..m {
                if r != k {
                    let f = b[r * m + k];
                    if f != 0.0 {
                        for c in 0..m {
                            b[r * m + c] -= f * b[k * m + c];
                            inv[r * m + c] -= f * inv[k * m + c];
                        }
                    }
                }
            }
        }
        self.binv = inv;
        self.pivots_since_refactor = 0;
        self.recompute_basic_values();
        Ok(())
    }

    /// x_B = B^{-1} (rhs - A_N x_N).
    fn recompute_basic_values(&mut self) {
        let m = self.m;
        let mut b_eff = self.rhs.clone();
        for j in 0..self.ncols() {
            if self.status[j] != Status::Basic && self.x[j] != 0.0 {
                for &(r, v) in &self.cols[j] {
                    b_eff[r] -= v * self.x[j];
                }
            }
        }
        for i in 0..m {
            let mut acc = 0.0;
            for r in 0..m {
                acc += self.binv[i * m + r] * b_eff[r];
            }
            self.x[self.basis[i]] = acc;
        }
    }

    /// d = B^{-1} A_j.
    fn ftran(&self, col: usize) -> Vec<f64> {
        let m = self.m;
        let mut d = vec![0.0; m];
        for &(r, v) in &self.cols[col] {
            if v != 0.0 {
                for i in 0..m {
                    d[i] += self.binv[i * m + r] * v;
                }
            }
        }
        d
    }

    /// y = c_B^T B^{-1} for the given full cost vector.
    fn btran(&self, cost: &[f64]) -> Vec<f64> {
        let m = self.m;
        let mut y = vec![0.0; m];
        for (i, &col) in self.basis.iter().enumerate() {
            let c = cost[col];
            if c != 0.0 {
                for r in 0..m {
                    y[r] += c * self.binv[i * m + r];
                }
            }
        }
        y
    }

    fn reduced_cost(&self, cost: &[f64], y: &[f64], j: usize) -> f64 {
        let mut r = cost[j];
        for &(row, v) in &self.cols[j] {
            r -= y[row] * v;
        }
        r
    }

    /// Run the simplex loop minimizing `cost` starting from the current
    /// feasible basis.
    fn minimize(&mut self, cost: &[f64], opt_tol: f64) -> Result<LoopResult, LpError> {
        let mut stall = 0usize;
        let mut bland = false;
        loop {
            if self.iterations >= MAX_ITERATIONS {
                return Err(LpError::Numerical {
                    iterations: self.iterations,
                    detail: "iteration limit exceeded".into(),
                });
            }
            if self.pivots_since_refactor >= REFACTOR_EVERY {
                self.refactor()?;
            }
            let y = self.btran(cost);

            // Pricing.
            let mut entering: Option<(usize, f64, f64)> = None; // (col, |r|, dir)
            for j in 0..self.ncols() {
                if self.upper[j] - self.lower[j] <= 0.0 {
                    continue; // fixed variables (and frozen artificials) never enter
                }
                let (dir, eligible_r) = match self.status[j] {
                    Status::Basic => continue,
                    Status::AtLower => (1.0, -1.0),
                    Status::AtUpper => (-1.0, 1.0),
                    Status::FreeAtZero => (0.0, 0.0),
                };
                let r = self.reduced_cost(cost, &y, j);
                let (dir, score) = if self.status[j] == Status::FreeAtZero {
                    if r.abs() <= opt_tol {
                        continue;
                    }
                    (-r.signum(), r.abs())
                } else {
                    if r * eligible_r <= opt_tol {
                        continue;
                    }
                    (dir, r.abs())
                };
                match entering {
                    Some((_, best, _)) if score <= best => {}
                    _ => entering = Some((j, score, dir)),
                }
                if bland {
                    break; // lowest eligible index
                }
            }
            let Some((enter, _, dir)) = entering else {
                return Ok(LoopResult::Optimal);
            };

            let d = self.ftran(enter);

            // Ratio test: own bound flip vs. basic variables hitting bounds.
            let own_range = self.upper[enter] - self.lower[enter];
            let mut t_best = if own_range.is_finite() {
                own_range
            } else {
                f64::INFINITY
            };
            let mut leaving: Option<(usize, bool)> = None; // (basis row, hits_upper)
            let mut leave_pivot = 0.0f64;
            for i in 0..self.m {
                let delta = -dir * d[i]; // x_basis[i] changes by delta * t
                let xb = self.x[self.basis[i]];
                let (limit, hits_upper) = if delta > PIVOT_TOL {
                    let ub = self.upper[self.basis[i]];
                    if !ub.is_finite() {
                        continue;
                    }
                    (((ub - xb) / delta).max(0.0), true)
                } else if delta < -PIVOT_TOL {
                    let lb = self.lower[self.basis[i]];
                    if !lb.is_finite() {
                        continue;
                    }
                    (((lb - xb) / delta).max(0.0), false)
                } else {
                    continue;
                };
                let improves = limit < t_best - 1e-12
                    || (limit < t_best + 1e-12
                        && leaving.is_some()
                        && d[i].abs() > leave_pivot.abs());
                if improves {
                    t_best = limit.min(t_best);
                    leaving = Some((i, hits_upper));
                    leave_pivot = d[i];
                }
            }

            if !t_best.is_finite() {
                return Ok(LoopResult::Unbounded);
            }
            if t_best < 1e-11 {
                stall += 1;
                if stall > STALL_LIMIT {
                    bland = true;
                }
            } else {
                stall = 0;
            }

            // Apply the step.
            self.x[enter] += dir * t_best;
            for i in 0..self.m {
                self.x[self.basis[i]] -= dir * d[i] * t_best;
            }
            self.iterations += 1;

            match leaving {
                None => {
                    // Bound flip: entering moved across its own range.
                    self.status[enter] = match self.status[enter] {
                        Status::AtLower => Status::AtUpper,
                        Status::AtUpper => Status::AtLower,
                        s => s,
                    };
                    let snap = match self.status[enter] {
                        Status::AtLower => self.lower[enter],
                        Status::AtUpper => self.upper[enter],
                        _ => self.x[enter],
                    };
                    self.x[enter] = snap;
                }
                Some((row, hits_upper)) => {
                    let leave_col = self.basis[row];
                    self.status[leave_col] = if hits_upper {
                        Status::AtUpper
                    } else {
                        Status::AtLower
                    };
                    self.x[leave_col] = if hits_upper {
                        self.upper[leave_col]
                    } else {
                        self.lower[leave_col]
                    };
                    self.basis[row] = enter;
                    self.status[enter] = Status::Basic;
                    self.eta_update(row, &d)?;
                }
            }
        }
    }

    /// Product-form update of the dense inverse after a pivot on `row`.
    fn eta_update(&mut self, row: usize, d: &[f64]) -> Result<(), LpError> {
        let m = self.m;
        let piv = d[row];
        if piv.abs() < PIVOT_TOL {
            // Too small to update stably; rebuild from scratch.
            return self.refactor();
        }
        for c in 0..m {
            self.binv[row * m + c] /= piv;
        }
        for i in 0..m {
            if i != row && d[i] != 0.0 {
                let f = d[i];
                for c in 0..m {
                    self.binv[i * m + c] -= f * self.binv[row * m + c];
                }
            }
        }
        self.pivots_since_refactor += 1;
        Ok(())
    }
}

pub(super) fn solve(problem: &LinearProblem, tol: Tolerances) -> Result<LpSolution, LpError> {
    let n = problem.vars.len();
    let m = problem.cons.len();

    let mut cols: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    for (row, con) in problem.cons.iter().enumerate() {
        for &(v, coef) in &con.coeffs {
            if coef != 0.0 {
                cols[v].push((row, coef));
            }
        }
    }
    let mut lower: Vec<f64> = problem.vars.iter().map(|v| v.lower).collect();
    let mut upper: Vec<f64> = problem.vars.iter().map(|v| v.upper).collect();
    let mut rhs = Vec::with_capacity(m);
    for (row, con) in problem.cons.iter().enumerate() {
        cols.push(vec![(row, 1.0)]);
        let (lo, hi) = match con.relation {
            Relation::Le => (0.0, f64::INFINITY),
            Relation::Ge => (f64::NEG_INFINITY, 0.0),
            Relation::Eq => (0.0, 0.0),
        };
        lower.push(lo);
        upper.push(hi);
        rhs.push(con.rhs);
    }

    // Initial nonbasic point: bound nearest zero, free variables at zero.
    let mut x = vec![0.0; n + m];
    let mut status = vec![Status::FreeAtZero; n + m];
    for j in 0..n + m {
        let (lo, hi) = (lower[j], upper[j]);
        if lo.is_finite() && hi.is_finite() {
            if lo.abs() <= hi.abs() {
                x[j] = lo;
                status[j] = Status::AtLower;
            } else {
                x[j] = hi;
                status[j] = Status::AtUpper;
            }
        } else if lo.is_finite() {
            x[j] = lo;
            status[j] = Status::AtLower;
        } else if hi.is_finite() {
            x[j] = hi;
            status[j] = Status::AtUpper;
        }
    }

    // Initial slack values; add artificials where the slack bound is violated.
    let mut slack_val = rhs.clone();
    for j in 0..n {
        if x[j] != 0.0 {
            for &(r, v) in &cols[j] {
                slack_val[r] -= v * x[j];
            }
        }
    }
    let mut basis = Vec::with_capacity(m);
    let mut phase1_cost = vec![0.0; n + m];
    let mut n_artificial = 0;
    for row in 0..m {
        let sj = n + row;
        let v = slack_val[row];
        if v >= lower[sj] - 1e-12 && v <= upper[sj] + 1e-12 {
            x[sj] = v;
            status[sj] = Status::Basic;
            basis.push(sj);
        } else {
            // Slack pinned at its nearest bound, artificial takes the rest.
            let pin = if v < lower[sj] { lower[sj] } else { upper[sj] };
            x[sj] = pin;
            status[sj] = if pin == lower[sj] {
                Status::AtLower
            } else {
                Status::AtUpper
            };
            let resid = v - pin;
            let aj = cols.len();
            cols.push(vec![(row, 1.0)]);
            if resid > 0.0 {
                lower.push(0.0);
                upper.push(f64::INFINITY);
                phase1_cost.push(1.0);
            } else {
                lower.push(f64::NEG_INFINITY);
                upper.push(0.0);
                phase1_cost.push(-1.0);
            }
            x.push(resid);
            status.push(Status::Basic);
            basis.push(aj);
            n_artificial += 1;
        }
    }

    let mut tab = Tableau {
        m,
        cols,
        lower,
        upper,
        rhs,
        x,
        status,
        basis,
        binv: Vec::new(),
        pivots_since_refactor: 0,
        iterations: 0,
    };
    tab.refactor()?;

    let rhs_scale = 1.0 + tab.rhs.iter().map(|v| v.abs()).fold(0.0, f64::max);

    // Phase 1.
    if n_artificial > 0 {
        let opt_tol = 1e-10 * rhs_scale;
        match tab.minimize(&phase1_cost, opt_tol)? {
            LoopResult::Unbounded => {
                return Err(LpError::Numerical {
                    iterations: tab.iterations,
                    detail: "phase 1 unbounded (internal inconsistency)".into(),
                });
            }
            LoopResult::Optimal => {}
        }
        let infeas: f64 = (n + m..tab.ncols()).map(|j| tab.x[j].abs()).sum();
        if infeas > tol.feas_tol * rhs_scale {
            return Ok(LpSolution {
                status: LpStatus::Infeasible,
                primal: Vec::new(),
                objective: f64::NAN,
                dual: Vec::new(),
                reduced_cost: Vec::new(),
                var_status: Vec::new(),
                iterations: tab.iterations,
            });
        }
        // Freeze artificials at zero for phase 2.
        for j in n + m..tab.ncols() {
            tab.lower[j] = 0.0;
            tab.upper[j] = 0.0;
            if tab.status[j] != Status::Basic {
                tab.x[j] = 0.0;
                tab.status[j] = Status::AtLower;
            }
        }
    }

    // Phase 2.
    let mut cost = vec![0.0; tab.ncols()];
    for (j, v) in problem.vars.iter().enumerate() {
        cost[j] = v.obj;
    }
    let cost_scale = 1.0 + cost.iter().map(|v| v.abs()).fold(0.0, f64::max);
    let opt_tol = 1e-9 * cost_scale;
    match tab.minimize(&cost, opt_tol)? {
        LoopResult::Unbounded => {
            return Ok(LpSolution {
                status: LpStatus::Unbounded,
                primal: Vec::new(),
                objective: f64::NAN,
                dual: Vec::new(),
                reduced_cost: Vec::new(),
                var_status: Vec::new(),
                iterations: tab.iterations,
            });
        }
        LoopResult::Optimal => {}
    }

    // Tighten the final point and verify.
    tab.refactor()?;
    let y = tab.btran(&cost);
    let mut reduced = vec![0.0; n];
    let mut var_status = vec![BoundStatus::Basic; n];
    for j in 0..n {
        match tab.status[j] {
            Status::Basic => {}
            s => {
                reduced[j] = tab.reduced_cost(&cost, &y, j);
                var_status[j] = match s {
                    Status::AtLower => BoundStatus::AtLower,
                    Status::AtUpper => BoundStatus::AtUpper,
                    Status::FreeAtZero => BoundStatus::Free,
                    Status::Basic => unreachable!(),
                };
            }
        }
    }
    let primal: Vec<f64> = tab.x[..n].to_vec();
    let objective: f64 = problem
        .vars
        .iter()
        .enumerate()
        .map(|(j, v)| v.obj * primal[j])
        .sum();

    verify_optimal(problem, &primal, &y, &reduced, &var_status, tol, tab.iterations)?;

    Ok(LpSolution {
        status: LpStatus::Optimal,
        primal,
        objective,
        dual: y,
        reduced_cost: reduced,
        var_status,
        iterations: tab.iterations,
    })
}

/// Post-solve KKT check: primal feasibility, dual sign conditions and the
/// strong-duality identity. Violations surface as numerical errors instead
/// of silently wrong answers.
fn verify_optimal(
    problem: &LinearProblem,
    primal: &[f64],
    dual: &[f64],
    reduced: &[f64],
    var_status: &[BoundStatus],
    tol: Tolerances,
    iterations: usize,
) -> Result<(), LpError> {
    let fail = |detail: String| -> Result<(), LpError> {
        Err(LpError::Numerical { iterations, detail })
    };
    for (i, con) in problem.cons.iter().enumerate() {
        let lhs: f64 = con.coeffs.iter().map(|&(v, c)| c * primal[v]).sum();
        let scale = 1.0 + con.rhs.abs() + lhs.abs();
        let resid = match con.relation {
            Relation::Eq => (lhs - con.rhs).abs(),
            Relation::Le => (lhs - con.rhs).max(0.0),
            Relation::Ge => (con.rhs - lhs).max(0.0),
        };
        if resid > tol.feas_tol * scale {
            return fail(format!(
                "row {} ({}) violated by {resid:.3e}",
                i, con.name
            ));
        }
        // Dual sign: <= rows have non-positive duals, >= rows non-negative.
        let sign_ok = match con.relation {
            Relation::Le => dual[i] <= tol.duality_tol,
            Relation::Ge => dual[i] >= -tol.duality_tol,
            Relation::Eq => true,
        };
        if !sign_ok {
            return fail(format!("row {} ({}) dual {} has wrong sign", i, con.name, dual[i]));
        }
    }
    let mut dual_obj: f64 = problem
        .cons
        .iter()
        .enumerate()
        .map(|(i, c)| dual[i] * c.rhs)
        .sum();
    for (j, v) in problem.vars.iter().enumerate() {
        let scale = 1.0 + v.obj.abs();
        match var_status[j] {
            _ if v.lower == v.upper && var_status[j] != BoundStatus::Basic => {
                // Fixed variables carry a reduced cost of either sign.
                dual_obj += reduced[j] * v.lower;
            }
            BoundStatus::Basic => {}
            BoundStatus::AtLower => {
                if reduced[j] < -tol.duality_tol * scale {
                    return fail(format!("variable {} ({}) at lower with reduced cost {}", j, v.name, reduced[j]));
                }
                dual_obj += reduced[j] * v.lower;
            }
            BoundStatus::AtUpper => {
                if reduced[j] > tol.duality_tol * scale {
                    return fail(format!("variable {} ({}) at upper with reduced cost {}", j, v.name, reduced[j]));
                }
                dual_obj += reduced[j] * v.upper;
            }
            BoundStatus::Free => {
                if reduced[j].abs() > tol.duality_tol * scale {
                    return fail(format!("free variable {} ({}) has reduced cost {}", j, v.name, reduced[j]));
                }
            }
        }
        let (lo, hi) = (v.lower, v.upper);
        let slack_scale = 1.0 + primal[j].abs();
        if primal[j] < lo - tol.feas_tol * slack_scale || primal[j] > hi + tol.feas_tol * slack_scale {
            return fail(format!(
                "variable {} ({}) value {} outside bounds [{}, {}]",
                j, v.name, primal[j], lo, hi
            ));
        }
    }
    let primal_obj: f64 = problem
        .vars
        .iter()
        .enumerate()
        .map(|(j, v)| v.obj * primal[j])
        .sum();
    let gap = (primal_obj - dual_obj).abs();
    if gap > tol.duality_tol * (1.0 + primal_obj.abs()) {
        return fail(format!("duality gap {gap:.3e} exceeds tolerance"));
    }
    Ok(())
}
