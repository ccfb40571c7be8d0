//! Minimal linear-programming layer: build a problem from linear constraints
//! and bounds, solve it, and get primal values, the objective, a dual value
//! for every constraint and a reduced cost for every variable bound.
//!
//! The solver is a dense bounded-variable primal simplex (two phases,
//! artificials only on violated rows, explicit basis inverse with periodic
//! refactorization). Pivoting is deterministic: Dantzig pricing with
//! lowest-index tie-breaking, falling back to Bland's rule after a long
//! degenerate stall. Duals follow the convention `d(objective)/d(rhs)`.

mod simplex;

use thiserror::Error;

/// Handle to a declared variable.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VarId(pub(crate) usize);

impl VarId {
    pub fn index(self) -> usize {
        self.0
    }

    pub fn from_index(index: usize) -> Self {
        VarId(index)
    }
}

/// Handle to an added constraint.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConId(pub(crate) usize);

impl ConId {
    pub fn index(self) -> usize {
        self.0
    }

    pub fn from_index(index: usize) -> Self {
        ConId(index)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Le,
    Eq,
    Ge,
}

#[derive(Debug, Clone)]
pub(crate) struct VarDef {
    pub name: String,
    pub lower: f64,
    pub upper: f64,
    pub obj: f64,
}

#[derive(Debug, Clone)]
pub(crate) struct ConDef {
    pub name: String,
    pub coeffs: Vec<(usize, f64)>,
    pub relation: Relation,
    pub rhs: f64,
}

/// A linear program in minimization sense.
#[derive(Debug, Clone, Default)]
pub struct LinearProblem {
    pub(crate) vars: Vec<VarDef>,
    pub(crate) cons: Vec<ConDef>,
}

#[derive(Debug, Clone, Copy)]
pub struct Tolerances {
    /// Allowed primal feasibility residual, in problem units.
    pub feas_tol: f64,
    /// Allowed strong-duality / complementarity residual.
    pub duality_tol: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            feas_tol: 1e-7,
            duality_tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundStatus {
    Basic,
    AtLower,
    AtUpper,
    /// Nonbasic free variable (value 0).
    Free,
}

#[derive(Debug, Clone)]
pub struct LpSolution {
    pub status: LpStatus,
    /// Value per variable (empty unless optimal).
    pub primal: Vec<f64>,
    pub objective: f64,
    /// `d(objective)/d(rhs)` per constraint.
    pub dual: Vec<f64>,
    /// Reduced cost per variable; zero for basic variables. For a variable
    /// nonbasic at a bound this is the one-sided derivative of the optimum
    /// with respect to that bound.
    pub reduced_cost: Vec<f64>,
    pub var_status: Vec<BoundStatus>,
    pub iterations: usize,
}

impl LpSolution {
    pub fn is_optimal(&self) -> bool {
        self.status == LpStatus::Optimal
    }
}

#[derive(Debug, Error)]
pub enum LpError {
    #[error("malformed problem: {0}")]
    BadProblem(String),
    #[error("numerical failure after {iterations} iterations: {detail}")]
    Numerical { iterations: usize, detail: String },
}

impl LinearProblem {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn num_vars(&self) -> usize {
        self.vars.len()
    }

    pub fn num_constraints(&self) -> usize {
        self.cons.len()
    }

    /// Declare a variable with bounds and objective coefficient. Use
    /// `f64::NEG_INFINITY` / `f64::INFINITY` for free directions.
    pub fn add_var(&mut self, name: impl Into<String>, lower: f64, upper: f64, obj: f64) -> VarId {
        self.vars.push(VarDef {
            name: name.into(),
            lower,
            upper,
            obj,
        });
        VarId(self.vars.len() - 1)
    }

    pub fn set_var_bounds(&mut self, var: VarId, lower: f64, upper: f64) {
        self.vars[var.0].lower = lower;
        self.vars[var.0].upper = upper;
    }

    pub fn set_objective_coef(&mut self, var: VarId, obj: f64) {
        self.vars[var.0].obj = obj;
    }

    pub fn add_constraint(
        &mut self,
        name: impl Into<String>,
        coeffs: Vec<(VarId, f64)>,
        relation: Relation,
        rhs: f64,
    ) -> ConId {
        self.cons.push(ConDef {
            name: name.into(),
            coeffs: coeffs.into_iter().map(|(v, c)| (v.0, c)).collect(),
            relation,
            rhs,
        });
        ConId(self.cons.len() - 1)
    }

    pub fn set_rhs(&mut self, con: ConId, rhs: f64) {
        self.cons[con.0].rhs = rhs;
    }

    pub fn var_bounds(&self, var: VarId) -> (f64, f64) {
        (self.vars[var.0].lower, self.vars[var.0].upper)
    }

    pub fn objective_coef(&self, var: VarId) -> f64 {
        self.vars[var.0].obj
    }

    /// Constraint row as (coefficients, relation, rhs).
    pub fn constraint(&self, con: ConId) -> (Vec<(VarId, f64)>, Relation, f64) {
        let c = &self.cons[con.0];
        (
            c.coeffs.iter().map(|&(v, x)| (VarId(v), x)).collect(),
            c.relation,
            c.rhs,
        )
    }

    fn validate(&self) -> Result<(), LpError> {
        for (i, v) in self.vars.iter().enumerate() {
            if v.lower > v.upper {
                return Err(LpError::BadProblem(format!(
                    "variable {} ({}) has lower bound {} above upper bound {}",
                    i, v.name, v.lower, v.upper
                )));
            }
            if v.lower.is_nan() || v.upper.is_nan() || !v.obj.is_finite() {
                return Err(LpError::BadProblem(format!(
                    "variable {} ({}) has a NaN bound or non-finite cost",
                    i, v.name
                )));
            }
        }
        for (i, c) in self.cons.iter().enumerate() {
            if !c.rhs.is_finite() {
                return Err(LpError::BadProblem(format!(
                    "constraint {} ({}) has non-finite rhs",
                    i, c.name
                )));
            }
            for &(v, coef) in &c.coeffs {
                if v >= self.vars.len() {
                    return Err(LpError::BadProblem(format!(
                        "constraint {} ({}) references undeclared variable {}",
                        i, c.name, v
                    )));
                }
                if !coef.is_finite() {
                    return Err(LpError::BadProblem(format!(
                        "constraint {} ({}) has a non-finite coefficient",
                        i, c.name
                    )));
                }
            }
        }
        Ok(())
    }

    /// Solve to optimality, returning duals and reduced costs alongside the
    /// primal point. Infeasible and unbounded problems are reported through
    /// `LpSolution::status`; numerical breakdown is a hard error.
    pub fn solve(&self, tolerances: Tolerances) -> Result<LpSolution, LpError> {
        self.validate()?;
        simplex::solve(self, tolerances)
    }

    /// Debug dump in CPLEX LP text format for external cross-checks.
    pub fn dump_lp_text(&self) -> String {
        let mut out = String::from("Minimize\n obj:");
        for (i, v) in self.vars.iter().enumerate() {
            if v.obj != 0.0 {
                out.push_str(&format!(" {:+} x{}", v.obj, i));
            }
        }
        out.push_str("\nSubject To\n");
        for (i, c) in self.cons.iter().enumerate() {
            out.push_str(&format!(" c{i}:"));
            for &(v, coef) in &c.coeffs {
                out.push_str(&format!(" {coef:+} x{v}"));
            }
            let rel = match c.relation {
                Relation::Le => "<=",
                Relation::Eq => "=",
                Relation::Ge => ">=",
            };
            out.push_str(&format!(" {} {}\n", rel, c.rhs));
        }
        out.push_str("Bounds\n");
        for (i, v) in self.vars.iter().enumerate() {
            out.push_str(&format!(" {} <= x{} <= {}\n", v.lower, i, v.upper));
        }
        out.push_str("End\n");
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn min_x_with_lower_row() {
        // min x s.t. x >= 3, x free.
        let mut p = LinearProblem::new();
        let x = p.add_var("x", f64::NEG_INFINITY, f64::INFINITY, 1.0);
        let c = p.add_constraint("lb", vec![(x, 1.0)], Relation::Ge, 3.0);
        let sol = p.solve(Tolerances::default()).unwrap();
        assert!(sol.is_optimal());
        assert_abs_diff_eq!(sol.primal[x.index()], 3.0, epsilon = 1e-9);
        assert_abs_diff_eq!(sol.objective, 3.0, epsilon = 1e-9);
        assert_abs_diff_eq!(sol.dual[c.index()], 1.0, epsilon = 1e-9);
    }

    #[test]
    fn conflicting_rows_infeasible() {
        let mut p = LinearProblem::new();
        let x = p.add_var("x", f64::NEG_INFINITY, f64::INFINITY, 0.0);
        p.add_constraint("hi", vec![(x, 1.0)], Relation::Le, 1.0);
        p.add_constraint("lo", vec![(x, 1.0)], Relation::Ge, 2.0);
        let sol = p.solve(Tolerances::default()).unwrap();
        assert_eq!(sol.status, LpStatus::Infeasible);
    }

    #[test]
    fn unbounded_detected() {
        let mut p = LinearProblem::new();
        let x = p.add_var("x", f64::NEG_INFINITY, f64::INFINITY, -1.0);
        p.add_constraint("lb", vec![(x, 1.0)], Relation::Ge, 0.0);
        let sol = p.solve(Tolerances::default()).unwrap();
        assert_eq!(sol.status, LpStatus::Unbounded);
    }

    #[test]
    fn diet_style_problem_with_duals() {
        // min 2a + 3b  s.t.  a + b >= 10,  a <= 6,  a,b >= 0.
        // Optimum a=6, b=4, obj 24; duals: cover=3, cap=-1.
        let mut p = LinearProblem::new();
        let a = p.add_var("a", 0.0, f64::INFINITY, 2.0);
        let b = p.add_var("b", 0.0, f64::INFINITY, 3.0);
        let cover = p.add_constraint("cover", vec![(a, 1.0), (b, 1.0)], Relation::Ge, 10.0);
        let cap = p.add_constraint("cap", vec![(a, 1.0)], Relation::Le, 6.0);
        let sol = p.solve(Tolerances::default()).unwrap();
        assert!(sol.is_optimal());
        assert_abs_diff_eq!(sol.objective, 24.0, epsilon = 1e-9);
        assert_abs_diff_eq!(sol.primal[a.index()], 6.0, epsilon = 1e-9);
        assert_abs_diff_eq!(sol.primal[b.index()], 4.0, epsilon = 1e-9);
        assert_abs_diff_eq!(sol.dual[cover.index()], 3.0, epsilon = 1e-9);
        assert_abs_diff_eq!(sol.dual[cap.index()], -1.0, epsilon = 1e-9);
    }

    #[test]
    fn reduced_cost_reports_bound_sensitivity() {
        // min x + 2y s.t. x + y = 5, 0 <= x <= 3, y >= 0.
        // x at upper bound: d(obj)/d(upper) = 1 - 2 = -1.
        let mut p = LinearProblem::new();
        let x = p.add_var("x", 0.0, 3.0, 1.0);
        let y = p.add_var("y", 0.0, f64::INFINITY, 2.0);
        p.add_constraint("bal", vec![(x, 1.0), (y, 1.0)], Relation::Eq, 5.0);
        let sol = p.solve(Tolerances::default()).unwrap();
        assert!(sol.is_optimal());
        assert_eq!(sol.var_status[x.index()], BoundStatus::AtUpper);
        assert_abs_diff_eq!(sol.reduced_cost[x.index()], -1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(sol.objective, 7.0, epsilon = 1e-9);
    }

    #[test]
    fn fixed_variable_and_equality_rows() {
        let mut p = LinearProblem::new();
        let x = p.add_var("x", 2.0, 2.0, 1.0);
        let y = p.add_var("y", 0.0, 10.0, 5.0);
        let c = p.add_constraint("sum", vec![(x, 1.0), (y, 1.0)], Relation::Eq, 6.0);
        let sol = p.solve(Tolerances::default()).unwrap();
        assert!(sol.is_optimal());
        assert_abs_diff_eq!(sol.primal[y.index()], 4.0, epsilon = 1e-9);
        assert_abs_diff_eq!(sol.dual[c.index()], 5.0, epsilon = 1e-9);
    }

    #[test]
    fn bad_bounds_rejected() {
        let mut p = LinearProblem::new();
        p.add_var("x", 1.0, 0.0, 0.0);
        assert!(matches!(
            p.solve(Tolerances::default()),
            Err(LpError::BadProblem(_))
        ));
    }

    #[test]
    fn lp_text_dump_mentions_all_rows() {
        let mut p = LinearProblem::new();
        let x = p.add_var("x", 0.0, 1.0, 1.0);
        p.add_constraint("c", vec![(x, 2.0)], Relation::Le, 1.5);
        let text = p.dump_lp_text();
        assert!(text.contains("Minimize"));
        assert!(text.contains("+2 x0 <= 1.5"));
    }
}
