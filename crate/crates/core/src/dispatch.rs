//! Two-tier DC optimal power flow.
//!
//! Stage 1 minimizes dispatch cost plus load-shedding penalties. Stage 2
//! re-dispatches to minimize total emissions subject to the stage-1 cost
//! held within a relative tolerance (`cost_cap_tol`). Both stages share one
//! formulation: generator outputs, bus angles (reference bus fixed at 0),
//! signed line flows bounded by thermal limits, and per-bus shed variables
//! bounded by that bus's demand. Line limits and shed caps are variable
//! bounds, not rows, so the constraint matrix stays at L flow definitions
//! plus N nodal balances.

use crate::grid::HourCase;
use crate::lp::{
    BoundStatus, ConId, LinearProblem, LpError, LpSolution, LpStatus, Relation, Tolerances, VarId,
};
use thiserror::Error;

/// Relative slack allowed on the stage-2 cost cap. Kept well below the
/// 1e-4 sensitivity tolerances: stage 2 can trade the cap's cost slack for
/// emission cuts, which perturbs finite-difference emission derivatives by
/// roughly `tol x cap dual x LMP`.
pub const DEFAULT_COST_CAP_TOL: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum DispatchError {
    #[error(transparent)]
    Lp(#[from] LpError),
    /// Stage 1 is always feasible (shedding is unbounded below demand), so
    /// this indicates a malformed case; stage 2 infeasibility survives the
    /// single cap-relaxation retry only on numerical failure.
    #[error("stage {stage} dispatch infeasible: {detail}")]
    Infeasible { stage: u8, detail: String },
    #[error("stage {stage} dispatch unbounded")]
    Unbounded { stage: u8 },
}

#[derive(Debug, Clone, Copy)]
pub struct DispatchConfig {
    pub tolerances: Tolerances,
    pub cost_cap_tol: f64,
}

impl Default for DispatchConfig {
    fn default() -> Self {
        DispatchConfig {
            tolerances: Tolerances::default(),
            cost_cap_tol: DEFAULT_COST_CAP_TOL,
        }
    }
}

/// Variable/constraint layout of one DC-OPF instance. Indices are into the
/// owning [`LinearProblem`]; order matches the owning [`HourCase`].
#[derive(Debug)]
pub struct DcOpf {
    pub problem: LinearProblem,
    pub gen_vars: Vec<VarId>,
    pub angle_vars: Vec<VarId>,
    pub flow_vars: Vec<VarId>,
    pub shed_vars: Vec<VarId>,
    /// One per line: `B(theta_from - theta_to) - f = 0`.
    pub flow_def_cons: Vec<ConId>,
    /// One per bus: generation + imports + shed = demand.
    pub balance_cons: Vec<ConId>,
    /// Stage 2 only: dispatch cost held at or below the stage-1 cap.
    pub cost_cap_con: Option<ConId>,
}

/// Which objective a stage optimizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StageObjective {
    /// Generation cost plus `shed_cost` per MWh unserved.
    Cost,
    /// Total emissions; shedding carries no direct objective weight.
    Emissions,
}

/// Objective gradients with respect to the formulation's right-hand sides
/// and bounds, in that stage's objective units per MW.
#[derive(Debug, Clone, PartialEq)]
pub struct StageDuals {
    /// Nodal balance duals (stage 1: LMPs).
    pub balance: Vec<f64>,
    /// d(objective)/d(flow_limit) per line; nonzero only at binding limits
    /// and never positive (relaxing a limit cannot hurt).
    pub line_limit_grad: Vec<f64>,
    /// One-sided d(objective)/d(shed upper bound) per bus, taken as the
    /// nonpositive part of the shed reduced cost when the bound binds.
    pub shed_upper_grad: Vec<f64>,
    /// Dual of the stage-2 cost cap (zero in stage 1), nonpositive.
    pub cost_cap: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DispatchSolution {
    /// MW per generator.
    pub generation: Vec<f64>,
    /// Radians per bus; reference bus (lowest id) is 0.
    pub angle: Vec<f64>,
    /// Signed MW per line, positive from `from_bus` to `to_bus`.
    pub flow: Vec<f64>,
    /// MW unserved per bus.
    pub shed: Vec<f64>,
    /// Generation cost plus shed penalty, $.
    pub dispatch_cost: f64,
    /// kgCO2 over the hour.
    pub emissions: f64,
}

impl DispatchSolution {
    pub fn total_shed(&self) -> f64 {
        self.shed.iter().sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StageResult {
    pub solution: DispatchSolution,
    pub duals: StageDuals,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TwoTierResult {
    pub stage1: StageResult,
    pub stage2: StageResult,
    /// Right-hand side of the stage-2 cost cap actually used.
    pub cost_cap: f64,
    /// Relative cap slack used (after any retry widening).
    pub cost_cap_tol: f64,
    /// True when stage 2 only solved after widening the cap tenfold.
    pub cap_retried: bool,
}

/// Build the shared formulation with the given stage objective. The cost
/// cap row is added (without a finite rhs) only when `cost_cap` is set.
pub fn build_dcopf(case: &HourCase, objective: StageObjective, cost_cap: Option<f64>) -> DcOpf {
    let net = case.network;
    let mut p = LinearProblem::new();

    let gen_vars: Vec<VarId> = net
        .generators
        .iter()
        .enumerate()
        .map(|(gi, g)| {
            let hi = case.effective_pmax[gi];
            // VRE derating can push the cap below p_min; output is
            // curtailable so the floor yields, never the cap.
            let lo = g.p_min.min(hi);
            let obj = match objective {
                StageObjective::Cost => g.marginal_cost,
                StageObjective::Emissions => g.emission_rate,
            };
            p.add_var(format!("g{}", g.id), lo, hi, obj)
        })
        .collect();

    let angle_vars: Vec<VarId> = net
        .buses
        .iter()
        .enumerate()
        .map(|(bi, b)| {
            if bi == 0 {
                p.add_var(format!("th{}", b.id), 0.0, 0.0, 0.0)
            } else {
                p.add_var(format!("th{}", b.id), f64::NEG_INFINITY, f64::INFINITY, 0.0)
            }
        })
        .collect();

    let flow_vars: Vec<VarId> = net
        .lines
        .iter()
        .map(|l| p.add_var(format!("f{}", l.id), -l.flow_limit, l.flow_limit, 0.0))
        .collect();

    let shed_obj = match objective {
        StageObjective::Cost => net.shed_cost,
        StageObjective::Emissions => 0.0,
    };
    let shed_vars: Vec<VarId> = net
        .buses
        .iter()
        .enumerate()
        // Negative bus demand (an injection, e.g. sited generation) sheds
        // nothing.
        .map(|(bi, b)| p.add_var(format!("ls{}", b.id), 0.0, case.bus_demand[bi].max(0.0), shed_obj))
        .collect();

    let flow_def_cons: Vec<ConId> = net
        .lines
        .iter()
        .enumerate()
        .map(|(li, l)| {
            p.add_constraint(
                format!("def_f{}", l.id),
                vec![
                    (angle_vars[l.from_bus], l.susceptance),
                    (angle_vars[l.to_bus], -l.susceptance),
                    (flow_vars[li], -1.0),
                ],
                Relation::Eq,
                0.0,
            )
        })
        .collect();

    let balance_cons: Vec<ConId> = net
        .buses
        .iter()
        .enumerate()
        .map(|(bi, b)| {
            let mut coeffs: Vec<(VarId, f64)> = Vec::new();
            for (gi, g) in net.generators.iter().enumerate() {
                if g.bus == bi {
                    coeffs.push((gen_vars[gi], 1.0));
                }
            }
            for (li, l) in net.lines.iter().enumerate() {
                if l.to_bus == bi {
                    coeffs.push((flow_vars[li], 1.0));
                }
                if l.from_bus == bi {
                    coeffs.push((flow_vars[li], -1.0));
                }
            }
            coeffs.push((shed_vars[bi], 1.0));
            p.add_constraint(format!("bal{}", b.id), coeffs, Relation::Eq, case.bus_demand[bi])
        })
        .collect();

    let cost_cap_con = cost_cap.map(|cap| {
        let mut coeffs: Vec<(VarId, f64)> = net
            .generators
            .iter()
            .enumerate()
            .map(|(gi, g)| (gen_vars[gi], g.marginal_cost))
            .collect();
        for &v in &shed_vars {
            coeffs.push((v, net.shed_cost));
        }
        p.add_constraint("cost_cap", coeffs, Relation::Le, cap)
    });

    DcOpf {
        problem: p,
        gen_vars,
        angle_vars,
        flow_vars,
        shed_vars,
        flow_def_cons,
        balance_cons,
        cost_cap_con,
    }
}

fn extract_stage(case: &HourCase, opf: &DcOpf, sol: &LpSolution) -> StageResult {
    let net = case.network;
    let at = |v: VarId| sol.primal[v.index()];
    let generation: Vec<f64> = opf.gen_vars.iter().map(|&v| at(v)).collect();
    let solution = DispatchSolution {
        angle: opf.angle_vars.iter().map(|&v| at(v)).collect(),
        flow: opf.flow_vars.iter().map(|&v| at(v)).collect(),
        shed: opf.shed_vars.iter().map(|&v| at(v)).collect(),
        dispatch_cost: net
            .generators
            .iter()
            .enumerate()
            .map(|(gi, g)| g.marginal_cost * generation[gi])
            .sum::<f64>()
            + net.shed_cost * opf.shed_vars.iter().map(|&v| at(v)).sum::<f64>(),
        emissions: net
            .generators
            .iter()
            .enumerate()
            .map(|(gi, g)| g.emission_rate * generation[gi])
            .sum(),
        generation,
    };

    // Bound gradients come from reduced costs. A flow at +fmax contributes
    // d(obj)/d(fmax) = rc (rc <= 0 there); at -fmax the lower bound moves
    // the other way, so -rc (rc >= 0 there). Shed caps only ever relax
    // upward, so a fixed [0,0] shed variable (zero-demand bus) takes the
    // one-sided nonpositive part of its reduced cost.
    let line_limit_grad: Vec<f64> = opf
        .flow_vars
        .iter()
        .map(|&v| {
            let rc = sol.reduced_cost[v.index()];
            match sol.var_status[v.index()] {
                BoundStatus::AtUpper => rc.min(0.0),
                BoundStatus::AtLower => (-rc).min(0.0),
                _ => 0.0,
            }
        })
        .collect();
    let shed_upper_grad: Vec<f64> = opf
        .shed_vars
        .iter()
        .map(|&v| {
            let rc = sol.reduced_cost[v.index()];
            let (lo, hi) = opf.problem.var_bounds(v);
            let at_cap = match sol.var_status[v.index()] {
                BoundStatus::AtUpper => true,
                BoundStatus::AtLower => hi - lo <= 0.0,
                _ => false,
            };
            if at_cap {
                rc.min(0.0)
            } else {
                0.0
            }
        })
        .collect();

    let duals = StageDuals {
        balance: opf.balance_cons.iter().map(|&c| sol.dual[c.index()]).collect(),
        line_limit_grad,
        shed_upper_grad,
        cost_cap: opf
            .cost_cap_con
            .map(|c| sol.dual[c.index()].min(0.0))
            .unwrap_or(0.0),
    };
    StageResult { solution, duals }
}

fn solve_stage(
    case: &HourCase,
    objective: StageObjective,
    cost_cap: Option<f64>,
    config: &DispatchConfig,
    stage: u8,
) -> Result<StageResult, DispatchError> {
    let opf = build_dcopf(case, objective, cost_cap);
    let sol = opf.problem.solve(config.tolerances)?;
    match sol.status {
        LpStatus::Optimal => Ok(extract_stage(case, &opf, &sol)),
        LpStatus::Infeasible => Err(DispatchError::Infeasible {
            stage,
            detail: format!("hour {}", case.hour),
        }),
        LpStatus::Unbounded => Err(DispatchError::Unbounded { stage }),
    }
}

/// Stage 1: minimize dispatch cost (generation plus shed penalty).
pub fn solve_dcopf(case: &HourCase, config: &DispatchConfig) -> Result<StageResult, DispatchError> {
    solve_stage(case, StageObjective::Cost, None, config, 1)
}

/// Stage 2: minimize emissions with cost capped at
/// `stage1_cost * (1 + tol)`. Returns the result, the cap used, the tol
/// used, and whether the tenfold retry fired.
pub fn solve_emission_tier(
    case: &HourCase,
    stage1_cost: f64,
    config: &DispatchConfig,
) -> Result<(StageResult, f64, f64, bool), DispatchError> {
    let cap = |tol: f64| stage1_cost * (1.0 + tol);
    let first = solve_stage(
        case,
        StageObjective::Emissions,
        Some(cap(config.cost_cap_tol)),
        config,
        2,
    );
    match first {
        Ok(r) => Ok((r, cap(config.cost_cap_tol), config.cost_cap_tol, false)),
        Err(DispatchError::Infeasible { .. }) => {
            // Numerical round-off can leave the stage-1 optimum a hair above
            // the cap; one retry with a tenfold-looser tolerance.
            let tol = config.cost_cap_tol * 10.0;
            let r = solve_stage(case, StageObjective::Emissions, Some(cap(tol)), config, 2)?;
            Ok((r, cap(tol), tol, true))
        }
        Err(e) => Err(e),
    }
}

/// Full two-tier solve: cost-optimal stage 1, then emission-minimal stage 2
/// within the cost cap.
pub fn lexicographic_dispatch(
    case: &HourCase,
    config: &DispatchConfig,
) -> Result<TwoTierResult, DispatchError> {
    let stage1 = solve_dcopf(case, config)?;
    let (stage2, cost_cap, cost_cap_tol, cap_retried) =
        solve_emission_tier(case, stage1.solution.dispatch_cost, config)?;
    Ok(TwoTierResult {
        stage1,
        stage2,
        cost_cap,
        cost_cap_tol,
        cap_retried,
    })
}
