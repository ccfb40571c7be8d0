//! Intervention studies: CO2SHIFT data-center load shifting (with the
//! LMP-signal variant) and load/generation siting, each contrasting the
//! expected change (signal x delta) against the realized change from a
//! full re-dispatch.

use crate::dispatch::{lexicographic_dispatch, DispatchConfig, DispatchError};
use crate::grid::{apply_scenario, GridError, HourScenario, Network};
use crate::lp::{LinearProblem, LpError, LpStatus, Relation, Tolerances, VarId};
use crate::sensitivity::lme_from_duals;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum InterventionError {
    #[error(transparent)]
    Dispatch(#[from] DispatchError),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("shifting LP failed: {0}")]
    Lp(#[from] LpError),
    #[error("shifting LP not optimal: {0:?}")]
    LpStatus(LpStatus),
    #[error("data center {name} references bus {bus}, which does not exist")]
    BadDcBus { name: String, bus: usize },
    #[error("plan shape {hours}x{dcs} does not match {expected_hours}x{expected_dcs}")]
    PlanShape {
        hours: usize,
        dcs: usize,
        expected_hours: usize,
        expected_dcs: usize,
    },
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct DataCenterSpec {
    pub name: String,
    pub bus: usize,
    /// MW added every hour (DCSIZE).
    pub base_load: f64,
    /// Box bound on shifts as a fraction of base_load.
    pub shift_fraction: f64,
}

pub const DEFAULT_SHIFT_FRACTION: f64 = 0.2;

#[derive(Debug, Clone, PartialEq)]
pub struct ShiftPlan {
    /// MW per (hour, data center).
    pub delta: Vec<Vec<f64>>,
    /// kgCO2 predicted from the optimization signal.
    pub expected_change: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct ShiftOptions {
    pub day_length: usize,
    /// Balance each data center separately instead of netting across all
    /// of them within the day window.
    pub per_dc_balance: bool,
}

impl Default for ShiftOptions {
    fn default() -> Self {
        ShiftOptions {
            day_length: 24,
            per_dc_balance: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct InterventionReport {
    pub expected_change: f64,
    pub realized_change: f64,
    /// realized/expected in percent; undefined on a zero expectation.
    pub change_ratio_pct: Option<f64>,
    pub base_emissions: f64,
    pub new_emissions: f64,
    /// Realized dispatch-cost change, $.
    pub cost_change: f64,
}

fn make_report(expected: f64, base: (f64, f64), new: (f64, f64)) -> InterventionReport {
    let realized = new.0 - base.0;
    InterventionReport {
        expected_change: expected,
        realized_change: realized,
        change_ratio_pct: (expected != 0.0).then(|| 100.0 * realized / expected),
        base_emissions: base.0,
        new_emissions: new.0,
        cost_change: new.1 - base.1,
    }
}

/// One solved hour of the pipeline: totals plus full per-bus signals.
#[derive(Debug, Clone, PartialEq)]
pub struct HourOutcome {
    pub emissions: f64,
    pub dispatch_cost: f64,
    pub lme: Vec<f64>,
    pub lmp: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaseCase {
    pub hourly: Vec<HourOutcome>,
    pub emissions: f64,
    pub dispatch_cost: f64,
    /// hours x dcs signal matrices for the shifting LP.
    pub lme_at_dcs: Vec<Vec<f64>>,
    pub lmp_at_dcs: Vec<Vec<f64>>,
}

fn check_dcs(network: &Network, dcs: &[DataCenterSpec]) -> Result<(), InterventionError> {
    for dc in dcs {
        if dc.bus >= network.buses.len() {
            return Err(InterventionError::BadDcBus {
                name: dc.name.clone(),
                bus: dc.bus,
            });
        }
    }
    Ok(())
}

/// Solve every hour with per-hour extra bus loads; `extra(hour, dc)` is
/// added on top of each data center's base load.
fn run_pipeline(
    network: &Network,
    scenarios: &[HourScenario],
    dcs: &[DataCenterSpec],
    extra: &(dyn Fn(usize, usize) -> f64 + Sync),
    config: &DispatchConfig,
) -> Result<Vec<HourOutcome>, InterventionError> {
    scenarios
        .par_iter()
        .enumerate()
        .map(|(h, scen)| {
            let mut case = apply_scenario(network, scen)?;
            for (di, dc) in dcs.iter().enumerate() {
                case.bus_demand[dc.bus] += dc.base_load + extra(h, di);
            }
            let r = lexicographic_dispatch(&case, config)?;
            Ok(HourOutcome {
                emissions: r.stage2.solution.emissions,
                dispatch_cost: r.stage2.solution.dispatch_cost,
                lme: lme_from_duals(&r),
                lmp: r.stage1.duals.balance.clone(),
            })
        })
        .collect()
}

fn totals(hourly: &[HourOutcome]) -> (f64, f64) {
    (
        hourly.iter().map(|h| h.emissions).sum(),
        hourly.iter().map(|h| h.dispatch_cost).sum(),
    )
}

/// Base case with every data center online at its constant load.
pub fn run_base_case(
    network: &Network,
    scenarios: &[HourScenario],
    dcs: &[DataCenterSpec],
    config: &DispatchConfig,
) -> Result<BaseCase, InterventionError> {
    check_dcs(network, dcs)?;
    let hourly = run_pipeline(network, scenarios, dcs, &|_, _| 0.0, config)?;
    let (emissions, dispatch_cost) = totals(&hourly);
    let pick = |f: fn(&HourOutcome) -> &Vec<f64>| -> Vec<Vec<f64>> {
        hourly
            .iter()
            .map(|h| dcs.iter().map(|dc| f(h)[dc.bus]).collect())
            .collect()
    };
    Ok(BaseCase {
        lme_at_dcs: pick(|h| &h.lme),
        lmp_at_dcs: pick(|h| &h.lmp),
        hourly,
        emissions,
        dispatch_cost,
    })
}

/// One day window's LP: minimize signal . delta subject to the box and
/// zero-sum constraints, then re-minimize total |delta| at that optimum
/// so flat signals canonically return the zero plan.
fn shift_window(
    signal: &[Vec<f64>],
    bounds: &[f64],
    per_dc_balance: bool,
) -> Result<Vec<Vec<f64>>, InterventionError> {
    let hours = signal.len();
    let dcs = bounds.len();
    let tols = Tolerances::default();
    let mut p = LinearProblem::new();
    // delta = pos - neg keeps the second pass (|delta| objective) linear.
    let mut pos = vec![vec![VarId::from_index(0); dcs]; hours];
    let mut neg = vec![vec![VarId::from_index(0); dcs]; hours];
    for t in 0..hours {
        for i in 0..dcs {
            pos[t][i] = p.add_var(format!("p{t}_{i}"), 0.0, bounds[i], signal[t][i]);
            neg[t][i] = p.add_var(format!("n{t}_{i}"), 0.0, bounds[i], -signal[t][i]);
        }
    }
    if per_dc_balance {
        for i in 0..dcs {
            let coeffs: Vec<(VarId, f64)> = (0..hours)
                .flat_map(|t| [(pos[t][i], 1.0), (neg[t][i], -1.0)])
                .collect();
            p.add_constraint(format!("bal{i}"), coeffs, Relation::Eq, 0.0);
        }
    } else {
        let mut coeffs: Vec<(VarId, f64)> = Vec::with_capacity(2 * hours * dcs);
        for t in 0..hours {
            for i in 0..dcs {
                coeffs.push((pos[t][i], 1.0));
                coeffs.push((neg[t][i], -1.0));
            }
        }
        p.add_constraint("bal", coeffs, Relation::Eq, 0.0);
    }
    let first = p.solve(tols)?;
    if first.status != LpStatus::Optimal {
        return Err(InterventionError::LpStatus(first.status));
    }

    // Pass 2: canonical plan with minimal total movement among optima.
    let mut q = p.clone();
    for t in 0..hours {
        for i in 0..dcs {
            q.set_objective_coef(pos[t][i], 1.0);
            q.set_objective_coef(neg[t][i], 1.0);
        }
    }
    let mut obj_coeffs: Vec<(VarId, f64)> = Vec::with_capacity(2 * hours * dcs);
    for t in 0..hours {
        for i in 0..dcs {
            obj_coeffs.push((pos[t][i], signal[t][i]));
            obj_coeffs.push((neg[t][i], -signal[t][i]));
        }
    }
    q.add_constraint("opt", obj_coeffs, Relation::Le, first.objective);
    let second = q.solve(tols)?;
    if second.status != LpStatus::Optimal {
        return Err(InterventionError::LpStatus(second.status));
    }

    Ok((0..hours)
        .map(|t| {
            (0..dcs)
                .map(|i| second.primal[pos[t][i].index()] - second.primal[neg[t][i].index()])
                .collect()
        })
        .collect())
}

/// CO2SHIFT: per-day LPs over the given signal (LMEs at the data-center
/// buses). Each day window is balanced to zero net shift.
pub fn shift_optimize(
    signal_at_dcs: &[Vec<f64>],
    dcs: &[DataCenterSpec],
    options: &ShiftOptions,
) -> Result<ShiftPlan, InterventionError> {
    let bounds: Vec<f64> = dcs
        .iter()
        .map(|d| d.shift_fraction * d.base_load)
        .collect();
    let mut delta: Vec<Vec<f64>> = Vec::with_capacity(signal_at_dcs.len());
    for window in signal_at_dcs.chunks(options.day_length.max(1)) {
        delta.extend(shift_window(window, &bounds, options.per_dc_balance)?);
    }
    let expected_change = delta
        .iter()
        .zip(signal_at_dcs)
        .map(|(dr, sr)| dr.iter().zip(sr).map(|(d, s)| d * s).sum::<f64>())
        .sum();
    Ok(ShiftPlan {
        delta,
        expected_change,
    })
}

/// The economic-signal variant: identical LP driven by LMPs.
pub fn lmp_shift(
    lmp_at_dcs: &[Vec<f64>],
    dcs: &[DataCenterSpec],
    options: &ShiftOptions,
) -> Result<ShiftPlan, InterventionError> {
    shift_optimize(lmp_at_dcs, dcs, options)
}

/// Independent feasibility check of a plan (box bounds and per-window
/// balance), deliberately not sharing code with the LP.
pub fn verify_plan(
    plan: &ShiftPlan,
    dcs: &[DataCenterSpec],
    options: &ShiftOptions,
    tol: f64,
) -> bool {
    for row in &plan.delta {
        if row.len() != dcs.len() {
            return false;
        }
        for (d, dc) in row.iter().zip(dcs) {
            if d.abs() > dc.shift_fraction * dc.base_load + tol {
                return false;
            }
        }
    }
    for window in plan.delta.chunks(options.day_length.max(1)) {
        if options.per_dc_balance {
            for i in 0..dcs.len() {
                let net: f64 = window.iter().map(|r| r[i]).sum();
                if net.abs() > tol {
                    return false;
                }
            }
        } else {
            let net: f64 = window.iter().flatten().sum();
            if net.abs() > tol {
                return false;
            }
        }
    }
    true
}

/// Re-dispatch with the shifted loads and report realized vs expected.
pub fn evaluate_shift(
    network: &Network,
    scenarios: &[HourScenario],
    dcs: &[DataCenterSpec],
    plan: &ShiftPlan,
    base: &BaseCase,
    config: &DispatchConfig,
) -> Result<InterventionReport, InterventionError> {
    check_dcs(network, dcs)?;
    if plan.delta.len() != scenarios.len()
        || plan.delta.iter().any(|r| r.len() != dcs.len())
    {
        return Err(InterventionError::PlanShape {
            hours: plan.delta.len(),
            dcs: plan.delta.first().map_or(0, |r| r.len()),
            expected_hours: scenarios.len(),
            expected_dcs: dcs.len(),
        });
    }
    let shifted = run_pipeline(network, scenarios, dcs, &|h, i| plan.delta[h][i], config)?;
    Ok(make_report(
        plan.expected_change,
        (base.emissions, base.dispatch_cost),
        totals(&shifted),
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SiteKind {
    Load,
    /// Modeled as a negative constant load.
    Generation,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct SiteSample {
    pub bus: usize,
    pub hour: usize,
    pub expected: f64,
    pub realized: f64,
}

/// Random (bus, hour) siting probes: expected from the base-case LME,
/// realized from a single-hour re-dispatch with the extra (or negated)
/// load.
pub fn siting_experiment(
    network: &Network,
    scenarios: &[HourScenario],
    n_samples: usize,
    delta: f64,
    kind: SiteKind,
    seed: u64,
    config: &DispatchConfig,
) -> Result<(InterventionReport, Vec<SiteSample>), InterventionError> {
    let base = run_base_case(network, scenarios, &[], config)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sign = match kind {
        SiteKind::Load => 1.0,
        SiteKind::Generation => -1.0,
    };
    let picks: Vec<(usize, usize)> = (0..n_samples)
        .map(|_| {
            (
                rng.random_range(0..network.buses.len()),
                rng.random_range(0..scenarios.len()),
            )
        })
        .collect();
    let samples: Vec<SiteSample> = picks
        .par_iter()
        .map(|&(bus, hour)| {
            let case = apply_scenario(network, &scenarios[hour])?
                .with_extra_bus_demand(bus, sign * delta);
            let r = lexicographic_dispatch(&case, config)?;
            Ok(SiteSample {
                bus,
                hour,
                expected: sign * base.hourly[hour].lme[bus] * delta,
                realized: r.stage2.solution.emissions - base.hourly[hour].emissions,
            })
        })
        .collect::<Result<_, InterventionError>>()?;
    let expected: f64 = samples.iter().map(|s| s.expected).sum();
    let realized: f64 = samples.iter().map(|s| s.realized).sum();
    let report = InterventionReport {
        expected_change: expected,
        realized_change: realized,
        change_ratio_pct: (expected != 0.0).then(|| 100.0 * realized / expected),
        base_emissions: base.emissions,
        new_emissions: base.emissions + realized,
        cost_change: 0.0,
    };
    Ok((report, samples))
}
