//! LME-based carbon accounts and the accounting balance check.
//!
//! Each hour attributes the system's scope-1 emissions to loads
//! (`LME × demand`), generators (`(rate − LME) × output`), and lines
//! (`SCI × |flow|`). For a non-degenerate hour the three groups sum to the
//! scope-1 total; the gap is reported as a residual, never dropped.
//! Aggregation excludes hours whose total shed exceeds a threshold.

use crate::dispatch::TwoTierResult;
use crate::grid::{GenKind, HourCase, Network};
use crate::sensitivity::HourSensitivity;
use std::collections::BTreeMap;
use thiserror::Error;

/// Hours shedding more than this many MWh are excluded from aggregates.
pub const SHED_FILTER_THRESHOLD_MWH: f64 = 100.0;
/// Relative residual tolerance of the accounting balance.
pub const BALANCE_TOL: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum AccountingError {
    #[error("sensitivity record is for hour {sens} but case is hour {case}")]
    HourMismatch { sens: usize, case: usize },
}

/// Per-entity carbon accounts, either for one hour or aggregated.
#[derive(Debug, Clone, PartialEq)]
pub struct CarbonAccounts {
    /// kgCO2 per load point.
    pub load_account: Vec<f64>,
    /// kgCO2 per generator; negative means the unit abates relative to the
    /// marginal emissions at its bus.
    pub gen_account: Vec<f64>,
    /// kgCO2 per line, from SCI times flow magnitude.
    pub line_account: Vec<f64>,
    /// kgCO2 actually emitted (stage-2 dispatch).
    pub scope1: f64,
    /// Sum of all accounts minus scope1.
    pub residual: f64,
    pub hours_included: usize,
    pub hours_filtered: usize,
}

impl CarbonAccounts {
    pub fn load_total(&self) -> f64 {
        self.load_account.iter().sum()
    }

    pub fn gen_total(&self) -> f64 {
        self.gen_account.iter().sum()
    }

    pub fn line_total(&self) -> f64 {
        self.line_account.iter().sum()
    }
}

/// Sum of all accounts minus scope1 (recomputed, not the stored field).
pub fn balance_residual(accounts: &CarbonAccounts) -> f64 {
    accounts.load_total() + accounts.gen_total() + accounts.line_total() - accounts.scope1
}

/// Single-hour accounts from a solved case and its sensitivities.
pub fn hour_accounts(
    case: &HourCase,
    result: &TwoTierResult,
    sens: &HourSensitivity,
) -> Result<CarbonAccounts, AccountingError> {
    if sens.hour != case.hour {
        return Err(AccountingError::HourMismatch {
            sens: sens.hour,
            case: case.hour,
        });
    }
    let net = case.network;
    let dispatch = &result.stage2.solution;

    let load_account: Vec<f64> = net
        .loads
        .iter()
        .enumerate()
        .map(|(li, l)| sens.lme[l.bus] * case.per_load_demand[li])
        .collect();
    let gen_account: Vec<f64> = net
        .generators
        .iter()
        .enumerate()
        .map(|(gi, g)| (g.emission_rate - sens.lme[g.bus]) * dispatch.generation[gi])
        .collect();
    let line_account: Vec<f64> = net
        .lines
        .iter()
        .enumerate()
        .map(|(li, _)| sens.sci[li] * dispatch.flow[li].abs())
        .collect();

    let scope1 = dispatch.emissions;
    let mut accounts = CarbonAccounts {
        load_account,
        gen_account,
        line_account,
        scope1,
        residual: 0.0,
        hours_included: 1,
        hours_filtered: 0,
    };
    accounts.residual = balance_residual(&accounts);
    Ok(accounts)
}

/// Sum hourly accounts, skipping hours whose shed exceeds the threshold.
/// `shed_by_hour` holds total stage-2 shed in MWh, one entry per account.
pub fn aggregate_accounts(
    hourly: &[CarbonAccounts],
    shed_by_hour: &[f64],
    shed_filter_threshold: f64,
) -> CarbonAccounts {
    assert_eq!(hourly.len(), shed_by_hour.len());
    let template = |h: &CarbonAccounts| CarbonAccounts {
        load_account: vec![0.0; h.load_account.len()],
        gen_account: vec![0.0; h.gen_account.len()],
        line_account: vec![0.0; h.line_account.len()],
        scope1: 0.0,
        residual: 0.0,
        hours_included: 0,
        hours_filtered: 0,
    };
    let mut total = hourly.first().map(template).unwrap_or(CarbonAccounts {
        load_account: vec![],
        gen_account: vec![],
        line_account: vec![],
        scope1: 0.0,
        residual: 0.0,
        hours_included: 0,
        hours_filtered: 0,
    });
    for (h, &shed) in hourly.iter().zip(shed_by_hour) {
        if shed > shed_filter_threshold {
            total.hours_filtered += 1;
            continue;
        }
        for (t, v) in total.load_account.iter_mut().zip(&h.load_account) {
            *t += v;
        }
        for (t, v) in total.gen_account.iter_mut().zip(&h.gen_account) {
            *t += v;
        }
        for (t, v) in total.line_account.iter_mut().zip(&h.line_account) {
            *t += v;
        }
        total.scope1 += h.scope1;
        total.residual += h.residual;
        total.hours_included += 1;
    }
    total
}

/// Generator accounts grouped by fuel kind; groups partition the total.
pub fn gen_accounts_by_kind(accounts: &CarbonAccounts, net: &Network) -> BTreeMap<GenKind, f64> {
    let mut map = BTreeMap::new();
    for (gi, g) in net.generators.iter().enumerate() {
        *map.entry(g.kind).or_insert(0.0) += accounts.gen_account[gi];
    }
    map
}

/// Per-region load and generator accounts keyed by the bus region tag.
pub fn accounts_by_region(
    accounts: &CarbonAccounts,
    net: &Network,
) -> BTreeMap<String, (f64, f64)> {
    let mut map: BTreeMap<String, (f64, f64)> = BTreeMap::new();
    for (li, l) in net.loads.iter().enumerate() {
        map.entry(net.buses[l.bus].region.clone()).or_default().0 += accounts.load_account[li];
    }
    for (gi, g) in net.generators.iter().enumerate() {
        map.entry(net.buses[g.bus].region.clone()).or_default().1 += accounts.gen_account[gi];
    }
    map
}

/// Hours whose recomputed residual exceeds `balance_tol` relative to
/// scope1 (floored at 1 kg), with the residual values: the degeneracy
/// ledger. Indexes parallel `hourly`.
pub fn residual_ledger(hourly: &[CarbonAccounts], balance_tol: f64) -> Vec<(usize, f64)> {
    hourly
        .iter()
        .enumerate()
        .filter_map(|(i, h)| {
            let r = balance_residual(h);
            (r.abs() > balance_tol * h.scope1.abs().max(1.0)).then_some((i, r))
        })
        .collect()
}
