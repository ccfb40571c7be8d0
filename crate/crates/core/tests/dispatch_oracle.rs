//! Cross-checks the DC-OPF against the independent tableau oracle on the
//! bundled fixtures: objectives and dispatch quantities must agree.

mod common;

use carbonflow::dispatch::{
    build_dcopf, lexicographic_dispatch, solve_dcopf, DispatchConfig, StageObjective,
};
use carbonflow::grid::{parse_case, CaseFormat, HourCase, Network};
use common::{oracle_solve, OracleResult};

fn fixture(name: &str) -> Network {
    let path = format!("{}/fixtures/{name}.json", env!("CARGO_MANIFEST_DIR"));
    let json = std::fs::read_to_string(path).unwrap();
    parse_case(json.as_bytes(), CaseFormat::Json).unwrap()
}

/// Both fixtures have strictly ordered marginal costs, so the stage-1
/// generation vector is unique and must match the oracle's point, not just
/// its objective.
#[test]
fn stage_one_matches_oracle_on_fixtures() {
    for name in ["threebus", "fivebus"] {
        let net = fixture(name);
        let case = HourCase::nominal(&net, 0);
        let r = solve_dcopf(&case, &DispatchConfig::default()).unwrap();
        let opf = build_dcopf(&case, StageObjective::Cost, None);
        let OracleResult::Optimal(obj, x) = oracle_solve(&opf.problem) else {
            panic!("{name}: oracle did not find an optimum");
        };
        assert!(
            (obj - r.solution.dispatch_cost).abs() <= 1e-6 * (1.0 + obj.abs()),
            "{name}: cost {} vs oracle {obj}",
            r.solution.dispatch_cost
        );
        for (gi, &v) in opf.gen_vars.iter().enumerate() {
            assert!(
                (x[v.index()] - r.solution.generation[gi]).abs() <= 1e-6,
                "{name}: gen {gi}: {} vs oracle {}",
                r.solution.generation[gi],
                x[v.index()]
            );
        }
        for (li, &v) in opf.flow_vars.iter().enumerate() {
            assert!(
                (x[v.index()] - r.solution.flow[li]).abs() <= 1e-6,
                "{name}: flow {li}"
            );
        }
        for (bi, &v) in opf.shed_vars.iter().enumerate() {
            assert!(
                (x[v.index()] - r.solution.shed[bi]).abs() <= 1e-6,
                "{name}: shed {bi}"
            );
        }
    }
}

#[test]
fn stage_two_objective_matches_oracle_on_fixtures() {
    for name in ["threebus", "fivebus"] {
        let net = fixture(name);
        let case = HourCase::nominal(&net, 0);
        let r = lexicographic_dispatch(&case, &DispatchConfig::default()).unwrap();
        let opf = build_dcopf(&case, StageObjective::Emissions, Some(r.cost_cap));
        let OracleResult::Optimal(obj, _) = oracle_solve(&opf.problem) else {
            panic!("{name}: oracle did not find an optimum");
        };
        assert!(
            (obj - r.stage2.solution.emissions).abs() <= 1e-6 * (1.0 + obj.abs()),
            "{name}: emissions {} vs oracle {obj}",
            r.stage2.solution.emissions
        );
    }
}

/// Stage-1 balance duals must predict the cost of a marginal MW of demand
/// at each bus (forward difference on a full re-solve).
#[test]
fn lmps_match_finite_difference_on_fixtures() {
    let eps = 0.1;
    for name in ["threebus", "fivebus"] {
        let net = fixture(name);
        let case = HourCase::nominal(&net, 0);
        let base = solve_dcopf(&case, &DispatchConfig::default()).unwrap();
        for bi in 0..net.buses.len() {
            let mut bumped = case.clone();
            bumped.bus_demand[bi] += eps;
            let up = solve_dcopf(&bumped, &DispatchConfig::default()).unwrap();
            let fd = (up.solution.dispatch_cost - base.solution.dispatch_cost) / eps;
            assert!(
                (fd - base.duals.balance[bi]).abs() <= 1e-6 * (1.0 + fd.abs()),
                "{name}: bus {bi}: fd {fd} vs dual {}",
                base.duals.balance[bi]
            );
        }
    }
}
