//! Locational marginal emissions (LMEs) and shadow carbon intensities
//! (SCIs) for a solved two-tier dispatch.
//!
//! The dual-based LME chains stage-2 sensitivities through the cost cap:
//! a marginal MW of demand at bus n moves the stage-2 balance rhs and shed
//! cap directly, and moves the cap rhs with the stage-1 marginal cost. The
//! cap's `(1 + cost_cap_tol)` slack factor is deliberately left out of the
//! chain; it perturbs the true parametric derivative at relative order
//! `cost_cap_tol`, far inside `fd_agree_tol`. Symmetrically for SCIs with
//! line limits. A forward-difference oracle (full two-tier re-solve)
//! spot-checks the duals; disagreement marks the value degenerate and
//! replaces it with the FD estimate.

use crate::dispatch::{lexicographic_dispatch, DispatchConfig, DispatchError, TwoTierResult};
use crate::grid::HourCase;
use rand::Rng;

/// MW perturbation for finite-difference checks.
pub const DEFAULT_FD_EPSILON: f64 = 0.1;
/// Relative dual-vs-FD disagreement beyond which a value is flagged.
pub const DEFAULT_FD_AGREE_TOL: f64 = 1e-3;

#[derive(Debug, Clone, Copy)]
pub struct SensitivityConfig {
    pub dispatch: DispatchConfig,
    pub fd_epsilon: f64,
    pub fd_agree_tol: f64,
    /// Probability that any given bus or line is FD spot-checked.
    pub spot_check_rate: f64,
}

impl Default for SensitivityConfig {
    fn default() -> Self {
        SensitivityConfig {
            dispatch: DispatchConfig::default(),
            fd_epsilon: DEFAULT_FD_EPSILON,
            fd_agree_tol: DEFAULT_FD_AGREE_TOL,
            spot_check_rate: 0.05,
        }
    }
}

/// Per-hour sensitivities; `lme`/`lmp` per bus, `sci` per line. Flagged
/// entries failed the FD agreement check and hold the FD value instead.
#[derive(Debug, Clone, PartialEq)]
pub struct HourSensitivity {
    pub hour: usize,
    pub lmp: Vec<f64>,
    pub lme: Vec<f64>,
    pub sci: Vec<f64>,
    pub lme_flagged: Vec<bool>,
    pub sci_flagged: Vec<bool>,
    pub checked_buses: Vec<usize>,
    pub checked_lines: Vec<usize>,
}

/// kgCO2 per marginal MWh of demand at each bus, from the solved duals.
pub fn lme_from_duals(r: &TwoTierResult) -> Vec<f64> {
    let chain = r.stage2.duals.cost_cap;
    (0..r.stage2.duals.balance.len())
        .map(|n| {
            let stage2 = r.stage2.duals.balance[n] + r.stage2.duals.shed_upper_grad[n];
            let stage1 = r.stage1.duals.balance[n] + r.stage1.duals.shed_upper_grad[n];
            stage2 + chain * stage1
        })
        .collect()
}

/// kgCO2 per marginal MW of capacity on each line, from the solved duals.
pub fn sci_from_duals(r: &TwoTierResult) -> Vec<f64> {
    let chain = r.stage2.duals.cost_cap;
    (0..r.stage2.duals.line_limit_grad.len())
        .map(|l| r.stage2.duals.line_limit_grad[l] + chain * r.stage1.duals.line_limit_grad[l])
        .collect()
}

/// Forward-difference LME at one bus: full two-tier re-solve with
/// `fd_epsilon` extra MW of demand there.
pub fn lme_fd(
    case: &HourCase,
    bus: usize,
    base_emissions: f64,
    config: &SensitivityConfig,
) -> Result<f64, DispatchError> {
    let mut bumped = case.clone();
    bumped.bus_demand[bus] += config.fd_epsilon;
    let r = lexicographic_dispatch(&bumped, &config.dispatch)?;
    Ok((r.stage2.solution.emissions - base_emissions) / config.fd_epsilon)
}

/// Forward-difference SCI at one line: re-solve with the limit relaxed by
/// `fd_epsilon` MW.
pub fn sci_fd(
    case: &HourCase,
    line: usize,
    base_emissions: f64,
    config: &SensitivityConfig,
) -> Result<f64, DispatchError> {
    let mut net = case.network.clone();
    net.lines[line].flow_limit += config.fd_epsilon;
    let bumped = HourCase {
        network: &net,
        hour: case.hour,
        per_load_demand: case.per_load_demand.clone(),
        bus_demand: case.bus_demand.clone(),
        effective_pmax: case.effective_pmax.clone(),
    };
    let r = lexicographic_dispatch(&bumped, &config.dispatch)?;
    Ok((r.stage2.solution.emissions - base_emissions) / config.fd_epsilon)
}

fn disagrees(dual: f64, fd: f64, tol: f64) -> bool {
    (dual - fd).abs() > tol * fd.abs().max(1.0)
}

/// Dual-based sensitivities with randomized FD spot checks. The RNG drives
/// only which buses/lines are checked, so results are reproducible for a
/// fixed seed.
pub fn hour_sensitivities(
    case: &HourCase,
    result: &TwoTierResult,
    config: &SensitivityConfig,
    rng: &mut impl Rng,
) -> Result<HourSensitivity, DispatchError> {
    let n = case.network.buses.len();
    let l = case.network.lines.len();
    let base = result.stage2.solution.emissions;
    let mut lme = lme_from_duals(result);
    let mut sci = sci_from_duals(result);
    let mut lme_flagged = vec![false; n];
    let mut sci_flagged = vec![false; l];
    let mut checked_buses = Vec::new();
    let mut checked_lines = Vec::new();

    for bus in 0..n {
        if rng.random_range(0.0..1.0) >= config.spot_check_rate {
            continue;
        }
        checked_buses.push(bus);
        let fd = lme_fd(case, bus, base, config)?;
        if disagrees(lme[bus], fd, config.fd_agree_tol) {
            lme_flagged[bus] = true;
            lme[bus] = fd;
        }
    }
    for line in 0..l {
        if rng.random_range(0.0..1.0) >= config.spot_check_rate {
            continue;
        }
        checked_lines.push(line);
        let fd = sci_fd(case, line, base, config)?;
        if disagrees(sci[line], fd, config.fd_agree_tol) {
            sci_flagged[line] = true;
            sci[line] = fd;
        }
    }

    Ok(HourSensitivity {
        hour: case.hour,
        lmp: result.stage1.duals.balance.clone(),
        lme,
        sci,
        lme_flagged,
        sci_flagged,
        checked_buses,
        checked_lines,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{Bus, GenKind, Generator, Line, LoadPoint, Network, DEFAULT_SHED_COST};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn bus(id: usize) -> Bus {
        Bus {
            id,
            name: format!("b{id}"),
            region: "r".into(),
        }
    }

    fn gen(id: usize, bus: usize, cost: f64, er: f64, cap: f64, kind: GenKind) -> Generator {
        Generator {
            id,
            bus,
            p_min: 0.0,
            p_max: cap,
            marginal_cost: cost,
            emission_rate: er,
            kind,
        }
    }

    fn line(id: usize, from: usize, to: usize, limit: f64) -> Line {
        Line {
            id,
            from_bus: from,
            to_bus: to,
            susceptance: 10.0,
            flow_limit: limit,
        }
    }

    fn solve(net: &Network) -> (TwoTierResult, Vec<f64>, Vec<f64>) {
        let case = HourCase::nominal(net, 0);
        let r = lexicographic_dispatch(&case, &DispatchConfig::default()).unwrap();
        let lme = lme_from_duals(&r);
        let sci = sci_from_duals(&r);
        (r, lme, sci)
    }

    fn fd_all(net: &Network) -> (Vec<f64>, Vec<f64>) {
        let cfg = SensitivityConfig::default();
        let case = HourCase::nominal(net, 0);
        let base = lexicographic_dispatch(&case, &cfg.dispatch)
            .unwrap()
            .stage2
            .solution
            .emissions;
        let lme = (0..net.buses.len())
            .map(|b| lme_fd(&case, b, base, &cfg).unwrap())
            .collect();
        let sci = (0..net.lines.len())
            .map(|l| sci_fd(&case, l, base, &cfg).unwrap())
            .collect();
        (lme, sci)
    }

    #[test]
    fn marginal_gas_sets_lme_at_its_rate() {
        let net = Network {
            buses: vec![bus(0)],
            lines: vec![],
            generators: vec![gen(0, 0, 40.0, 450.0, 100.0, GenKind::Gas)],
            loads: vec![LoadPoint {
                id: 0,
                bus: 0,
                base_demand: 60.0,
            }],
            shed_cost: DEFAULT_SHED_COST,
        };
        let (_, lme, _) = solve(&net);
        let (fd, _) = fd_all(&net);
        assert!((lme[0] - 450.0).abs() < 1e-3, "dual lme {}", lme[0]);
        assert!((fd[0] - 450.0).abs() < 1e-3, "fd lme {}", fd[0]);
    }

    #[test]
    fn marginal_coal_behind_hydro_base_sets_lme() {
        // Hydro (30 MW, cheap, clean) runs flat out; coal takes the margin.
        let net = Network {
            buses: vec![bus(0)],
            lines: vec![],
            generators: vec![
                gen(0, 0, 5.0, 0.0, 30.0, GenKind::Hydro),
                gen(1, 0, 20.0, 800.0, 100.0, GenKind::Coal),
            ],
            loads: vec![LoadPoint {
                id: 0,
                bus: 0,
                base_demand: 70.0,
            }],
            shed_cost: DEFAULT_SHED_COST,
        };
        let (_, lme, _) = solve(&net);
        let (fd, _) = fd_all(&net);
        assert!((lme[0] - 800.0).abs() < 1e-3);
        assert!((fd[0] - 800.0).abs() < 1e-3);
    }

    /// Counterflow relief can make an LME negative: load at bus 0 relieves
    /// the congested 0-2 line (its withdrawal PTDF is twice the wind
    /// export's), so each added MW admits 2 MW of wind and backs off 1 MW
    /// of coal.
    #[test]
    fn counterflow_load_earns_negative_lme() {
        let net = Network {
            buses: vec![bus(0), bus(1), bus(2)],
            lines: vec![
                line(0, 0, 1, 1000.0),
                line(1, 0, 2, 10.0),
                line(2, 1, 2, 1000.0),
            ],
            generators: vec![
                gen(0, 1, 0.0, 0.0, 200.0, GenKind::Wind),
                gen(1, 2, 20.0, 800.0, 200.0, GenKind::Coal),
            ],
            loads: vec![LoadPoint {
                id: 0,
                bus: 2,
                base_demand: 90.0,
            }],
            shed_cost: DEFAULT_SHED_COST,
        };
        // Equal susceptances: wind at bus 1 loads line 0-2 with 1/3 of its
        // output, so the 10 MW limit caps wind at 30 MW and coal serves 60.
        let (r, lme, _) = solve(&net);
        assert!((r.stage1.solution.generation[0] - 30.0).abs() < 1e-6);
        assert!((r.stage1.solution.generation[1] - 60.0).abs() < 1e-6);
        let (fd, _) = fd_all(&net);
        assert!(lme[0] < 0.0, "lme {}", lme[0]);
        assert!((lme[0] + 800.0).abs() < 1e-1, "dual lme {}", lme[0]);
        assert!((fd[0] + 800.0).abs() < 1e-1, "fd lme {}", fd[0]);
        assert!((lme[0] - fd[0]).abs() < 1e-3);
    }

    /// Relaxing a limit that bottlenecks clean imports displaces marginal
    /// gas one-for-one: SCI = -450.
    #[test]
    fn sci_of_clean_import_bottleneck() {
        let net = Network {
            buses: vec![bus(0), bus(1)],
            lines: vec![line(0, 0, 1, 50.0)],
            generators: vec![
                gen(0, 0, 0.0, 0.0, 200.0, GenKind::Wind),
                gen(1, 1, 40.0, 450.0, 200.0, GenKind::Gas),
            ],
            loads: vec![LoadPoint {
                id: 0,
                bus: 1,
                base_demand: 100.0,
            }],
            shed_cost: DEFAULT_SHED_COST,
        };
        let (_, _, sci) = solve(&net);
        let (_, fd) = fd_all(&net);
        assert!((sci[0] + 450.0).abs() < 1e-4, "dual sci {}", sci[0]);
        assert!((fd[0] + 450.0).abs() < 1e-4, "fd sci {}", fd[0]);
    }

    /// Relaxing a limit that bottlenecks cheap coal lets it displace gas:
    /// SCI = 800 - 450 = +350.
    #[test]
    fn sci_of_dirty_import_bottleneck() {
        let net = Network {
            buses: vec![bus(0), bus(1)],
            lines: vec![line(0, 0, 1, 30.0)],
            generators: vec![
                gen(0, 0, 20.0, 800.0, 200.0, GenKind::Coal),
                gen(1, 1, 40.0, 450.0, 200.0, GenKind::Gas),
            ],
            loads: vec![LoadPoint {
                id: 0,
                bus: 1,
                base_demand: 100.0,
            }],
            shed_cost: DEFAULT_SHED_COST,
        };
        let (_, _, sci) = solve(&net);
        let (_, fd) = fd_all(&net);
        assert!((sci[0] - 350.0).abs() < 1e-4, "dual sci {}", sci[0]);
        // FD sees the cap's tolerance slack feed cost savings back into
        // emissions, a cost_cap_tol-scale wrinkle the dual path omits.
        assert!((fd[0] - 350.0).abs() < 1e-3, "fd sci {}", fd[0]);
    }

    /// LMEs and SCIs are linear in emission rates: scaling every rate by
    /// alpha scales every sensitivity by alpha.
    #[test]
    fn sensitivities_scale_with_emission_rates() {
        let mut net = Network {
            buses: vec![bus(0), bus(1)],
            lines: vec![line(0, 0, 1, 30.0)],
            generators: vec![
                gen(0, 0, 20.0, 800.0, 200.0, GenKind::Coal),
                gen(1, 1, 40.0, 450.0, 200.0, GenKind::Gas),
            ],
            loads: vec![LoadPoint {
                id: 0,
                bus: 1,
                base_demand: 100.0,
            }],
            shed_cost: DEFAULT_SHED_COST,
        };
        let (_, lme1, sci1) = solve(&net);
        let alpha = 2.5;
        for g in &mut net.generators {
            g.emission_rate *= alpha;
        }
        let (_, lme2, sci2) = solve(&net);
        for (a, b) in lme1.iter().zip(&lme2) {
            assert!((a * alpha - b).abs() < 1e-6 * (1.0 + b.abs()));
        }
        for (a, b) in sci1.iter().zip(&sci2) {
            assert!((a * alpha - b).abs() < 1e-6 * (1.0 + b.abs()));
        }
    }

    #[test]
    fn spot_checks_pass_and_are_deterministic() {
        let json = std::fs::read_to_string(concat!(
            env!("CARGO_MANIFEST_DIR"),
            "/fixtures/fivebus.json"
        ))
        .unwrap();
        let net = crate::grid::parse_case(json.as_bytes(), crate::grid::CaseFormat::Json).unwrap();
        let case = HourCase::nominal(&net, 0);
        let cfg = SensitivityConfig {
            spot_check_rate: 1.0,
            ..SensitivityConfig::default()
        };
        let r = lexicographic_dispatch(&case, &cfg.dispatch).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = hour_sensitivities(&case, &r, &cfg, &mut rng).unwrap();
        assert_eq!(a.checked_buses.len(), net.buses.len());
        assert!(!a.lme_flagged.iter().any(|&f| f), "flags: {:?}", a.lme);
        assert!(!a.sci_flagged.iter().any(|&f| f), "flags: {:?}", a.sci);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let b = hour_sensitivities(&case, &r, &cfg, &mut rng).unwrap();
        assert_eq!(a, b);
    }
}
