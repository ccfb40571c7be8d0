//! Synthetic case and scenario generation for desk-scale testing.
//!
//! Cases plant three regions with distinct generation signatures:
//! `hydro_north` (cheap, clean, never exhausted), `coal_east`
//! (coal-marginal), and `solar_south` (solar-saturated midday, gas at
//! night). Inter-region ties are deliberately thin so each region keeps
//! its own marginal unit most hours. Scenarios carry seasonal and diurnal
//! load shapes and a solar capacity-factor bell peaking around noon.

use crate::grid::{
    Bus, GenKind, Generator, GridError, HourScenario, Line, LoadPoint, Network,
    DEFAULT_SHED_COST,
};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

pub const REGION_NAMES: [&str; 3] = ["hydro_north", "coal_east", "solar_south"];

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("need at least 3 buses, got {0}")]
    TooFewBuses(usize),
    #[error("need at least 6 generators (regional anchors: hydro, coal, three solar sites, gas), got {0}")]
    TooFewGenerators(usize),
    #[error("generated network failed validation: {0}")]
    Invalid(#[from] GridError),
}

#[derive(Debug, Clone, Copy)]
pub struct SynthParams {
    pub buses: usize,
    /// Requested line count; raised to the connectivity minimum if lower.
    pub lines: usize,
    pub generators: usize,
    pub seed: u64,
}

/// Region of a bus index under the fixed three-way split.
pub fn region_of(bus: usize, n_buses: usize) -> usize {
    (bus * 3 / n_buses).min(2)
}

fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    rng.random_range(lo..hi)
}

/// Connected random network with the three planted regions.
pub fn generate_case(params: &SynthParams) -> Result<Network, SynthError> {
    if params.buses < 3 {
        return Err(SynthError::TooFewBuses(params.buses));
    }
    if params.generators < 6 {
        return Err(SynthError::TooFewGenerators(params.generators));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let n = params.buses;

    let buses: Vec<Bus> = (0..n)
        .map(|i| Bus {
            id: i,
            name: format!("bus{i}"),
            region: REGION_NAMES[region_of(i, n)].to_string(),
        })
        .collect();

    // Every bus carries a load; regional demand sets capacity targets.
    let loads: Vec<LoadPoint> = (0..n)
        .map(|i| LoadPoint {
            id: i,
            bus: i,
            base_demand: uniform(&mut rng, 20.0, 60.0),
        })
        .collect();
    let mut region_demand = [0.0f64; 3];
    for l in &loads {
        region_demand[region_of(l.bus, n)] += l.base_demand;
    }

    // Topology: a random spanning tree inside each region, thin ties
    // between adjacent regions, then random intra-region extras up to the
    // requested count.
    let members: Vec<Vec<usize>> = (0..3)
        .map(|r| (0..n).filter(|&b| region_of(b, n) == r).collect())
        .collect();
    let mut pairs: Vec<(usize, usize, f64)> = Vec::new(); // from, to, limit
    let mut seen = std::collections::BTreeSet::new();
    for m in &members {
        for (k, &b) in m.iter().enumerate().skip(1) {
            let prev = m[rng.random_range(0..k)];
            seen.insert((prev.min(b), prev.max(b)));
            // Intra-region lines sized generously; they rarely congest.
            pairs.push((prev, b, uniform(&mut rng, 150.0, 400.0)));
        }
    }
    // Ties: last bus of one region to first of the next, capped thin so
    // regions keep distinct marginal units. Demand-relative sizing.
    for r in 0..2 {
        let (a, b) = (*members[r].last().unwrap(), members[r + 1][0]);
        let cap = 0.15 * region_demand[r].min(region_demand[r + 1]);
        seen.insert((a.min(b), a.max(b)));
        pairs.push((a, b, cap.max(5.0)));
    }
    {
        // One thin 0-2 tie closes the ring when all regions are nonempty.
        let (a, b) = (members[0][0], *members[2].last().unwrap());
        if seen.insert((a.min(b), a.max(b))) {
            let cap = 0.1 * region_demand[0].min(region_demand[2]);
            pairs.push((a, b, cap.max(5.0)));
        }
    }
    while pairs.len() < params.lines {
        let r = rng.random_range(0..3usize);
        if members[r].len() < 2 {
            break;
        }
        let a = members[r][rng.random_range(0..members[r].len())];
        let b = members[r][rng.random_range(0..members[r].len())];
        if a == b || !seen.insert((a.min(b), a.max(b))) {
            // Bounded retries via the loop; bail once the region is dense.
            if seen.len() >= n * (n - 1) / 2 {
                break;
            }
            continue;
        }
        pairs.push((a, b, uniform(&mut rng, 100.0, 300.0)));
    }
    let lines: Vec<Line> = pairs
        .into_iter()
        .enumerate()
        .map(|(id, (from, to, limit))| Line {
            id,
            from_bus: from,
            to_bus: to,
            susceptance: uniform(&mut rng, 5.0, 15.0),
            flow_limit: limit,
        })
        .collect();

    // Generators: regional anchors first (hydro, coal, solar + gas
    // backstop), then flavored extras. Anchor capacity guarantees a 30%
    // margin over regional peak demand (load shapes stay below 1.3x).
    let peak = |r: usize| 1.3 * region_demand[r];
    let site = |rng: &mut ChaCha8Rng, r: usize| members[r][rng.random_range(0..members[r].len())];
    let mut generators: Vec<Generator> = Vec::with_capacity(params.generators);
    let push = |generators: &mut Vec<Generator>, bus: usize, kind: GenKind, cost: f64, er: f64, cap: f64| {
        generators.push(Generator {
            id: generators.len(),
            bus,
            p_min: 0.0,
            p_max: cap,
            marginal_cost: cost,
            emission_rate: er,
            kind,
        });
    };
    let b0 = site(&mut rng, 0);
    push(&mut generators, b0, GenKind::Hydro, 5.0, 0.0, 1.5 * peak(0));
    let b1 = site(&mut rng, 1);
    push(&mut generators, b1, GenKind::Coal, 18.0, 800.0, 1.3 * peak(1));
    // Solar is spread over several sites with staggered sizes so deeper
    // insolation saturates progressively more of the region (the marginal
    // unit flips to solar bus by bus through midday)...
    for frac in [1.6, 1.0, 0.6] {
        let b2 = site(&mut rng, 2);
        push(&mut generators, b2, GenKind::Solar, 0.0, 0.0, frac * region_demand[2]);
    }
    let b3 = site(&mut rng, 2);
    // ...while gas covers the whole night with margin.
    push(&mut generators, b3, GenKind::Gas, 40.0, 450.0, 1.3 * peak(2));
    for _ in 6..params.generators {
        let r = rng.random_range(0..3usize);
        let bus = site(&mut rng, r);
        let cap = uniform(&mut rng, 20.0, 80.0);
        match r {
            0 => push(&mut generators, bus, GenKind::Hydro, uniform(&mut rng, 3.0, 8.0), 0.0, cap),
            1 => {
                if rng.random_range(0.0..1.0) < 0.7 {
                    push(&mut generators, bus, GenKind::Coal, uniform(&mut rng, 15.0, 22.0), 800.0, cap)
                } else {
                    push(&mut generators, bus, GenKind::Gas, uniform(&mut rng, 35.0, 45.0), 450.0, cap)
                }
            }
            _ => {
                if rng.random_range(0.0..1.0) < 0.5 {
                    push(&mut generators, bus, GenKind::Solar, 0.0, 0.0, cap)
                } else {
                    push(&mut generators, bus, GenKind::Gas, uniform(&mut rng, 35.0, 45.0), 450.0, cap)
                }
            }
        }
    }

    let network = Network {
        buses,
        lines,
        generators,
        loads,
        shed_cost: DEFAULT_SHED_COST,
    };
    network.validate()?;
    Ok(network)
}

/// Clear-sky solar shape by hour of day: a sine bell over 07:00-17:00.
pub fn solar_shape(hour_of_day: usize) -> f64 {
    let h = hour_of_day as f64;
    if (7.0..=17.0).contains(&h) {
        (std::f64::consts::PI * (h - 7.0) / 10.0).sin()
    } else {
        0.0
    }
}

fn load_shape(hour: usize) -> f64 {
    let hod = (hour % 24) as f64;
    let day = ((hour / 24) % 365) as f64;
    // Summer-peaking season (max near day 196) and an evening-peaking day.
    let seasonal = 1.0 + 0.15 * (2.0 * std::f64::consts::PI * (day - 196.0) / 365.0).cos();
    let diurnal = 0.85 + 0.2 * (std::f64::consts::PI * (hod - 5.0) / 19.0).sin().max(0.0);
    seasonal * diurnal
}

/// Hourly multipliers: shaped loads with small noise, solar bells with
/// seasonal amplitude, noisy wind. Deterministic in the seed.
pub fn generate_scenarios(network: &Network, hours: usize, seed: u64) -> Vec<HourScenario> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(0x5ce9a710));
    let vre_ids = network.vre_generator_ids();
    (0..hours)
        .map(|hour| {
            let base = load_shape(hour);
            let load_scale = network
                .loads
                .iter()
                .map(|_| (base * (1.0 + uniform(&mut rng, -0.05, 0.05))).max(0.0))
                .collect();
            let day = ((hour / 24) % 365) as f64;
            let season =
                0.8 + 0.2 * (2.0 * std::f64::consts::PI * (day - 172.0) / 365.0).cos();
            let vre_capacity_factor = vre_ids
                .iter()
                .map(|&g| match network.generators[g].kind {
                    GenKind::Solar => {
                        (solar_shape(hour % 24) * season * (1.0 + uniform(&mut rng, -0.08, 0.0)))
                            .clamp(0.0, 1.0)
                    }
                    _ => uniform(&mut rng, 0.2, 0.8),
                })
                .collect();
            HourScenario {
                hour_index: hour,
                load_scale,
                vre_capacity_factor,
            }
        })
        .collect()
}
