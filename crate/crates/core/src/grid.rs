//! Static grid data model, case-file ingestion and hourly scenario application.
//!
//! A [`Network`] holds the topology (buses, lines, generators, loads) that is
//! fixed over the simulation horizon. Per-hour variation enters through
//! [`HourScenario`] multipliers (nodal load scaling, VRE capacity factors),
//! which [`apply_scenario`] turns into a solvable [`HourCase`].

use std::collections::{BTreeMap, HashSet};
use std::io::Read;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default load-shed penalty, $/MWh. Must dominate every generator cost so
/// shedding is a last resort.
pub const DEFAULT_SHED_COST: f64 = 10_000.0;

#[derive(Debug, Error)]
pub enum GridError {
    #[error("case JSON is malformed: {0}")]
    Json(#[from] serde_json::Error),
    #[error("case CSV is malformed: {0}")]
    Csv(#[from] csv::Error),
    #[error("i/o error reading case: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv bundle is missing section [{0}]")]
    MissingSection(&'static str),
    #[error("csv bundle has an unknown section header {0:?}")]
    UnknownSection(String),
    #[error("{entity} {id} references bus {bus}, which does not exist")]
    DanglingBus {
        entity: &'static str,
        id: usize,
        bus: usize,
    },
    #[error("duplicate {entity} id {id}")]
    DuplicateId { entity: &'static str, id: usize },
    #[error("{entity} {id}: {message}")]
    InvalidEntity {
        entity: &'static str,
        id: usize,
        message: String,
    },
    #[error("network graph is disconnected: bus {bus} is unreachable from bus {reference}")]
    Disconnected { bus: usize, reference: usize },
    #[error("shed cost {shed_cost} does not exceed the marginal cost {cost} of generator {id}")]
    ShedCostTooLow { shed_cost: f64, cost: f64, id: usize },
    #[error("network has no buses")]
    Empty,
    #[error("scenario row {row}, column {column}: {message}")]
    ScenarioValue {
        row: usize,
        column: String,
        message: String,
    },
    #[error("scenario file is missing column {0:?}")]
    ScenarioMissingColumn(String),
    #[error("scenario rows out of order: expected hour {expected}, found {found}")]
    ScenarioHourOrder { expected: usize, found: usize },
    #[error("scenario does not cover {entity} {id}")]
    ScenarioMissingMultiplier { entity: &'static str, id: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bus {
    pub id: usize,
    pub name: String,
    /// Opaque region tag used only for aggregation and reporting.
    pub region: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Line {
    pub id: usize,
    pub from_bus: usize,
    pub to_bus: usize,
    /// MW per radian.
    pub susceptance: f64,
    /// MW, symmetric limit on signed flow.
    pub flow_limit: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GenKind {
    Coal,
    Gas,
    Nuclear,
    Wind,
    Solar,
    Hydro,
}

impl GenKind {
    pub const ALL: [GenKind; 6] = [
        GenKind::Coal,
        GenKind::Gas,
        GenKind::Nuclear,
        GenKind::Wind,
        GenKind::Solar,
        GenKind::Hydro,
    ];

    /// Variable renewables are dispatched against an hourly capacity factor.
    pub fn is_vre(self) -> bool {
        matches!(self, GenKind::Wind | GenKind::Solar)
    }

    pub fn is_zero_emission(self) -> bool {
        !matches!(self, GenKind::Coal | GenKind::Gas)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            GenKind::Coal => "coal",
            GenKind::Gas => "gas",
            GenKind::Nuclear => "nuclear",
            GenKind::Wind => "wind",
            GenKind::Solar => "solar",
            GenKind::Hydro => "hydro",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Generator {
    pub id: usize,
    pub bus: usize,
    pub p_min: f64,
    pub p_max: f64,
    /// $/MWh.
    pub marginal_cost: f64,
    /// kgCO2/MWh.
    pub emission_rate: f64,
    pub kind: GenKind,
}

impl Generator {
    pub fn is_vre(&self) -> bool {
        self.kind.is_vre()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoadPoint {
    pub id: usize,
    pub bus: usize,
    /// MW before scenario scaling.
    pub base_demand: f64,
}

/// Immutable grid topology. Safe to share read-only across workers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network {
    pub buses: Vec<Bus>,
    pub lines: Vec<Line>,
    pub generators: Vec<Generator>,
    pub loads: Vec<LoadPoint>,
    pub shed_cost: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CaseFormat {
    Json,
    CsvBundle,
}

/// One dispatch period's multipliers.
#[derive(Debug, Clone, PartialEq)]
pub struct HourScenario {
    pub hour_index: usize,
    /// One entry per load, indexed by load id.
    pub load_scale: Vec<f64>,
    /// One entry per VRE generator, in `Network::vre_generator_ids` order.
    pub vre_capacity_factor: Vec<f64>,
}

/// A solvable dispatch period: scenario multipliers applied to the network.
#[derive(Debug, Clone)]
pub struct HourCase<'a> {
    pub network: &'a Network,
    pub hour: usize,
    /// MW per load after scaling (plus any added constant loads).
    pub per_load_demand: Vec<f64>,
    /// MW aggregated per bus; defines nodal balance and shed bounds.
    pub bus_demand: Vec<f64>,
    /// MW per generator after VRE derating.
    pub effective_pmax: Vec<f64>,
}

impl Network {
    /// Ids of VRE generators in ascending order; scenario capacity factors
    /// follow this ordering.
    pub fn vre_generator_ids(&self) -> Vec<usize> {
        self.generators
            .iter()
            .filter(|g| g.is_vre())
            .map(|g| g.id)
            .collect()
    }

    pub fn total_base_demand(&self) -> f64 {
        self.loads.iter().map(|l| l.base_demand).sum()
    }

    /// Generators attached to each bus, indexed by bus id.
    pub fn generators_by_bus(&self) -> Vec<Vec<usize>> {
        let mut by_bus = vec![Vec::new(); self.buses.len()];
        for g in &self.generators {
            by_bus[g.bus].push(g.id);
        }
        by_bus
    }

    pub fn validate(&self) -> Result<(), GridError> {
        if self.buses.is_empty() {
            return Err(GridError::Empty);
        }
        let n = self.buses.len();
        for line in &self.lines {
            if line.from_bus >= n {
                return Err(GridError::DanglingBus {
                    entity: "line",
                    id: line.id,
                    bus: line.from_bus,
                });
            }
            if line.to_bus >= n {
                return Err(GridError::DanglingBus {
                    entity: "line",
                    id: line.id,
                    bus: line.to_bus,
                });
            }
            if line.from_bus == line.to_bus {
                return Err(GridError::InvalidEntity {
                    entity: "line",
                    id: line.id,
                    message: "connects a bus to itself".into(),
                });
            }
            if !(line.susceptance > 0.0) || !line.susceptance.is_finite() {
                return Err(GridError::InvalidEntity {
                    entity: "line",
                    id: line.id,
                    message: format!("susceptance {} must be positive", line.susceptance),
                });
            }
            if !(line.flow_limit > 0.0) {
                return Err(GridError::InvalidEntity {
                    entity: "line",
                    id: line.id,
                    message: format!("flow limit {} must be positive", line.flow_limit),
                });
            }
        }
        for g in &self.generators {
            if g.bus >= n {
                return Err(GridError::DanglingBus {
                    entity: "generator",
                    id: g.id,
                    bus: g.bus,
                });
            }
            if !(0.0 <= g.p_min && g.p_min <= g.p_max) {
                return Err(GridError::InvalidEntity {
                    entity: "generator",
                    id: g.id,
                    message: format!("bounds must satisfy 0 <= p_min <= p_max, got [{}, {}]", g.p_min, g.p_max),
                });
            }
            if g.emission_rate < 0.0 {
                return Err(GridError::InvalidEntity {
                    entity: "generator",
                    id: g.id,
                    message: format!("emission rate {} must be non-negative", g.emission_rate),
                });
            }
            if g.kind.is_zero_emission() && g.emission_rate != 0.0 {
                return Err(GridError::InvalidEntity {
                    entity: "generator",
                    id: g.id,
                    message: format!(
                        "{} generators must have zero emission rate, got {}",
                        g.kind.as_str(),
                        g.emission_rate
                    ),
                });
            }
            if self.shed_cost <= g.marginal_cost {
                return Err(GridError::ShedCostTooLow {
                    shed_cost: self.shed_cost,
                    cost: g.marginal_cost,
                    id: g.id,
                });
            }
        }
        for l in &self.loads {
            if l.bus >= n {
                return Err(GridError::DanglingBus {
                    entity: "load",
                    id: l.id,
                    bus: l.bus,
                });
            }
            if l.base_demand < 0.0 {
                return Err(GridError::InvalidEntity {
                    entity: "load",
                    id: l.id,
                    message: format!("base demand {} must be non-negative", l.base_demand),
                });
            }
        }
        // Single synchronous area: every bus reachable from bus 0.
        let mut adj = vec![Vec::new(); n];
        for line in &self.lines {
            adj[line.from_bus].push(line.to_bus);
            adj[line.to_bus].push(line.from_bus);
        }
        let mut seen = vec![false; n];
        let mut stack = vec![0usize];
        seen[0] = true;
        while let Some(b) = stack.pop() {
            for &nb in &adj[b] {
                if !seen[nb] {
                    seen[nb] = true;
                    stack.push(nb);
                }
            }
        }
        if let Some(bus) = seen.iter().position(|s| !s) {
            return Err(GridError::Disconnected { bus, reference: 0 });
        }
        Ok(())
    }
}

/// Raw (pre-validation) case file contents. Ids may be sparse; they are
/// re-indexed contiguously during ingestion.
#[derive(Debug, Serialize, Deserialize)]
struct CaseFile {
    #[serde(default)]
    schema_version: Option<u32>,
    buses: Vec<Bus>,
    lines: Vec<Line>,
    generators: Vec<Generator>,
    loads: Vec<LoadPoint>,
    #[serde(default = "default_shed_cost")]
    shed_cost: f64,
}

fn default_shed_cost() -> f64 {
    DEFAULT_SHED_COST
}

/// Parse and validate a case file, re-indexing all ids to contiguous
/// `0..N-1` ranges (entity order follows ascending original ids).
pub fn parse_case<R: Read>(mut source: R, format: CaseFormat) -> Result<Network, GridError> {
    let mut text = String::new();
    source.read_to_string(&mut text)?;
    let file = match format {
        CaseFormat::Json => serde_json::from_str::<CaseFile>(&text)?,
        CaseFormat::CsvBundle => parse_csv_bundle(&text)?,
    };
    build_network(file)
}

fn build_network(mut file: CaseFile) -> Result<Network, GridError> {
    fn reindex<T>(
        entity: &'static str,
        items: &mut Vec<T>,
        id_of: impl Fn(&T) -> usize,
        set_id: impl Fn(&mut T, usize),
    ) -> Result<BTreeMap<usize, usize>, GridError> {
        items.sort_by_key(|t| id_of(t));
        let mut map = BTreeMap::new();
        for (new_id, item) in items.iter_mut().enumerate() {
            let old = id_of(item);
            if map.insert(old, new_id).is_some() {
                return Err(GridError::DuplicateId { entity, id: old });
            }
            set_id(item, new_id);
        }
        Ok(map)
    }

    let bus_map = reindex("bus", &mut file.buses, |b| b.id, |b, id| b.id = id)?;
    reindex("line", &mut file.lines, |l| l.id, |l, id| l.id = id)?;
    reindex("generator", &mut file.generators, |g| g.id, |g, id| g.id = id)?;
    reindex("load", &mut file.loads, |l| l.id, |l, id| l.id = id)?;

    let remap_bus = |entity: &'static str, id: usize, bus: usize| {
        bus_map
            .get(&bus)
            .copied()
            .ok_or(GridError::DanglingBus { entity, id, bus })
    };
    for line in &mut file.lines {
        line.from_bus = remap_bus("line", line.id, line.from_bus)?;
        line.to_bus = remap_bus("line", line.id, line.to_bus)?;
    }
    for g in &mut file.generators {
        g.bus = remap_bus("generator", g.id, g.bus)?;
    }
    for l in &mut file.loads {
        l.bus = remap_bus("load", l.id, l.bus)?;
    }

    let network = Network {
        buses: file.buses,
        lines: file.lines,
        generators: file.generators,
        loads: file.loads,
        shed_cost: file.shed_cost,
    };
    network.validate()?;
    Ok(network)
}

/// Serialize a network back to case-file JSON.
pub fn serialize_case(network: &Network) -> String {
    let file = CaseFile {
        schema_version: Some(1),
        buses: network.buses.clone(),
        lines: network.lines.clone(),
        generators: network.generators.clone(),
        loads: network.loads.clone(),
        shed_cost: network.shed_cost,
    };
    serde_json::to_string_pretty(&file).expect("case serialization cannot fail")
}

fn parse_csv_bundle(text: &str) -> Result<CaseFile, GridError> {
    let mut sections: BTreeMap<String, String> = BTreeMap::new();
    let mut current: Option<String> = None;
    for raw in text.lines() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if line.starts_with('[') && line.ends_with(']') {
            let name = line[1..line.len() - 1].to_string();
            sections.entry(name.clone()).or_default();
            current = Some(name);
        } else if let Some(name) = &current {
            let buf = sections.get_mut(name).expect("section exists");
            buf.push_str(raw);
            buf.push('\n');
        } else {
            return Err(GridError::UnknownSection(line.to_string()));
        }
    }
    for name in sections.keys() {
        if !matches!(name.as_str(), "buses" | "lines" | "generators" | "loads" | "params") {
            return Err(GridError::UnknownSection(name.clone()));
        }
    }
    fn section_csv<T: for<'de> Deserialize<'de>>(
        sections: &BTreeMap<String, String>,
        name: &'static str,
    ) -> Result<Vec<T>, GridError> {
        let body = sections
            .get(name)
            .ok_or(GridError::MissingSection(name))?;
        let mut rdr = csv::Reader::from_reader(body.as_bytes());
        rdr.deserialize().collect::<Result<Vec<T>, _>>().map_err(Into::into)
    }

    #[derive(Deserialize)]
    struct ParamRow {
        key: String,
        value: f64,
    }

    let mut shed_cost = DEFAULT_SHED_COST;
    if sections.contains_key("params") {
        for row in section_csv::<ParamRow>(&sections, "params")? {
            if row.key == "shed_cost" {
                shed_cost = row.value;
            }
        }
    }
    Ok(CaseFile {
        schema_version: None,
        buses: section_csv(&sections, "buses")?,
        lines: section_csv(&sections, "lines")?,
        generators: section_csv(&sections, "generators")?,
        loads: section_csv(&sections, "loads")?,
        shed_cost,
    })
}

/// Apply one hour's multipliers to the network.
pub fn apply_scenario<'a>(
    network: &'a Network,
    scenario: &HourScenario,
) -> Result<HourCase<'a>, GridError> {
    if scenario.load_scale.len() != network.loads.len() {
        let id = scenario.load_scale.len().min(network.loads.len());
        return Err(GridError::ScenarioMissingMultiplier { entity: "load", id });
    }
    let vre_ids = network.vre_generator_ids();
    if scenario.vre_capacity_factor.len() != vre_ids.len() {
        let idx = scenario.vre_capacity_factor.len().min(vre_ids.len());
        return Err(GridError::ScenarioMissingMultiplier {
            entity: "vre generator",
            id: vre_ids.get(idx).copied().unwrap_or(idx),
        });
    }

    let mut per_load_demand = Vec::with_capacity(network.loads.len());
    let mut bus_demand = vec![0.0; network.buses.len()];
    for load in &network.loads {
        let mw = load.base_demand * scenario.load_scale[load.id];
        per_load_demand.push(mw);
        bus_demand[load.bus] += mw;
    }
    let mut effective_pmax: Vec<f64> = network.generators.iter().map(|g| g.p_max).collect();
    for (slot, &gid) in vre_ids.iter().enumerate() {
        effective_pmax[gid] = network.generators[gid].p_max * scenario.vre_capacity_factor[slot];
    }
    Ok(HourCase {
        network,
        hour: scenario.hour_index,
        per_load_demand,
        bus_demand,
        effective_pmax,
    })
}

impl<'a> HourCase<'a> {
    /// Case with every multiplier at 1 (base demands, full VRE capacity).
    pub fn nominal(network: &'a Network, hour: usize) -> HourCase<'a> {
        let mut per_load_demand = Vec::with_capacity(network.loads.len());
        let mut bus_demand = vec![0.0; network.buses.len()];
        for load in &network.loads {
            per_load_demand.push(load.base_demand);
            bus_demand[load.bus] += load.base_demand;
        }
        HourCase {
            network,
            hour,
            per_load_demand,
            bus_demand,
            effective_pmax: network.generators.iter().map(|g| g.p_max).collect(),
        }
    }

    pub fn total_demand(&self) -> f64 {
        self.bus_demand.iter().sum()
    }

    /// Copy of this case with `mw` of extra constant demand at `bus`.
    /// Used for data-center loads, siting probes and the FD oracle; the
    /// extra demand participates in shedding bounds like any other load.
    pub fn with_extra_bus_demand(&self, bus: usize, mw: f64) -> HourCase<'a> {
        let mut out = self.clone();
        out.bus_demand[bus] += mw;
        out
    }
}

/// Parse a scenario series CSV: header `hour,load_<id>...,vre_<id>...`,
/// one row per hour, hour indices consecutive from 0.
pub fn load_scenario_series<R: Read>(
    source: R,
    network: &Network,
) -> Result<Vec<HourScenario>, GridError> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(source);
    let headers = rdr.headers()?.clone();
    let col = |name: &str| -> Result<usize, GridError> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| GridError::ScenarioMissingColumn(name.to_string()))
    };

    let hour_col = col("hour")?;
    let load_cols: Vec<usize> = network
        .loads
        .iter()
        .map(|l| col(&format!("load_{}", l.id)))
        .collect::<Result<_, _>>()?;
    let vre_ids = network.vre_generator_ids();
    let vre_cols: Vec<usize> = vre_ids
        .iter()
        .map(|gid| col(&format!("vre_{gid}")))
        .collect::<Result<_, _>>()?;

    let parse_cell = |record: &csv::StringRecord, row: usize, idx: usize| -> Result<f64, GridError> {
        let cell = record.get(idx).unwrap_or("");
        cell.trim().parse::<f64>().map_err(|_| GridError::ScenarioValue {
            row,
            column: headers.get(idx).unwrap_or("?").to_string(),
            message: format!("non-numeric cell {cell:?}"),
        })
    };

    let mut scenarios = Vec::new();
    for (row, record) in rdr.records().enumerate() {
        let record = record?;
        let hour = parse_cell(&record, row, hour_col)? as usize;
        if hour != row {
            return Err(GridError::ScenarioHourOrder {
                expected: row,
                found: hour,
            });
        }
        let mut load_scale = Vec::with_capacity(load_cols.len());
        for &idx in &load_cols {
            let v = parse_cell(&record, row, idx)?;
            if !v.is_finite() || v < 0.0 {
                return Err(GridError::ScenarioValue {
                    row,
                    column: headers.get(idx).unwrap_or("?").to_string(),
                    message: format!("load scale {v} must be finite and non-negative"),
                });
            }
            load_scale.push(v);
        }
        let mut vre_capacity_factor = Vec::with_capacity(vre_cols.len());
        for &idx in &vre_cols {
            let v = parse_cell(&record, row, idx)?;
            if !(0.0..=1.0).contains(&v) {
                return Err(GridError::ScenarioValue {
                    row,
                    column: headers.get(idx).unwrap_or("?").to_string(),
                    message: format!("capacity factor {v} outside [0, 1]"),
                });
            }
            vre_capacity_factor.push(v);
        }
        scenarios.push(HourScenario {
            hour_index: hour,
            load_scale,
            vre_capacity_factor,
        });
    }
    // Duplicate hours would already fail the consecutive-order check; make
    // sure an empty file is rejected too.
    if scenarios.is_empty() {
        return Err(GridError::ScenarioHourOrder {
            expected: 0,
            found: usize::MAX,
        });
    }
    let mut seen = HashSet::new();
    for s in &scenarios {
        if !seen.insert(s.hour_index) {
            return Err(GridError::ScenarioHourOrder {
                expected: seen.len(),
                found: s.hour_index,
            });
        }
    }
    Ok(scenarios)
}

/// Write a scenario series in the CSV format `load_scenario_series` reads.
pub fn write_scenario_series(network: &Network, scenarios: &[HourScenario]) -> String {
    let mut out = String::from("# carbonflow-schema v1\n");
    out.push_str("hour");
    for l in &network.loads {
        out.push_str(&format!(",load_{}", l.id));
    }
    let vre_ids = network.vre_generator_ids();
    for gid in &vre_ids {
        out.push_str(&format!(",vre_{gid}"));
    }
    out.push('\n');
    for s in scenarios {
        out.push_str(&s.hour_index.to_string());
        for v in &s.load_scale {
            out.push_str(&format!(",{v}"));
        }
        for v in &s.vre_capacity_factor {
            out.push_str(&format!(",{v}"));
        }
        out.push('\n');
    }
    out
}
