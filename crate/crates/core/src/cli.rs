//! Configuration-driven command-line runner: year simulations with
//! streamed per-hour outputs, clustering exports, intervention
//! experiments, and a synthetic case/scenario generator.

use crate::accounting::{
    accounts_by_region, aggregate_accounts, gen_accounts_by_kind, hour_accounts, CarbonAccounts,
    SHED_FILTER_THRESHOLD_MWH,
};
use crate::analysis::{
    hierarchical_cluster, lme_distance, merge_distance_gaps, temporal_aggregates, AnalysisError,
    Grouping, LmeSeries, Merge,
};
use crate::dispatch::{lexicographic_dispatch, DispatchError, DispatchSolution};
use crate::grid::{
    apply_scenario, load_scenario_series, parse_case, serialize_case, write_scenario_series,
    CaseFormat, GridError, HourScenario, Network,
};
use crate::interventions::{
    evaluate_shift, lmp_shift, run_base_case, shift_optimize, siting_experiment, DataCenterSpec,
    InterventionError, ShiftOptions, SiteKind, DEFAULT_SHIFT_FRACTION,
};
use crate::sensitivity::{hour_sensitivities, HourSensitivity, SensitivityConfig};
use crate::synth::{generate_case, generate_scenarios, SynthError, SynthParams};
use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

pub const SCHEMA_VERSION: &str = "carbonflow-schema v1";
pub const WORKERS_ENV: &str = "CARBONFLOW_WORKERS";
/// Hours solved per parallel batch before the collector flushes them to
/// disk in hour order.
const BATCH_HOURS: usize = 256;

/// Errors classified by exit code: config=2, data=3, numeric=4.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("numeric error: {0}")]
    Numeric(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Numeric(_) => 4,
        }
    }
}

impl From<GridError> for CliError {
    fn from(e: GridError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<SynthError> for CliError {
    fn from(e: SynthError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<DispatchError> for CliError {
    fn from(e: DispatchError) -> Self {
        CliError::Numeric(e.to_string())
    }
}

impl From<AnalysisError> for CliError {
    fn from(e: AnalysisError) -> Self {
        match e {
            AnalysisError::KOutOfRange { .. } => CliError::Config(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<InterventionError> for CliError {
    fn from(e: InterventionError) -> Self {
        match e {
            InterventionError::Dispatch(d) => d.into(),
            InterventionError::Grid(g) => g.into(),
            InterventionError::Lp(_) | InterventionError::LpStatus(_) => {
                CliError::Numeric(e.to_string())
            }
            InterventionError::BadDcBus { .. } | InterventionError::PlanShape { .. } => {
                CliError::Config(e.to_string())
            }
        }
    }
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Data(format!("{}: {e}", path.display()))
}

#[derive(Parser, Debug)]
#[command(name = "carbonflow", version, about = "Grid dispatch simulation with locational marginal emissions and carbon accounting")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Default)]
pub struct CommonArgs {
    /// Run configuration JSON (see docs/formats.md).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Simulate only the first N scenario hours.
    #[arg(long)]
    pub hours: Option<usize>,
    /// Worker threads (default: CARBONFLOW_WORKERS env var, then all cores).
    #[arg(long)]
    pub workers: Option<usize>,
    /// Master seed for all randomness.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Dispatch every scenario hour; write sensitivities, accounts and a summary.
    Simulate(CommonArgs),
    /// Generate a synthetic three-region case and scenario series.
    Generate(CommonArgs),
    /// Simulate, then hierarchically cluster buses by LME time series.
    Cluster(CommonArgs),
    /// Optimize and evaluate a data-center load-shifting plan.
    Shift(CommonArgs),
    /// Random load/generation siting probes against base-case LMEs.
    Site(CommonArgs),
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

fn default_threshold() -> f64 {
    SHED_FILTER_THRESHOLD_MWH
}

fn default_sample_rate() -> f64 {
    0.05
}

fn default_k() -> usize {
    3
}

fn default_day_length() -> usize {
    24
}

fn default_shift_fraction() -> f64 {
    DEFAULT_SHIFT_FRACTION
}

fn default_site_samples() -> usize {
    100
}

fn default_site_delta() -> f64 {
    20.0
}

fn default_synth_buses() -> usize {
    30
}

fn default_synth_lines() -> usize {
    40
}

fn default_synth_generators() -> usize {
    15
}

fn default_synth_hours() -> usize {
    168
}

#[derive(Debug, Clone, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub case: Option<PathBuf>,
    pub scenario: Option<PathBuf>,
    #[serde(default = "default_out")]
    pub out_dir: PathBuf,
    /// Hours shedding more MWh than this are excluded from aggregates.
    #[serde(default = "default_threshold")]
    pub shed_filter_threshold: f64,
    /// Probability of FD spot-checking each bus/line per hour.
    #[serde(default = "default_sample_rate")]
    pub fd_sample_rate: f64,
    pub workers: Option<usize>,
    #[serde(default)]
    pub seed: u64,
    pub hours: Option<usize>,
    #[serde(default)]
    pub cluster: ClusterBlock,
    #[serde(default)]
    pub shift: ShiftBlock,
    #[serde(default)]
    pub site: SiteBlock,
    #[serde(default)]
    pub generate: GenerateBlock,
}

impl Default for RunConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("empty config deserializes")
    }
}

#[derive(Debug, Clone, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClusterBlock {
    #[serde(default = "default_k")]
    pub k: usize,
}

impl Default for ClusterBlock {
    fn default() -> Self {
        ClusterBlock { k: default_k() }
    }
}

#[derive(Debug, Clone, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SignalKind {
    Lme,
    Lmp,
}

#[derive(Debug, Clone, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataCenterConfig {
    pub name: String,
    pub bus: usize,
    pub base_load: f64,
    #[serde(default = "default_shift_fraction")]
    pub shift_fraction: f64,
}

#[derive(Debug, Clone, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShiftBlock {
    #[serde(default)]
    pub data_centers: Vec<DataCenterConfig>,
    #[serde(default = "default_signal")]
    pub signal: SignalKind,
    #[serde(default = "default_day_length")]
    pub day_length: usize,
    #[serde(default)]
    pub per_dc_balance: bool,
}

fn default_signal() -> SignalKind {
    SignalKind::Lme
}

impl Default for ShiftBlock {
    fn default() -> Self {
        ShiftBlock {
            data_centers: vec![],
            signal: default_signal(),
            day_length: default_day_length(),
            per_dc_balance: false,
        }
    }
}

#[derive(Debug, Clone, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SiteKindConfig {
    Load,
    Generation,
}

#[derive(Debug, Clone, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SiteBlock {
    #[serde(default = "default_site_samples")]
    pub n_samples: usize,
    #[serde(default = "default_site_delta")]
    pub delta: f64,
    #[serde(default = "default_site_kind")]
    pub kind: SiteKindConfig,
}

fn default_site_kind() -> SiteKindConfig {
    SiteKindConfig::Load
}

impl Default for SiteBlock {
    fn default() -> Self {
        SiteBlock {
            n_samples: default_site_samples(),
            delta: default_site_delta(),
            kind: default_site_kind(),
        }
    }
}

#[derive(Debug, Clone, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerateBlock {
    #[serde(default = "default_synth_buses")]
    pub buses: usize,
    #[serde(default = "default_synth_lines")]
    pub lines: usize,
    #[serde(default = "default_synth_generators")]
    pub generators: usize,
    #[serde(default = "default_synth_hours")]
    pub hours: usize,
}

impl Default for GenerateBlock {
    fn default() -> Self {
        GenerateBlock {
            buses: default_synth_buses(),
            lines: default_synth_lines(),
            generators: default_synth_generators(),
            hours: default_synth_hours(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    /// Fold in command-line overrides (flags beat config values).
    pub fn apply_overrides(&mut self, args: &CommonArgs) {
        if let Some(h) = args.hours {
            self.hours = Some(h);
        }
        if let Some(w) = args.workers {
            self.workers = Some(w);
        }
        if let Some(s) = args.seed {
            self.seed = s;
        }
        if let Some(out) = &args.out {
            self.out_dir = out.clone();
        }
    }
}

fn load_config(args: &CommonArgs, required: bool) -> Result<RunConfig, CliError> {
    let mut config = match &args.config {
        Some(path) => RunConfig::load(path)?,
        None if required => return Err(CliError::Config("--config is required".into())),
        None => RunConfig::default(),
    };
    config.apply_overrides(args);
    Ok(config)
}

/// Resolution order: --workers flag (already folded into config), then the
/// CARBONFLOW_WORKERS env var, then rayon's default (all cores).
fn resolve_workers(config: &RunConfig) -> Result<usize, CliError> {
    if let Some(w) = config.workers {
        return Ok(w);
    }
    match std::env::var(WORKERS_ENV) {
        Ok(v) => v
            .parse()
            .map_err(|_| CliError::Config(format!("{WORKERS_ENV}={v} is not a thread count"))),
        Err(_) => Ok(0),
    }
}

fn thread_pool(config: &RunConfig) -> Result<rayon::ThreadPool, CliError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(resolve_workers(config)?)
        .build()
        .map_err(|e| CliError::Config(e.to_string()))
}

fn load_network(config: &RunConfig) -> Result<Network, CliError> {
    let path = config
        .case
        .as_ref()
        .ok_or_else(|| CliError::Config("config is missing `case`".into()))?;
    let format = match path.extension().and_then(|e| e.to_str()) {
        Some("json") => CaseFormat::Json,
        _ => CaseFormat::CsvBundle,
    };
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    Ok(parse_case(file, format)?)
}

fn load_scenarios(config: &RunConfig, network: &Network) -> Result<Vec<HourScenario>, CliError> {
    let path = config
        .scenario
        .as_ref()
        .ok_or_else(|| CliError::Config("config is missing `scenario`".into()))?;
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    let mut scenarios = load_scenario_series(file, network)?;
    if let Some(h) = config.hours {
        scenarios.truncate(h);
    }
    if scenarios.is_empty() {
        return Err(CliError::Data(format!(
            "{}: no scenario hours to simulate",
            path.display()
        )));
    }
    Ok(scenarios)
}

/// Everything the collector needs from one solved hour.
pub struct HourRecord {
    pub hour: usize,
    pub dispatch: DispatchSolution,
    pub sens: HourSensitivity,
    pub accounts: CarbonAccounts,
    pub shed: f64,
}

/// Decorrelated per-hour stream off the master seed, so results do not
/// depend on which worker picks up which hour.
pub fn hour_rng(seed: u64, hour: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ (hour as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

/// Dispatch one hour and derive its sensitivities and carbon accounts.
pub fn solve_hour(
    network: &Network,
    scen: &HourScenario,
    seed: u64,
    sens_config: &SensitivityConfig,
) -> Result<HourRecord, CliError> {
    let case = apply_scenario(network, scen)?;
    let result = lexicographic_dispatch(&case, &sens_config.dispatch)?;
    let mut rng = hour_rng(seed, scen.hour_index);
    let sens = hour_sensitivities(&case, &result, sens_config, &mut rng)?;
    let accounts =
        hour_accounts(&case, &result, &sens).map_err(|e| CliError::Numeric(e.to_string()))?;
    let shed = result.stage2.solution.total_shed();
    Ok(HourRecord {
        hour: scen.hour_index,
        dispatch: result.stage2.solution,
        sens,
        accounts,
        shed,
    })
}

/// Solve scenarios in parallel batches, handing records to `sink` in hour
/// order. On failure, surviving errors are reported per hour via the
/// returned ledger.
fn run_hours(
    network: &Network,
    scenarios: &[HourScenario],
    seed: u64,
    sens_config: &SensitivityConfig,
    mut sink: impl FnMut(&HourRecord) -> Result<(), CliError>,
) -> Result<(), (Vec<(usize, String)>, CliError)> {
    for batch in scenarios.chunks(BATCH_HOURS) {
        let solved: Vec<(usize, Result<HourRecord, CliError>)> = batch
            .par_iter()
            .map(|s| (s.hour_index, solve_hour(network, s, seed, sens_config)))
            .collect();
        let failures: Vec<(usize, String)> = solved
            .iter()
            .filter_map(|(h, r)| r.as_ref().err().map(|e| (*h, e.to_string())))
            .collect();
        if let Some((hour, _)) = failures.first() {
            let hour = *hour;
            return Err((
                failures,
                CliError::Numeric(format!("hour {hour} failed; see error ledger")),
            ));
        }
        for (_, r) in solved {
            let record = r.expect("failures handled above");
            if let Err(e) = sink(&record) {
                return Err((vec![], e));
            }
        }
    }
    Ok(())
}

struct CsvOut {
    path: PathBuf,
    writer: BufWriter<File>,
}

impl CsvOut {
    fn create(dir: &Path, name: &str, columns: &str) -> Result<CsvOut, CliError> {
        let path = dir.join(name);
        let file = File::create(&path).map_err(|e| io_err(&path, e))?;
        let mut writer = BufWriter::new(file);
        write!(writer, "# {SCHEMA_VERSION}\n{columns}\n").map_err(|e| io_err(&path, e))?;
        Ok(CsvOut { path, writer })
    }

    fn row(&mut self, line: std::fmt::Arguments) -> Result<(), CliError> {
        self.writer
            .write_fmt(line)
            .and_then(|()| self.writer.write_all(b"\n"))
            .map_err(|e| io_err(&self.path, e))
    }

    fn finish(mut self) -> Result<(), CliError> {
        self.writer.flush().map_err(|e| io_err(&self.path, e))
    }
}

fn write_json(dir: &Path, name: &str, value: &impl serde::Serialize) -> Result<(), CliError> {
    let path = dir.join(name);
    let text = serde_json::to_string_pretty(value).expect("report serialization cannot fail");
    std::fs::write(&path, text + "\n").map_err(|e| io_err(&path, e))
}

fn ensure_out_dir(config: &RunConfig) -> Result<(), CliError> {
    std::fs::create_dir_all(&config.out_dir).map_err(|e| io_err(&config.out_dir, e))
}

fn write_error_ledger(dir: &Path, failures: &[(usize, String)]) -> Result<(), CliError> {
    let mut out = CsvOut::create(dir, "errors.csv", "hour,error")?;
    for (hour, msg) in failures {
        out.row(format_args!("{hour},{:?}", msg))?;
    }
    out.finish()
}

#[derive(serde::Serialize)]
struct SimulationSummary {
    schema: &'static str,
    hours: usize,
    hours_included: usize,
    hours_filtered: usize,
    filtered_hours: Vec<usize>,
    scope1_kg: f64,
    load_account_kg: f64,
    gen_account_kg: f64,
    line_account_kg: f64,
    residual_kg: f64,
    shed_filter_threshold_mwh: f64,
    gen_account_by_kind_kg: BTreeMap<String, f64>,
    accounts_by_region_kg: BTreeMap<String, RegionAccounts>,
    lme_spot_checks: usize,
    lme_flags: usize,
    sci_spot_checks: usize,
    sci_flags: usize,
    seed: u64,
}

#[derive(serde::Serialize)]
struct RegionAccounts {
    load_kg: f64,
    gen_kg: f64,
}

/// Simulation pass shared by `simulate` and `cluster`: streams per-hour
/// CSVs and returns the hourly accounts, sheds and the LME matrix.
struct SimulationOutput {
    hours: Vec<usize>,
    hourly: Vec<CarbonAccounts>,
    sheds: Vec<f64>,
    lme: Vec<Vec<f64>>,
    lme_checks: (usize, usize),
    sci_checks: (usize, usize),
}

fn simulate_to_dir(
    network: &Network,
    scenarios: &[HourScenario],
    config: &RunConfig,
) -> Result<SimulationOutput, CliError> {
    ensure_out_dir(config)?;
    let dir = &config.out_dir;
    let mut dispatch_csv = CsvOut::create(dir, "dispatch.csv", "hour,entity_type,entity_id,value")?;
    let mut lme_csv = CsvOut::create(dir, "lme.csv", "hour,bus,lme,lmp,degenerate")?;
    let mut sci_csv = CsvOut::create(dir, "sci.csv", "hour,line,sci,degenerate")?;
    let mut accounts_csv = CsvOut::create(dir, "accounts.csv", "hour,entity_type,entity_id,value")?;

    let sens_config = SensitivityConfig {
        spot_check_rate: config.fd_sample_rate,
        ..SensitivityConfig::default()
    };
    let mut out = SimulationOutput {
        hours: Vec::with_capacity(scenarios.len()),
        hourly: Vec::with_capacity(scenarios.len()),
        sheds: Vec::with_capacity(scenarios.len()),
        lme: Vec::with_capacity(scenarios.len()),
        lme_checks: (0, 0),
        sci_checks: (0, 0),
    };

    let run = run_hours(network, scenarios, config.seed, &sens_config, |r| {
        let h = r.hour;
        for (i, v) in r.dispatch.generation.iter().enumerate() {
            dispatch_csv.row(format_args!("{h},gen,{i},{v}"))?;
        }
        for (i, v) in r.dispatch.flow.iter().enumerate() {
            dispatch_csv.row(format_args!("{h},flow,{i},{v}"))?;
        }
        for (i, v) in r.dispatch.shed.iter().enumerate() {
            dispatch_csv.row(format_args!("{h},shed,{i},{v}"))?;
        }
        for (bus, lme) in r.sens.lme.iter().enumerate() {
            lme_csv.row(format_args!(
                "{h},{bus},{lme},{},{}",
                r.sens.lmp[bus], r.sens.lme_flagged[bus] as u8
            ))?;
        }
        for (line, sci) in r.sens.sci.iter().enumerate() {
            sci_csv.row(format_args!(
                "{h},{line},{sci},{}",
                r.sens.sci_flagged[line] as u8
            ))?;
        }
        for (i, v) in r.accounts.load_account.iter().enumerate() {
            accounts_csv.row(format_args!("{h},load,{i},{v}"))?;
        }
        for (i, v) in r.accounts.gen_account.iter().enumerate() {
            accounts_csv.row(format_args!("{h},gen,{i},{v}"))?;
        }
        for (i, v) in r.accounts.line_account.iter().enumerate() {
            accounts_csv.row(format_args!("{h},line,{i},{v}"))?;
        }
        out.hours.push(h);
        out.sheds.push(r.shed);
        out.lme.push(r.sens.lme.clone());
        out.lme_checks.0 += r.sens.checked_buses.len();
        out.lme_checks.1 += r.sens.lme_flagged.iter().filter(|&&f| f).count();
        out.sci_checks.0 += r.sens.checked_lines.len();
        out.sci_checks.1 += r.sens.sci_flagged.iter().filter(|&&f| f).count();
        out.hourly.push(r.accounts.clone());
        Ok(())
    });
    if let Err((failures, err)) = run {
        if !failures.is_empty() {
            write_error_ledger(dir, &failures)?;
        }
        return Err(err);
    }
    dispatch_csv.finish()?;
    lme_csv.finish()?;
    sci_csv.finish()?;
    accounts_csv.finish()?;
    Ok(out)
}

fn write_summary(
    network: &Network,
    config: &RunConfig,
    sim: &SimulationOutput,
) -> Result<(), CliError> {
    let total = aggregate_accounts(&sim.hourly, &sim.sheds, config.shed_filter_threshold);
    let filtered_hours: Vec<usize> = sim
        .hours
        .iter()
        .zip(&sim.sheds)
        .filter(|(_, &s)| s > config.shed_filter_threshold)
        .map(|(&h, _)| h)
        .collect();
    let summary = SimulationSummary {
        schema: SCHEMA_VERSION,
        hours: sim.hourly.len(),
        hours_included: total.hours_included,
        hours_filtered: total.hours_filtered,
        filtered_hours,
        scope1_kg: total.scope1,
        load_account_kg: total.load_total(),
        gen_account_kg: total.gen_total(),
        line_account_kg: total.line_total(),
        residual_kg: total.residual,
        shed_filter_threshold_mwh: config.shed_filter_threshold,
        gen_account_by_kind_kg: gen_accounts_by_kind(&total, network)
            .into_iter()
            .map(|(k, v)| (k.as_str().to_string(), v))
            .collect(),
        accounts_by_region_kg: accounts_by_region(&total, network)
            .into_iter()
            .map(|(r, (load, gen))| (r, RegionAccounts { load_kg: load, gen_kg: gen }))
            .collect(),
        lme_spot_checks: sim.lme_checks.0,
        lme_flags: sim.lme_checks.1,
        sci_spot_checks: sim.sci_checks.0,
        sci_flags: sim.sci_checks.1,
        seed: config.seed,
    };
    write_json(&config.out_dir, "summary.json", &summary)
}

pub fn cmd_simulate(config: &RunConfig) -> Result<(), CliError> {
    let network = load_network(config)?;
    let scenarios = load_scenarios(config, &network)?;
    let sim = simulate_to_dir(&network, &scenarios, config)?;
    write_summary(&network, config, &sim)
}

pub fn cmd_generate(config: &RunConfig) -> Result<(), CliError> {
    ensure_out_dir(config)?;
    let params = SynthParams {
        buses: config.generate.buses,
        lines: config.generate.lines,
        generators: config.generate.generators,
        seed: config.seed,
    };
    let network = generate_case(&params)?;
    let hours = config.hours.unwrap_or(config.generate.hours);
    let scenarios = generate_scenarios(&network, hours, config.seed);
    let case_path = config.out_dir.join("case.json");
    std::fs::write(&case_path, serialize_case(&network)).map_err(|e| io_err(&case_path, e))?;
    let scen_path = config.out_dir.join("scenario.csv");
    std::fs::write(&scen_path, write_scenario_series(&network, &scenarios))
        .map_err(|e| io_err(&scen_path, e))?;
    Ok(())
}

#[derive(serde::Serialize)]
struct ClusterReport {
    schema: &'static str,
    k: usize,
    labels: Vec<usize>,
    linkage: Vec<Merge>,
    /// (k, merge-distance gap) pairs, widest gap first.
    gaps: Vec<(usize, f64)>,
}

pub fn cmd_cluster(config: &RunConfig) -> Result<(), CliError> {
    let network = load_network(config)?;
    let scenarios = load_scenarios(config, &network)?;
    let sim = simulate_to_dir(&network, &scenarios, config)?;
    write_summary(&network, config, &sim)?;

    let series = LmeSeries {
        hours: sim.hours.clone(),
        values: sim.lme.clone(),
    };
    let distance = lme_distance(&series)?;
    let clusters = hierarchical_cluster(&distance, config.cluster.k)?;
    let report = ClusterReport {
        schema: SCHEMA_VERSION,
        k: config.cluster.k,
        labels: clusters.labels.clone(),
        gaps: merge_distance_gaps(&clusters.linkage),
        linkage: clusters.linkage,
    };
    write_json(&config.out_dir, "cluster.json", &report)?;

    let regions: Vec<String> = network.buses.iter().map(|b| b.region.clone()).collect();
    let mut agg_csv = CsvOut::create(
        &config.out_dir,
        "aggregates.csv",
        "grouping,region,bucket,mean_lme",
    )?;
    for (grouping, name) in [(Grouping::HourOfDay, "hour_of_day"), (Grouping::Month, "month")] {
        for ((region, bucket), mean) in temporal_aggregates(&series, grouping, &regions)? {
            agg_csv.row(format_args!("{name},{region},{bucket},{mean}"))?;
        }
    }
    agg_csv.finish()
}

fn data_centers(config: &RunConfig) -> Vec<DataCenterSpec> {
    config
        .shift
        .data_centers
        .iter()
        .map(|d| DataCenterSpec {
            name: d.name.clone(),
            bus: d.bus,
            base_load: d.base_load,
            shift_fraction: d.shift_fraction,
        })
        .collect()
}

#[derive(serde::Serialize)]
struct ShiftReport {
    schema: &'static str,
    signal: &'static str,
    expected_change_kg: f64,
    realized_change_kg: f64,
    change_ratio_pct: Option<f64>,
    base_emissions_kg: f64,
    new_emissions_kg: f64,
    cost_change_usd: f64,
}

pub fn cmd_shift(config: &RunConfig) -> Result<(), CliError> {
    let network = load_network(config)?;
    let scenarios = load_scenarios(config, &network)?;
    let dcs = data_centers(config);
    if dcs.is_empty() {
        return Err(CliError::Config("shift requires at least one data center".into()));
    }
    ensure_out_dir(config)?;
    let dispatch = SensitivityConfig::default().dispatch;
    let base = run_base_case(&network, &scenarios, &dcs, &dispatch)?;
    let options = ShiftOptions {
        day_length: config.shift.day_length,
        per_dc_balance: config.shift.per_dc_balance,
    };
    let (plan, signal) = match config.shift.signal {
        SignalKind::Lme => (shift_optimize(&base.lme_at_dcs, &dcs, &options)?, "lme"),
        SignalKind::Lmp => (lmp_shift(&base.lmp_at_dcs, &dcs, &options)?, "lmp"),
    };
    let report = evaluate_shift(&network, &scenarios, &dcs, &plan, &base, &dispatch)?;

    let mut plan_csv = CsvOut::create(&config.out_dir, "plan.csv", "hour,data_center,delta_mw")?;
    for (t, row) in plan.delta.iter().enumerate() {
        for (d, dc) in row.iter().zip(&dcs) {
            plan_csv.row(format_args!("{},{},{d}", scenarios[t].hour_index, dc.name))?;
        }
    }
    plan_csv.finish()?;
    write_json(
        &config.out_dir,
        "shift_report.json",
        &ShiftReport {
            schema: SCHEMA_VERSION,
            signal,
            expected_change_kg: report.expected_change,
            realized_change_kg: report.realized_change,
            change_ratio_pct: report.change_ratio_pct,
            base_emissions_kg: report.base_emissions,
            new_emissions_kg: report.new_emissions,
            cost_change_usd: report.cost_change,
        },
    )
}

#[derive(serde::Serialize)]
struct SiteReport {
    schema: &'static str,
    kind: &'static str,
    n_samples: usize,
    delta_mw: f64,
    expected_change_kg: f64,
    realized_change_kg: f64,
    change_ratio_pct: Option<f64>,
}

pub fn cmd_site(config: &RunConfig) -> Result<(), CliError> {
    let network = load_network(config)?;
    let scenarios = load_scenarios(config, &network)?;
    ensure_out_dir(config)?;
    let (kind, kind_name) = match config.site.kind {
        SiteKindConfig::Load => (SiteKind::Load, "load"),
        SiteKindConfig::Generation => (SiteKind::Generation, "generation"),
    };
    let dispatch = SensitivityConfig::default().dispatch;
    let (report, samples) = siting_experiment(
        &network,
        &scenarios,
        config.site.n_samples,
        config.site.delta,
        kind,
        config.seed,
        &dispatch,
    )?;
    let mut samples_csv = CsvOut::create(
        &config.out_dir,
        "site_samples.csv",
        "bus,hour,expected_kg,realized_kg",
    )?;
    for s in &samples {
        samples_csv.row(format_args!("{},{},{},{}", s.bus, s.hour, s.expected, s.realized))?;
    }
    samples_csv.finish()?;
    write_json(
        &config.out_dir,
        "site_report.json",
        &SiteReport {
            schema: SCHEMA_VERSION,
            kind: kind_name,
            n_samples: config.site.n_samples,
            delta_mw: config.site.delta,
            expected_change_kg: report.expected_change,
            realized_change_kg: report.realized_change,
            change_ratio_pct: report.change_ratio_pct,
        },
    )
}

/// Dispatch a parsed command line; the returned error carries the exit code.
pub fn run(cli: Cli) -> Result<(), CliError> {
    let (args, required) = match &cli.command {
        Command::Simulate(a) | Command::Cluster(a) | Command::Shift(a) | Command::Site(a) => {
            (a, true)
        }
        Command::Generate(a) => (a, false),
    };
    let config = load_config(args, required)?;
    let pool = thread_pool(&config)?;
    pool.install(|| match &cli.command {
        Command::Simulate(_) => cmd_simulate(&config),
        Command::Generate(_) => cmd_generate(&config),
        Command::Cluster(_) => cmd_cluster(&config),
        Command::Shift(_) => cmd_shift(&config),
        Command::Site(_) => cmd_site(&config),
    })
}
