//! Grid dispatch simulation engine: two-tier DC optimal power flow with
//! load shedding, locational marginal emissions (LMEs), shadow carbon
//! intensities (SCIs), LME-based carbon accounting, LME time-series
//! analysis and emission-reduction intervention studies.

pub mod accounting;
pub mod analysis;
pub mod cli;
pub mod dispatch;
pub mod grid;
pub mod interventions;
pub mod lp;
pub mod sensitivity;
pub mod synth;

pub use dispatch::{
    lexicographic_dispatch, DispatchConfig, DispatchError, DispatchSolution, StageDuals,
    StageResult, TwoTierResult,
};

pub use grid::{
    apply_scenario, load_scenario_series, parse_case, serialize_case, Bus, CaseFormat, GenKind,
    Generator, GridError, HourCase, HourScenario, Line, LoadPoint, Network,
};
pub use lp::{LinearProblem, LpError, LpSolution, LpStatus, Relation, Tolerances};
