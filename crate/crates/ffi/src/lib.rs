//! C ABI surface over the carbonflow engine.
//!
//! Conventions (mirrored in `include/carbonflow.h`):
//! - Objects are opaque handles created by `cf_*_new`-style constructors
//!   and released with the matching `cf_*_free`. Handles are not
//!   thread-safe; share them across threads only behind a lock.
//! - Every fallible call returns a `cf_status` code. On failure a
//!   human-readable message is stored per thread and can be read with
//!   `cf_last_error_message` (valid until the next failing call on the
//!   same thread).
//! - Array getters return borrowed views into the handle; the pointers
//!   stay valid until the handle is freed.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::io::Cursor;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use carbonflow::accounting::CarbonAccounts;
use carbonflow::cli::{solve_hour, CliError, HourRecord};
use carbonflow::grid::{
    load_scenario_series, parse_case, serialize_case, CaseFormat, HourScenario, Network,
};
use carbonflow::sensitivity::SensitivityConfig;
use carbonflow::synth::{generate_case, generate_scenarios, SynthParams};

/// Status codes returned by every fallible function.
pub const CF_OK: i32 = 0;
/// A required pointer argument was null.
pub const CF_ERR_NULL_ARG: i32 = 1;
/// A string argument was not valid UTF-8.
pub const CF_ERR_UTF8: i32 = 2;
/// Input could not be parsed or violated a model invariant.
pub const CF_ERR_PARSE: i32 = 3;
/// The dispatch or sensitivity solve failed.
pub const CF_ERR_SOLVE: i32 = 4;
/// An hour or array index was out of range.
pub const CF_ERR_INDEX: i32 = 5;
/// An internal invariant was violated (a panic was caught at the boundary).
pub const CF_ERR_INTERNAL: i32 = 6;

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(code: i32, msg: impl Into<String>) -> i32 {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).unwrap_or_default());
    code
}

fn cli_error(e: CliError) -> i32 {
    let code = match &e {
        CliError::Config(_) | CliError::Data(_) => CF_ERR_PARSE,
        CliError::Numeric(_) => CF_ERR_SOLVE,
    };
    set_error(code, e.to_string())
}

/// Run `f` with panics converted to `CF_ERR_INTERNAL`.
fn guarded(f: impl FnOnce() -> i32) -> i32 {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(code) => code,
        Err(_) => set_error(CF_ERR_INTERNAL, "internal panic at FFI boundary"),
    }
}

/// Opaque grid model handle.
pub struct CfNetwork {
    net: Network,
}

/// Opaque scenario-series handle, tied to the network it was built for.
pub struct CfScenarios {
    hours: Vec<HourScenario>,
}

/// Opaque simulation result: one solved record per scenario hour.
pub struct CfSimResult {
    records: Vec<HourRecord>,
}

macro_rules! nonnull {
    ($ptr:expr) => {
        match unsafe { $ptr.as_ref() } {
            Some(r) => r,
            None => return set_error(CF_ERR_NULL_ARG, concat!(stringify!($ptr), " is null")),
        }
    };
}

fn c_str<'a>(ptr: *const c_char) -> Result<&'a str, i32> {
    if ptr.is_null() {
        return Err(set_error(CF_ERR_NULL_ARG, "string argument is null"));
    }
    unsafe { CStr::from_ptr(ptr) }
        .to_str()
        .map_err(|e| set_error(CF_ERR_UTF8, e.to_string()))
}

fn write_out<T>(out: *mut T, value: T) -> i32 {
    if out.is_null() {
        return set_error(CF_ERR_NULL_ARG, "out pointer is null");
    }
    unsafe { out.write(value) };
    CF_OK
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn cf_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Message for the most recent failure on this thread. Never null; empty
/// before any failure. Valid until the next failing call on this thread.
#[no_mangle]
pub extern "C" fn cf_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

// ---------------------------------------------------------------- network

/// Parse a case from JSON text into a new network handle.
#[no_mangle]
pub extern "C" fn cf_network_parse_json(
    json: *const c_char,
    out: *mut *mut CfNetwork,
) -> i32 {
    guarded(|| {
        let text = match c_str(json) {
            Ok(t) => t,
            Err(code) => return code,
        };
        match parse_case(Cursor::new(text), CaseFormat::Json) {
            Ok(net) => write_out(out, Box::into_raw(Box::new(CfNetwork { net }))),
            Err(e) => set_error(CF_ERR_PARSE, e.to_string()),
        }
    })
}

/// Generate a synthetic three-region network.
#[no_mangle]
pub extern "C" fn cf_network_generate(
    buses: usize,
    lines: usize,
    generators: usize,
    seed: u64,
    out: *mut *mut CfNetwork,
) -> i32 {
    guarded(|| {
        let params = SynthParams { buses, lines, generators, seed };
        match generate_case(&params) {
            Ok(net) => write_out(out, Box::into_raw(Box::new(CfNetwork { net }))),
            Err(e) => set_error(CF_ERR_PARSE, e.to_string()),
        }
    })
}

/// Serialize a network to case JSON. The returned string must be released
/// with `cf_string_free`.
#[no_mangle]
pub extern "C" fn cf_network_to_json(
    network: *const CfNetwork,
    out: *mut *mut c_char,
) -> i32 {
    guarded(|| {
        let h = nonnull!(network);
        let json = serialize_case(&h.net).replace('\0', " ");
        write_out(out, CString::new(json).unwrap_or_default().into_raw())
    })
}

#[no_mangle]
pub extern "C" fn cf_network_bus_count(network: *const CfNetwork) -> usize {
    unsafe { network.as_ref() }.map_or(0, |h| h.net.buses.len())
}

#[no_mangle]
pub extern "C" fn cf_network_line_count(network: *const CfNetwork) -> usize {
    unsafe { network.as_ref() }.map_or(0, |h| h.net.lines.len())
}

#[no_mangle]
pub extern "C" fn cf_network_generator_count(network: *const CfNetwork) -> usize {
    unsafe { network.as_ref() }.map_or(0, |h| h.net.generators.len())
}

/// Release a network handle. Null is a no-op.
#[no_mangle]
pub extern "C" fn cf_network_free(network: *mut CfNetwork) {
    if !network.is_null() {
        drop(unsafe { Box::from_raw(network) });
    }
}

/// Release a string returned by this library. Null is a no-op.
#[no_mangle]
pub extern "C" fn cf_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(unsafe { CString::from_raw(s) });
    }
}

// -------------------------------------------------------------- scenarios

/// Parse an hourly scenario series (CSV text) against a network.
#[no_mangle]
pub extern "C" fn cf_scenarios_parse_csv(
    network: *const CfNetwork,
    csv: *const c_char,
    out: *mut *mut CfScenarios,
) -> i32 {
    guarded(|| {
        let h = nonnull!(network);
        let text = match c_str(csv) {
            Ok(t) => t,
            Err(code) => return code,
        };
        match load_scenario_series(Cursor::new(text), &h.net) {
            Ok(hours) => write_out(out, Box::into_raw(Box::new(CfScenarios { hours }))),
            Err(e) => set_error(CF_ERR_PARSE, e.to_string()),
        }
    })
}

/// Generate a seeded synthetic scenario series for a network.
#[no_mangle]
pub extern "C" fn cf_scenarios_generate(
    network: *const CfNetwork,
    hours: usize,
    seed: u64,
    out: *mut *mut CfScenarios,
) -> i32 {
    guarded(|| {
        let h = nonnull!(network);
        let hours = generate_scenarios(&h.net, hours, seed);
        write_out(out, Box::into_raw(Box::new(CfScenarios { hours })))
    })
}

#[no_mangle]
pub extern "C" fn cf_scenarios_hour_count(scenarios: *const CfScenarios) -> usize {
    unsafe { scenarios.as_ref() }.map_or(0, |h| h.hours.len())
}

/// Release a scenario handle. Null is a no-op.
#[no_mangle]
pub extern "C" fn cf_scenarios_free(scenarios: *mut CfScenarios) {
    if !scenarios.is_null() {
        drop(unsafe { Box::from_raw(scenarios) });
    }
}

// ------------------------------------------------------------- simulation

/// Run the two-tier dispatch, sensitivity, and accounting pipeline over a
/// scenario series. `seed` feeds the per-hour spot-check sampling and
/// makes results reproducible; the same seed gives bit-identical results.
#[no_mangle]
pub extern "C" fn cf_simulate(
    network: *const CfNetwork,
    scenarios: *const CfScenarios,
    seed: u64,
    out: *mut *mut CfSimResult,
) -> i32 {
    guarded(|| {
        let net = nonnull!(network);
        let scen = nonnull!(scenarios);
        let config = SensitivityConfig::default();
        let mut records = Vec::with_capacity(scen.hours.len());
        for s in &scen.hours {
            match solve_hour(&net.net, s, seed, &config) {
                Ok(rec) => records.push(rec),
                Err(e) => return cli_error(e),
            }
        }
        write_out(out, Box::into_raw(Box::new(CfSimResult { records })))
    })
}

#[no_mangle]
pub extern "C" fn cf_result_hour_count(result: *const CfSimResult) -> usize {
    unsafe { result.as_ref() }.map_or(0, |h| h.records.len())
}

fn hour_record(result: *const CfSimResult, hour: usize) -> Result<&'static HourRecord, i32> {
    let h = match unsafe { result.as_ref() } {
        Some(h) => h,
        None => return Err(set_error(CF_ERR_NULL_ARG, "result is null")),
    };
    h.records
        .get(hour)
        .ok_or_else(|| set_error(CF_ERR_INDEX, format!("hour {hour} out of range")))
}

fn view(out_ptr: *mut *const f64, out_len: *mut usize, data: &[f64]) -> i32 {
    if out_ptr.is_null() || out_len.is_null() {
        return set_error(CF_ERR_NULL_ARG, "out pointer is null");
    }
    unsafe {
        out_ptr.write(data.as_ptr());
        out_len.write(data.len());
    }
    CF_OK
}

/// Borrowed view of the per-bus locational marginal emissions (kg/MWh)
/// for one solved hour. Valid until the result handle is freed.
#[no_mangle]
pub extern "C" fn cf_result_lme(
    result: *const CfSimResult,
    hour: usize,
    out_ptr: *mut *const f64,
    out_len: *mut usize,
) -> i32 {
    guarded(|| match hour_record(result, hour) {
        Ok(rec) => view(out_ptr, out_len, &rec.sens.lme),
        Err(code) => code,
    })
}

/// Borrowed view of the per-line shadow carbon intensities (kg/MWh).
#[no_mangle]
pub extern "C" fn cf_result_sci(
    result: *const CfSimResult,
    hour: usize,
    out_ptr: *mut *const f64,
    out_len: *mut usize,
) -> i32 {
    guarded(|| match hour_record(result, hour) {
        Ok(rec) => view(out_ptr, out_len, &rec.sens.sci),
        Err(code) => code,
    })
}

/// Borrowed view of the per-bus locational marginal prices ($/MWh).
#[no_mangle]
pub extern "C" fn cf_result_lmp(
    result: *const CfSimResult,
    hour: usize,
    out_ptr: *mut *const f64,
    out_len: *mut usize,
) -> i32 {
    guarded(|| match hour_record(result, hour) {
        Ok(rec) => view(out_ptr, out_len, &rec.sens.lmp),
        Err(code) => code,
    })
}

/// Borrowed view of the per-generator dispatch (MW).
#[no_mangle]
pub extern "C" fn cf_result_generation(
    result: *const CfSimResult,
    hour: usize,
    out_ptr: *mut *const f64,
    out_len: *mut usize,
) -> i32 {
    guarded(|| match hour_record(result, hour) {
        Ok(rec) => view(out_ptr, out_len, &rec.dispatch.generation),
        Err(code) => code,
    })
}

/// Scalars for one solved hour. Any out pointer may be null to skip it.
#[no_mangle]
pub extern "C" fn cf_result_hour_scalars(
    result: *const CfSimResult,
    hour: usize,
    out_emissions_kg: *mut f64,
    out_dispatch_cost: *mut f64,
    out_shed_mwh: *mut f64,
    out_residual_kg: *mut f64,
) -> i32 {
    guarded(|| match hour_record(result, hour) {
        Ok(rec) => {
            for (ptr, v) in [
                (out_emissions_kg, rec.dispatch.emissions),
                (out_dispatch_cost, rec.dispatch.dispatch_cost),
                (out_shed_mwh, rec.shed),
                (out_residual_kg, rec.accounts.residual),
            ] {
                if !ptr.is_null() {
                    unsafe { ptr.write(v) };
                }
            }
            CF_OK
        }
        Err(code) => code,
    })
}

/// Number of sensitivities in this hour whose duals disagreed with the
/// finite-difference oracle and were replaced by it (degenerate hours).
/// The accounting identity may not close on such hours.
#[no_mangle]
pub extern "C" fn cf_result_hour_flag_count(
    result: *const CfSimResult,
    hour: usize,
    out_count: *mut usize,
) -> i32 {
    guarded(|| match hour_record(result, hour) {
        Ok(rec) => {
            let count = rec.sens.lme_flagged.iter().filter(|&&f| f).count()
                + rec.sens.sci_flagged.iter().filter(|&&f| f).count();
            write_out(out_count, count)
        }
        Err(code) => code,
    })
}

/// Carbon-account totals summed over all hours. Any out pointer may be
/// null to skip it. The accounting identity makes
/// `load + gen + line = scope1` up to per-hour residuals.
#[no_mangle]
pub extern "C" fn cf_result_account_totals(
    result: *const CfSimResult,
    out_load_kg: *mut f64,
    out_gen_kg: *mut f64,
    out_line_kg: *mut f64,
    out_scope1_kg: *mut f64,
) -> i32 {
    guarded(|| {
        let h = nonnull!(result);
        let sum = |f: fn(&CarbonAccounts) -> f64| {
            h.records.iter().map(|r| f(&r.accounts)).sum::<f64>()
        };
        for (ptr, v) in [
            (out_load_kg, sum(CarbonAccounts::load_total)),
            (out_gen_kg, sum(CarbonAccounts::gen_total)),
            (out_line_kg, sum(CarbonAccounts::line_total)),
            (out_scope1_kg, sum(|a| a.scope1)),
        ] {
            if !ptr.is_null() {
                unsafe { ptr.write(v) };
            }
        }
        CF_OK
    })
}

/// Release a result handle. Null is a no-op.
#[no_mangle]
pub extern "C" fn cf_result_free(result: *mut CfSimResult) {
    if !result.is_null() {
        drop(unsafe { Box::from_raw(result) });
    }
}
