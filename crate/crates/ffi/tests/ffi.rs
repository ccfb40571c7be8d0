//! Exercises the C ABI from Rust: handle lifecycle, error reporting, and
//! agreement with the underlying engine.

use std::ffi::{CStr, CString};
use std::os::raw::c_char;
use std::ptr;

use carbonflow_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(cf_last_error_message()) }
        .to_string_lossy()
        .into_owned()
}

fn generated_network() -> *mut CfNetwork {
    let mut net = ptr::null_mut();
    let code = cf_network_generate(12, 16, 6, 7, &mut net);
    assert_eq!(code, CF_OK, "{}", last_error());
    assert!(!net.is_null());
    net
}

#[test]
fn version_and_initial_error_message() {
    let version = unsafe { CStr::from_ptr(cf_version()) }.to_str().unwrap();
    assert_eq!(version, env!("CARGO_PKG_VERSION"));
    assert_eq!(last_error(), "");
}

#[test]
fn network_round_trips_through_json() {
    let net = generated_network();
    assert_eq!(cf_network_bus_count(net), 12);
    assert_eq!(cf_network_line_count(net), 16);
    assert_eq!(cf_network_generator_count(net), 6);

    let mut json: *mut c_char = ptr::null_mut();
    assert_eq!(cf_network_to_json(net, &mut json), CF_OK);
    let text = unsafe { CStr::from_ptr(json) }.to_str().unwrap().to_owned();
    assert!(text.contains("\"schema_version\": 1"));

    let c_text = CString::new(text).unwrap();
    let mut reparsed = ptr::null_mut();
    assert_eq!(
        cf_network_parse_json(c_text.as_ptr(), &mut reparsed),
        CF_OK,
        "{}",
        last_error()
    );
    assert_eq!(cf_network_bus_count(reparsed), 12);

    cf_string_free(json);
    cf_network_free(reparsed);
    cf_network_free(net);
}

#[test]
fn error_paths_set_codes_and_messages() {
    // Null arguments.
    let mut out = ptr::null_mut();
    assert_eq!(cf_network_parse_json(ptr::null(), &mut out), CF_ERR_NULL_ARG);
    assert!(!last_error().is_empty());

    // Unparseable JSON.
    let bad = CString::new("{ nope").unwrap();
    assert_eq!(cf_network_parse_json(bad.as_ptr(), &mut out), CF_ERR_PARSE);

    // Invalid synthesis parameters (too few generators).
    assert_eq!(cf_network_generate(12, 16, 2, 7, &mut out), CF_ERR_PARSE);
    assert!(last_error().contains("generators"));

    // Out-of-range hour index on a real result.
    let net = generated_network();
    let mut scen = ptr::null_mut();
    assert_eq!(cf_scenarios_generate(net, 2, 9, &mut scen), CF_OK);
    let mut result = ptr::null_mut();
    assert_eq!(cf_simulate(net, scen, 9, &mut result), CF_OK, "{}", last_error());
    let (mut p, mut n) = (ptr::null(), 0usize);
    assert_eq!(cf_result_lme(result, 99, &mut p, &mut n), CF_ERR_INDEX);
    assert!(last_error().contains("99"));

    cf_result_free(result);
    cf_scenarios_free(scen);
    cf_network_free(net);

    // Null handles are tolerated by counters and frees.
    assert_eq!(cf_network_bus_count(ptr::null()), 0);
    assert_eq!(cf_result_hour_count(ptr::null()), 0);
    cf_network_free(ptr::null_mut());
    cf_scenarios_free(ptr::null_mut());
    cf_result_free(ptr::null_mut());
    cf_string_free(ptr::null_mut());
}

#[test]
fn simulation_vectors_and_totals_are_consistent() {
    let net = generated_network();
    let mut scen = ptr::null_mut();
    assert_eq!(cf_scenarios_generate(net, 24, 3, &mut scen), CF_OK);
    assert_eq!(cf_scenarios_hour_count(scen), 24);

    let mut result = ptr::null_mut();
    assert_eq!(cf_simulate(net, scen, 3, &mut result), CF_OK, "{}", last_error());
    assert_eq!(cf_result_hour_count(result), 24);

    let mut scope1_sum = 0.0;
    let mut residual_sum = 0.0;
    for hour in 0..24 {
        let (mut p, mut n) = (ptr::null(), 0usize);
        assert_eq!(cf_result_lme(result, hour, &mut p, &mut n), CF_OK);
        assert_eq!(n, 12);
        let lme = unsafe { std::slice::from_raw_parts(p, n) };
        assert!(lme.iter().all(|v| v.is_finite()));

        assert_eq!(cf_result_sci(result, hour, &mut p, &mut n), CF_OK);
        assert_eq!(n, 16);
        assert_eq!(cf_result_generation(result, hour, &mut p, &mut n), CF_OK);
        assert_eq!(n, 6);

        let mut emissions = f64::NAN;
        let mut shed = f64::NAN;
        let mut residual = f64::NAN;
        assert_eq!(
            cf_result_hour_scalars(
                result,
                hour,
                &mut emissions,
                ptr::null_mut(),
                &mut shed,
                &mut residual,
            ),
            CF_OK
        );
        assert!(emissions >= 0.0);
        let mut flags = 0usize;
        assert_eq!(cf_result_hour_flag_count(result, hour, &mut flags), CF_OK);
        // The identity only holds on hours without shedding or flagged
        // (degenerate) sensitivities.
        if shed == 0.0 && flags == 0 {
            assert!(
                residual.abs() <= 1e-6 * emissions.max(1.0),
                "hour {hour}: residual {residual}"
            );
        }
        scope1_sum += emissions;
        residual_sum += residual;
    }

    let (mut load, mut gen, mut line, mut scope1) = (0.0, 0.0, 0.0, 0.0);
    assert_eq!(
        cf_result_account_totals(result, &mut load, &mut gen, &mut line, &mut scope1),
        CF_OK
    );
    assert!((scope1 - scope1_sum).abs() <= 1e-9 * scope1.abs().max(1.0));
    let gap = load + gen + line - scope1;
    assert!((gap - residual_sum).abs() <= 1e-6 * scope1.abs().max(1.0));

    cf_result_free(result);
    cf_scenarios_free(scen);
    cf_network_free(net);
}

#[test]
fn same_seed_is_bit_identical_across_result_handles() {
    let net = generated_network();
    let mut scen = ptr::null_mut();
    assert_eq!(cf_scenarios_generate(net, 12, 5, &mut scen), CF_OK);

    let mut collect = || {
        let mut result = ptr::null_mut();
        assert_eq!(cf_simulate(net, scen, 5, &mut result), CF_OK);
        let mut all = Vec::new();
        for hour in 0..cf_result_hour_count(result) {
            let (mut p, mut n) = (ptr::null(), 0usize);
            assert_eq!(cf_result_lme(result, hour, &mut p, &mut n), CF_OK);
            all.extend_from_slice(unsafe { std::slice::from_raw_parts(p, n) });
        }
        cf_result_free(result);
        all
    };
    let a = collect();
    let b = collect();
    assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()));

    cf_scenarios_free(scen);
    cf_network_free(net);
}

/// The hand-maintained header must declare exactly the exported symbols.
#[test]
fn header_matches_exported_symbols() {
    let header = include_str!("../include/carbonflow.h");
    let mut declared: Vec<&str> = Vec::new();
    for token in header.split(|c: char| !(c.is_alphanumeric() || c == '_')) {
        if token.starts_with("cf_")
            && token.len() > 3
            && token != "cf_status"
            && !declared.contains(&token)
        {
            declared.push(token);
        }
    }
    let mut exported = vec![
        "cf_version",
        "cf_last_error_message",
        "cf_network_parse_json",
        "cf_network_generate",
        "cf_network_to_json",
        "cf_network_bus_count",
        "cf_network_line_count",
        "cf_network_generator_count",
        "cf_network_free",
        "cf_string_free",
        "cf_scenarios_parse_csv",
        "cf_scenarios_generate",
        "cf_scenarios_hour_count",
        "cf_scenarios_free",
        "cf_simulate",
        "cf_result_hour_count",
        "cf_result_lme",
        "cf_result_sci",
        "cf_result_lmp",
        "cf_result_generation",
        "cf_result_hour_scalars",
        "cf_result_hour_flag_count",
        "cf_result_account_totals",
        "cf_result_free",
    ];
    declared.sort_unstable();
    exported.sort_unstable();
    assert_eq!(declared, exported);
}
