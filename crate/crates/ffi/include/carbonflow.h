/* C ABI for the carbonflow grid dispatch / marginal-emissions engine.
 *
 * Maintained by hand; must stay in sync with crates/ffi/src/lib.rs
 * (checked by the crate's header_matches_exported_symbols test).
 *
 * Conventions:
 *  - Objects are opaque handles; create with the cf_*_parse/generate
 *    constructors and release with the matching cf_*_free. Handles are
 *    not thread-safe.
 *  - Every fallible call returns a cf_status. On failure, a message is
 *    stored per thread; read it with cf_last_error_message().
 *  - Array getters return borrowed views into the handle; pointers stay
 *    valid until the handle is freed.
 */

#ifndef CARBONFLOW_H
#define CARBONFLOW_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum cf_status {
  CF_OK = 0,
  CF_ERR_NULL_ARG = 1, /* a required pointer argument was null */
  CF_ERR_UTF8 = 2,     /* a string argument was not valid UTF-8 */
  CF_ERR_PARSE = 3,    /* unparseable input or model invariant violated */
  CF_ERR_SOLVE = 4,    /* dispatch or sensitivity solve failed */
  CF_ERR_INDEX = 5,    /* hour or array index out of range */
  CF_ERR_INTERNAL = 6, /* internal invariant violated */
} cf_status;

typedef struct CfNetwork CfNetwork;     /* grid model */
typedef struct CfScenarios CfScenarios; /* hourly scenario series */
typedef struct CfSimResult CfSimResult; /* solved simulation */

/* Library version as a static NUL-terminated string. */
const char *cf_version(void);

/* Message for the most recent failure on this thread. Never null; empty
 * before any failure. Valid until the next failing call on this thread. */
const char *cf_last_error_message(void);

/* ------------------------------------------------------------ network */

/* Parse a case from JSON text. */
cf_status cf_network_parse_json(const char *json, CfNetwork **out);

/* Generate a synthetic three-region network (at least 3 buses and 6
 * generators). */
cf_status cf_network_generate(size_t buses, size_t lines, size_t generators,
                              uint64_t seed, CfNetwork **out);

/* Serialize a network to case JSON; free the string with cf_string_free. */
cf_status cf_network_to_json(const CfNetwork *network, char **out);

size_t cf_network_bus_count(const CfNetwork *network);
size_t cf_network_line_count(const CfNetwork *network);
size_t cf_network_generator_count(const CfNetwork *network);

void cf_network_free(CfNetwork *network);

/* Release a string returned by this library. Null is a no-op. */
void cf_string_free(char *s);

/* ---------------------------------------------------------- scenarios */

/* Parse an hourly scenario series (CSV text) against a network. */
cf_status cf_scenarios_parse_csv(const CfNetwork *network, const char *csv,
                                 CfScenarios **out);

/* Generate a seeded synthetic scenario series for a network. */
cf_status cf_scenarios_generate(const CfNetwork *network, size_t hours,
                                uint64_t seed, CfScenarios **out);

size_t cf_scenarios_hour_count(const CfScenarios *scenarios);

void cf_scenarios_free(CfScenarios *scenarios);

/* --------------------------------------------------------- simulation */

/* Run the two-tier dispatch, sensitivity, and accounting pipeline over a
 * scenario series. The same seed gives bit-identical results. */
cf_status cf_simulate(const CfNetwork *network, const CfScenarios *scenarios,
                      uint64_t seed, CfSimResult **out);

size_t cf_result_hour_count(const CfSimResult *result);

/* Borrowed per-hour vectors (valid until the result is freed):
 *  lme        one entry per bus, kgCO2 per marginal MWh of demand
 *  sci        one entry per line, kgCO2 per marginal MW of capacity
 *  lmp        one entry per bus, $ per marginal MWh of demand
 *  generation one entry per generator, MW dispatched */
cf_status cf_result_lme(const CfSimResult *result, size_t hour,
                        const double **out_ptr, size_t *out_len);
cf_status cf_result_sci(const CfSimResult *result, size_t hour,
                        const double **out_ptr, size_t *out_len);
cf_status cf_result_lmp(const CfSimResult *result, size_t hour,
                        const double **out_ptr, size_t *out_len);
cf_status cf_result_generation(const CfSimResult *result, size_t hour,
                               const double **out_ptr, size_t *out_len);

/* Scalars for one solved hour. Any out pointer may be null to skip it. */
cf_status cf_result_hour_scalars(const CfSimResult *result, size_t hour,
                                 double *out_emissions_kg,
                                 double *out_dispatch_cost,
                                 double *out_shed_mwh,
                                 double *out_residual_kg);

/* Number of sensitivities in this hour whose duals disagreed with the
 * finite-difference oracle and were replaced by it (degenerate hours).
 * The accounting identity may not close on such hours. */
cf_status cf_result_hour_flag_count(const CfSimResult *result, size_t hour,
                                    size_t *out_count);

/* Carbon-account totals over all hours; load + gen + line = scope1 up to
 * per-hour residuals. Any out pointer may be null to skip it. */
cf_status cf_result_account_totals(const CfSimResult *result,
                                   double *out_load_kg, double *out_gen_kg,
                                   double *out_line_kg,
                                   double *out_scope1_kg);

void cf_result_free(CfSimResult *result);

#ifdef __cplusplus
} /* extern "C" */
#endif

#endif /* CARBONFLOW_H */
