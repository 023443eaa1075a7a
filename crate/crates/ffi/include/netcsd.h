#ifndef NETCSD_H
#define NETCSD_H

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

typedef enum NetcsdCommand {
  NETCSD_COMMAND_SIMULATE = 0,
  NETCSD_COMMAND_ANALYZE = 1,
  NETCSD_COMMAND_DETECT = 2,
  NETCSD_COMMAND_SWEEP = 3,
} NetcsdCommand;

/**
 * Result code of every fallible call. Values 2 to 4 match the CLI exit codes.
 */
typedef enum NetcsdStatus {
  NETCSD_STATUS_OK = 0,
  NETCSD_STATUS_VALIDATION = 2,
  NETCSD_STATUS_NUMERIC = 3,
  NETCSD_STATUS_IO = 4,
  NETCSD_STATUS_NULL_POINTER = 5,
  NETCSD_STATUS_BUFFER_TOO_SMALL = 6,
  NETCSD_STATUS_PANIC = 7,
} NetcsdStatus;

/**
 * Opaque graph handle.
 */
typedef struct NetcsdGraph NetcsdGraph;

/**
 * Opaque scenario handle.
 */
typedef struct NetcsdScenario NetcsdScenario;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. The pointer is
 * valid until the next call on the same thread.
 */
const char *netcsd_last_error_message(void);

/**
 * Releases a string returned by the library. Null is ignored.
 *
 * # Safety
 * `s` must come from this library and not have been freed.
 */
void netcsd_string_free(char *s);

/**
 * Parses `{"n": .., "edges": [{"u": .., "v": .., "w": ..}]}` (1-based).
 *
 * # Safety
 * `json` must be a nul-terminated string; `out` must be writable.
 */
enum NetcsdStatus netcsd_graph_from_json(const char *json, struct NetcsdGraph **out);

/**
 * # Safety
 * `g` must come from [`netcsd_graph_from_json`] and not have been freed.
 */
void netcsd_graph_free(struct NetcsdGraph *g);

/**
 * Number of nodes, or 0 for a null handle.
 *
 * # Safety
 * `g` must be null or a live graph handle.
 */
size_t netcsd_graph_node_count(const struct NetcsdGraph *g);

/**
 * Writes the weighted Laplacian, row-major, into `out[0..n*n]`.
 *
 * # Safety
 * `g` must be a live handle; `out` must hold `len` doubles.
 */
enum NetcsdStatus netcsd_graph_laplacian(const struct NetcsdGraph *g, double *out, size_t len);

/**
 * Algebraic connectivity and its unit eigenvector (`v2[0..n]`).
 *
 * # Safety
 * `g` must be a live handle; `lambda2` writable; `v2` must hold `len` doubles.
 */
enum NetcsdStatus netcsd_graph_fiedler(const struct NetcsdGraph *g,
                                       double *lambda2,
                                       double *v2,
                                       size_t len);

/**
 * Lag-1 autocorrelation of a series of at least 10 samples.
 *
 * # Safety
 * `series` must hold `len` doubles; `out` must be writable.
 */
enum NetcsdStatus netcsd_ar1_autocorrelation(const double *series, size_t len, double *out);

/**
 * Stationary covariance trace of `z <- G z + sigma w` for a symmetric
 * `dim x dim` row-major `G`. Sets `divergent` and leaves `trace` at
 * infinity when an eigenvalue of `G` reaches the unit circle.
 *
 * # Safety
 * `gamma_bar` must hold `dim*dim` doubles; `trace` and `divergent` writable.
 */
enum NetcsdStatus netcsd_covariance_trace(const double *gamma_bar,
                                          size_t dim,
                                          double sigma,
                                          double *trace,
                                          bool *divergent);

/**
 * Loads a scenario file, or a bundled preset given as `preset:<name>`.
 *
 * # Safety
 * `path` must be a nul-terminated string; `out` must be writable.
 */
enum NetcsdStatus netcsd_scenario_load(const char *path, struct NetcsdScenario **out);

/**
 * Parses scenario JSON.
 *
 * # Safety
 * `json` must be a nul-terminated string; `out` must be writable.
 */
enum NetcsdStatus netcsd_scenario_from_json(const char *json, struct NetcsdScenario **out);

/**
 * # Safety
 * `s` must come from a scenario constructor and not have been freed.
 */
void netcsd_scenario_free(struct NetcsdScenario *s);

/**
 * Runs `command` on the scenario. `out_dir` may be null for the default
 * output directory; `seed` overrides the noise seed when non-null. On
 * success `*summary_json` receives a string to release with
 * [`netcsd_string_free`]; `summary_json` itself may be null.
 *
 * # Safety
 * `s` must be a live handle; pointer arguments must be null or valid.
 */
enum NetcsdStatus netcsd_scenario_run(const struct NetcsdScenario *s,
                                      enum NetcsdCommand command,
                                      const char *out_dir,
                                      const uint64_t *seed,
                                      char **summary_json);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* NETCSD_H */
