#ifndef OWP_H
#define OWP_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Representation requested by [`OwpSolveOptions::rep`].
typedef enum OwpRep {
  OWP_REP_AUTO = 0,
  OWP_REP_XW = 1,
  OWP_REP_XLAMBDA = 2,
  OWP_REP_XONLY = 3,
} OwpRep;

// Return codes of the fallible entry points.
typedef enum OwpStatusCode {
  OWP_STATUS_CODE_OK = 0,
  OWP_STATUS_CODE_NULL_POINTER = 1,
  OWP_STATUS_CODE_INVALID_UTF8 = 2,
  OWP_STATUS_CODE_PARSE = 3,
  OWP_STATUS_CODE_SOLVER = 4,
  OWP_STATUS_CODE_OUT_OF_RANGE = 5,
  OWP_STATUS_CODE_PANIC = 6,
} OwpStatusCode;

// Outcome of a solve.
typedef enum OwpOutcome {
  OWP_OUTCOME_SOLVED = 0,
  OWP_OUTCOME_INFEASIBLE_NO_WPP = 1,
  OWP_OUTCOME_ORDER_LIMIT_REACHED = 2,
} OwpOutcome;

// Which vector of a minimizer to copy.
typedef enum OwpField {
  OWP_FIELD_X = 0,
  OWP_FIELD_W = 1,
  OWP_FIELD_LAMBDA = 2,
} OwpField;

// Opaque problem handle.
typedef struct OwpProblem OwpProblem;

// Opaque result handle.
typedef struct OwpResultHandle OwpResultHandle;

typedef struct OwpSolveOptions {
  enum OwpRep rep;
  // Highest relaxation order; 0 picks the default.
  uint32_t k_max;
  double rank_tol;
  double sdp_tol;
  uint32_t inverse_degree;
} OwpSolveOptions;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Defaults matching the command-line tool.
struct OwpSolveOptions owp_solve_options_default(void);

// Message of the last failed call on this thread, or NULL. The pointer is
// valid until the next call into this library from the same thread.
const char *owp_last_error_message(void);

// Library version, statically allocated.
const char *owp_version(void);

// Parses a problem document.
//
// # Safety
// `json` must be a NUL-terminated string and `out` a writable pointer.
enum OwpStatusCode owp_problem_from_json(const char *json, struct OwpProblem **out);

// Serializes a problem; free the string with [`owp_string_free`].
//
// # Safety
// `problem` must be a live handle or NULL.
char *owp_problem_to_json(const struct OwpProblem *problem);

// Number of decision variables, or 0 for NULL.
//
// # Safety
// `problem` must be a live handle or NULL.
size_t owp_problem_nvars(const struct OwpProblem *problem);

// Number of objectives, or 0 for NULL.
//
// # Safety
// `problem` must be a live handle or NULL.
size_t owp_problem_num_objectives(const struct OwpProblem *problem);

// # Safety
// `problem` must come from [`owp_problem_from_json`] and not be used again.
void owp_problem_free(struct OwpProblem *problem);

// Runs the full hierarchy. `options` may be NULL for defaults.
//
// # Safety
// `problem` must be a live handle, `options` NULL or valid, `out` writable.
enum OwpStatusCode owp_solve(const struct OwpProblem *problem,
                             const struct OwpSolveOptions *options,
                             struct OwpResultHandle **out);

// # Safety
// `result` must be a live handle.
enum OwpStatusCode owp_result_outcome(const struct OwpResultHandle *result, enum OwpOutcome *out);

// Optimal value; infinity when the weakly Pareto set is empty, NaN for NULL.
//
// # Safety
// `result` must be a live handle or NULL.
double owp_result_fmin(const struct OwpResultHandle *result);

// Relaxation order at which the run stopped.
//
// # Safety
// `result` must be a live handle or NULL.
uint32_t owp_result_order(const struct OwpResultHandle *result);

// # Safety
// `result` must be a live handle or NULL.
size_t owp_result_num_minimizers(const struct OwpResultHandle *result);

// Copies one vector of minimizer `index` into `buf`. `*len` holds the buffer
// capacity on entry and the vector length on return; with a NULL `buf` only
// the length is reported.
//
// # Safety
// `result` must be a live handle, `len` writable, and `buf` NULL or valid for
// `*len` writes.
enum OwpStatusCode owp_result_minimizer(const struct OwpResultHandle *result,
                                        size_t index,
                                        enum OwpField field,
                                        double *buf,
                                        size_t *len);

// Full JSON report; free with [`owp_string_free`].
//
// # Safety
// `result` must be a live handle or NULL.
char *owp_result_to_json(const struct OwpResultHandle *result);

// # Safety
// `result` must come from [`owp_solve`] and not be used again.
void owp_result_free(struct OwpResultHandle *result);

// Smallest preference value over a weight grid of the given resolution.
//
// # Safety
// `problem` must be a live handle and `out` writable.
enum OwpStatusCode owp_oracle_upper_bound(const struct OwpProblem *problem,
                                          size_t resolution,
                                          double *out);

// # Safety
// `s` must come from this library and not be used again.
void owp_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* OWP_H */
