#include <math.h>
#include <stdio.h>
#include <string.h>

#include "owp.h"

/* min x1 over the weakly Pareto set of two distances on the unit disk */
static const char *PROBLEM =
    "{\"version\": \"owp-problem/1\", \"nvars\": 2,"
    " \"preference\": [{\"exp\": [1, 0], \"coef\": 1.0}],"
    " \"objectives\": ["
    "  [{\"exp\": [2, 0], \"coef\": 1.0}, {\"exp\": [1, 0], \"coef\": -2.0},"
    "   {\"exp\": [0, 0], \"coef\": 1.0}, {\"exp\": [0, 2], \"coef\": 1.0}],"
    "  [{\"exp\": [2, 0], \"coef\": 1.0}, {\"exp\": [0, 2], \"coef\": 1.0},"
    "   {\"exp\": [0, 1], \"coef\": -2.0}, {\"exp\": [0, 0], \"coef\": 1.0}]],"
    " \"structure\": {\"type\": \"ball\"}}";

int main(void) {
    OwpProblem *prob = NULL;
    OwpResultHandle *res = NULL;
    OwpOutcome outcome;
    double x[2];
    size_t len = 2;

    if (owp_problem_from_json("{", &prob) != OWP_STATUS_CODE_PARSE || owp_last_error_message() == NULL) {
        fprintf(stderr, "bad document accepted\n");
        return 1;
    }
    if (owp_problem_from_json(PROBLEM, &prob) != OWP_STATUS_CODE_OK) {
        fprintf(stderr, "parse: %s\n", owp_last_error_message());
        return 1;
    }
    OwpSolveOptions opts = owp_solve_options_default();
    if (owp_solve(prob, &opts, &res) != OWP_STATUS_CODE_OK) {
        fprintf(stderr, "solve: %s\n", owp_last_error_message());
        return 1;
    }
    owp_result_outcome(res, &outcome);
    owp_result_minimizer(res, 0, OWP_FIELD_X, x, &len);
    printf("fmin %.6f x %.6f %.6f\n", owp_result_fmin(res), x[0], x[1]);
    int ok = outcome == OWP_OUTCOME_SOLVED && fabs(owp_result_fmin(res)) < 1e-4 && fabs(x[1] - 1.0) < 1e-3;
    owp_result_free(res);
    owp_problem_free(prob);
    return ok ? 0 : 1;
}
