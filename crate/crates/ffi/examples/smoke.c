/* Build: cc smoke.c -I../include ../../../target/release/libcnmf2d_ffi.a -lpthread -ldl -lm */
#include <stdio.h>
#include <stdlib.h>

#include "cnmf2d.h"

#define CHECK(call)                                                        \
    do {                                                                   \
        Cnmf2dStatus s_ = (call);                                          \
        if (s_ != CNMF2D_STATUS_OK) {                                      \
            fprintf(stderr, "%s failed (%d): %s\n", #call, (int)s_,        \
                    cnmf2d_last_error_message());                          \
            return 1;                                                      \
        }                                                                  \
    } while (0)

int main(void) {
    Cnmf2dDims dims = {10, 25, 5, 2, 2};
    Cnmf2dFactors *truth = NULL;
    Cnmf2dMatrix *v = NULL;
    CHECK(cnmf2d_generate(&dims, 7, &truth, &v));

    Cnmf2dFactors *f = NULL;
    CHECK(cnmf2d_factors_random(&dims, 8, &f));

    Cnmf2dSolverConfig cfg = cnmf2d_solver_config_default();
    cfg.beta = 1.0;
    cfg.max_iters = 200;
    Cnmf2dTrace *trace = NULL;
    CHECK(cnmf2d_solve(v, f, &cfg, &trace));

    size_t n = cnmf2d_trace_len(trace);
    double *costs = malloc(n * sizeof(double));
    cnmf2d_trace_costs(trace, costs, n);
    for (size_t t = 1; t < n; t++) {
        if (costs[t] > costs[t - 1] * (1.0 + 1e-9)) {
            fprintf(stderr, "cost rose at iteration %zu\n", t + 1);
            return 1;
        }
    }
    printf("cnmf2d %s: %zu iterations, cost %.6g -> %.6g\n", cnmf2d_version(), n, costs[0],
           cnmf2d_trace_final_cost(trace));

    Cnmf2dMatrix *bad = NULL;
    double neg[2] = {1.0, -1.0};
    Cnmf2dMatrix *u = NULL;
    CHECK(cnmf2d_factors_reconstruct(f, &u));
    double d = 0.0;
    if (cnmf2d_divergence(v, NULL, 1.0, 1e-12, &d) != CNMF2D_STATUS_NULL_POINTER) return 1;
    CHECK(cnmf2d_matrix_new(1, 2, neg, &bad));
    if (cnmf2d_divergence(v, bad, 1.0, 1e-12, &d) != CNMF2D_STATUS_DIMENSION_MISMATCH) return 1;

    free(costs);
    cnmf2d_matrix_free(bad);
    cnmf2d_matrix_free(u);
    cnmf2d_trace_free(trace);
    cnmf2d_factors_free(f);
    cnmf2d_factors_free(truth);
    cnmf2d_matrix_free(v);
    return 0;
}
