#ifndef CNMF2D_H
#define CNMF2D_H

/* Generated by cbindgen from crates/ffi. Do not edit. */

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

typedef enum Cnmf2dStatus {
  CNMF2D_STATUS_OK = 0,
  CNMF2D_STATUS_NULL_POINTER = 1,
  CNMF2D_STATUS_INVALID_ARGUMENT = 2,
  CNMF2D_STATUS_DIMENSION_MISMATCH = 3,
  CNMF2D_STATUS_DOMAIN = 4,
  CNMF2D_STATUS_NUMERICAL_ABORT = 5,
  CNMF2D_STATUS_PARSE = 6,
  CNMF2D_STATUS_IO = 7,
  CNMF2D_STATUS_PANIC = 8,
} Cnmf2dStatus;

typedef struct Cnmf2dFactors Cnmf2dFactors;

typedef struct Cnmf2dMatrix Cnmf2dMatrix;

typedef struct Cnmf2dTrace Cnmf2dTrace;

// Model sizes. All fields must be at least 1.
typedef struct Cnmf2dDims {
  size_t k;
  size_t n;
  size_t i;
  size_t l;
  size_t m;
} Cnmf2dDims;

// Solver settings; start from `cnmf2d_solver_config_default()`.
// `normalize_every = 0` disables in-loop normalization.
typedef struct Cnmf2dSolverConfig {
  double beta;
  size_t max_iters;
  double tol;
  double floor;
  size_t normalize_every;
  double norm_order;
  bool legacy;
  uint64_t seed;
} Cnmf2dSolverConfig;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the last failed call on this thread, or an empty string.
// Valid until the next call into the library on this thread.
const char *cnmf2d_last_error_message(void);

const char *cnmf2d_version(void);

// Copies `rows * cols` row-major values from `data`.
enum Cnmf2dStatus cnmf2d_matrix_new(size_t rows,
                                    size_t cols,
                                    const double *data,
                                    struct Cnmf2dMatrix **out);

void cnmf2d_matrix_free(struct Cnmf2dMatrix *m);

// Rows of `m`, or 0 for a null handle.
size_t cnmf2d_matrix_rows(const struct Cnmf2dMatrix *m);

size_t cnmf2d_matrix_cols(const struct Cnmf2dMatrix *m);

// Copies the row-major data into `out`, which must hold `len >= rows * cols`
// values.
enum Cnmf2dStatus cnmf2d_matrix_copy_data(const struct Cnmf2dMatrix *m, double *out, size_t len);

enum Cnmf2dStatus cnmf2d_matrix_read_csv(const char *path, struct Cnmf2dMatrix **out);

enum Cnmf2dStatus cnmf2d_matrix_write_csv(const struct Cnmf2dMatrix *m, const char *path);

enum Cnmf2dStatus cnmf2d_d_beta(double p, double q, double beta, double *out);

// Entrywise divergence between `v` and `u`, with `u` floored at `floor`.
enum Cnmf2dStatus cnmf2d_divergence(const struct Cnmf2dMatrix *v,
                                    const struct Cnmf2dMatrix *u,
                                    double beta,
                                    double floor,
                                    double *out);

enum Cnmf2dStatus cnmf2d_factors_random(const struct Cnmf2dDims *dims,
                                        uint64_t seed,
                                        struct Cnmf2dFactors **out);

// Builds factors from `m_count` weight slices and `l_count` activation
// slices. The slices are copied; the caller keeps ownership.
enum Cnmf2dStatus cnmf2d_factors_from_slices(const struct Cnmf2dMatrix *const *w,
                                             size_t m_count,
                                             const struct Cnmf2dMatrix *const *h,
                                             size_t l_count,
                                             struct Cnmf2dFactors **out);

void cnmf2d_factors_free(struct Cnmf2dFactors *f);

enum Cnmf2dStatus cnmf2d_factors_dims(const struct Cnmf2dFactors *f, struct Cnmf2dDims *out);

// Copy of weight slice `m` as a new matrix handle.
enum Cnmf2dStatus cnmf2d_factors_w_slice(const struct Cnmf2dFactors *f,
                                         size_t m,
                                         struct Cnmf2dMatrix **out);

// Copy of activation slice `l` as a new matrix handle.
enum Cnmf2dStatus cnmf2d_factors_h_slice(const struct Cnmf2dFactors *f,
                                         size_t l,
                                         struct Cnmf2dMatrix **out);

enum Cnmf2dStatus cnmf2d_factors_reconstruct(const struct Cnmf2dFactors *f,
                                             struct Cnmf2dMatrix **out);

// Rescales in place to unit `p`-norm weight components.
enum Cnmf2dStatus cnmf2d_factors_normalize(struct Cnmf2dFactors *f, double p);

// Writes `W_m*.csv` and `H_l*.csv` into `dir`.
enum Cnmf2dStatus cnmf2d_factors_save(const struct Cnmf2dFactors *f, const char *dir);

enum Cnmf2dStatus cnmf2d_factors_load(const char *dir, struct Cnmf2dFactors **out);

// Synthetic ground truth: chi-squared(2) weights, uniform activations and
// their reconstruction.
enum Cnmf2dStatus cnmf2d_generate(const struct Cnmf2dDims *dims,
                                  uint64_t seed,
                                  struct Cnmf2dFactors **out_factors,
                                  struct Cnmf2dMatrix **out_v);

struct Cnmf2dSolverConfig cnmf2d_solver_config_default(void);

// Runs the iteration from the factors in `f`, replacing them with the
// result. `out_trace` may be null when the trace is not needed.
enum Cnmf2dStatus cnmf2d_solve(const struct Cnmf2dMatrix *v,
                               struct Cnmf2dFactors *f,
                               const struct Cnmf2dSolverConfig *config,
                               struct Cnmf2dTrace **out_trace);

enum Cnmf2dStatus cnmf2d_cost(const struct Cnmf2dMatrix *v,
                              const struct Cnmf2dFactors *f,
                              double beta,
                              double floor,
                              double *out);

size_t cnmf2d_trace_len(const struct Cnmf2dTrace *t);

// Copies up to `len` recorded costs into `out`; returns the count copied.
size_t cnmf2d_trace_costs(const struct Cnmf2dTrace *t, double *out, size_t len);

// Cost of the returned factors, or NaN for a null handle.
double cnmf2d_trace_final_cost(const struct Cnmf2dTrace *t);

bool cnmf2d_trace_stopped_early(const struct Cnmf2dTrace *t);

void cnmf2d_trace_free(struct Cnmf2dTrace *t);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CNMF2D_H */
