#ifndef REACTION_INVERSE_H
#define REACTION_INVERSE_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Observation boundary bits, combined with `|`.
 */
#define RI_SIDE_BOTTOM 1

#define RI_SIDE_RIGHT 2

#define RI_SIDE_TOP 4

#define RI_SIDE_LEFT 8

typedef enum RiStatus {
  RI_STATUS_OK = 0,
  RI_STATUS_NULL_POINTER = 1,
  RI_STATUS_INVALID_ARGUMENT = 2,
  RI_STATUS_BUFFER_TOO_SMALL = 3,
  RI_STATUS_SOLVER_FAILURE = 4,
  RI_STATUS_IO = 5,
  RI_STATUS_PANIC = 6,
} RiStatus;

/**
 * Result of a multilevel inversion.
 */
typedef struct RiInversion RiInversion;

/**
 * Uniform triangulation of the square.
 */
typedef struct RiMesh RiMesh;

/**
 * Benchmark problem on one mesh with a fixed observation boundary.
 */
typedef struct RiProblem RiProblem;

typedef struct RiErrorMetrics {
  double beta;
  double neumann;
  double mixed;
  double dirichlet;
} RiErrorMetrics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. Valid until the next
 * failing call on the same thread.
 */
const char *ri_last_error(void);

/**
 * # Safety
 * `out` must be valid for writing one pointer.
 */
enum RiStatus ri_mesh_new(size_t level, struct RiMesh **out);

/**
 * # Safety
 * `mesh` must come from `ri_mesh_new` and not be freed twice. Null is ignored.
 */
void ri_mesh_free(struct RiMesh *mesh);

/**
 * Number of nodes, or 0 for a null handle.
 *
 * # Safety
 * `mesh` must be null or a live handle.
 */
size_t ri_mesh_node_count(const struct RiMesh *mesh);

/**
 * # Safety
 * `mesh` must be null or a live handle.
 */
size_t ri_mesh_triangle_count(const struct RiMesh *mesh);

/**
 * # Safety
 * `mesh` must be null or a live handle.
 */
double ri_mesh_size(const struct RiMesh *mesh);

/**
 * Copies node coordinates as `x0 y0 x1 y1 ...` into `out` (`len >= 2 * nodes`).
 *
 * # Safety
 * `out` must be valid for `len` writes.
 */
enum RiStatus ri_mesh_nodes(const struct RiMesh *mesh, double *out, size_t len);

/**
 * Benchmark problem at `level` observed on the sides in `gamma_mask`.
 *
 * # Safety
 * `out` must be valid for writing one pointer.
 */
enum RiStatus ri_problem_new(size_t level, uint8_t gamma_mask, struct RiProblem **out);

/**
 * # Safety
 * `problem` must come from `ri_problem_new` and not be freed twice. Null is ignored.
 */
void ri_problem_free(struct RiProblem *problem);

/**
 * # Safety
 * `problem` must be null or a live handle.
 */
size_t ri_problem_node_count(const struct RiProblem *problem);

/**
 * Neumann and mixed states for the default boundary data. `beta` holds nodal
 * values, or is null for the exact coefficient; the mixed problem uses the
 * trace of the Neumann state at the exact coefficient.
 *
 * # Safety
 * `beta` must be null or valid for `len` reads; `neumann` and `mixed` valid for
 * `len` writes, `len` equal to the node count.
 */
enum RiStatus ri_problem_forward(const struct RiProblem *problem,
                                 const double *beta,
                                 size_t len,
                                 double *neumann,
                                 double *mixed);

/**
 * Multilevel inversion of the benchmark problem. `levels` must double from one
 * entry to the next. Null rule strings select `sqrt` and `ex1`; `max_iter == 0`
 * keeps the default cap.
 *
 * # Safety
 * `levels` valid for `nlevels` reads, strings null or nul-terminated, `out`
 * valid for writing one pointer.
 */
enum RiStatus ri_invert(const size_t *levels,
                        size_t nlevels,
                        const char *rho_rule,
                        const char *theta_rule,
                        uint8_t gamma_mask,
                        uint64_t seed,
                        size_t max_iter,
                        struct RiInversion **out);

/**
 * # Safety
 * `inv` must come from `ri_invert` and not be freed twice. Null is ignored.
 */
void ri_inversion_free(struct RiInversion *inv);

/**
 * Node count of the finest level, or 0 for a null handle.
 *
 * # Safety
 * `inv` must be null or a live handle.
 */
size_t ri_inversion_node_count(const struct RiInversion *inv);

/**
 * Iterations spent on the finest level.
 *
 * # Safety
 * `inv` must be null or a live handle.
 */
size_t ri_inversion_iterations(const struct RiInversion *inv);

/**
 * # Safety
 * `out` must be valid for `len` writes.
 */
enum RiStatus ri_inversion_beta(const struct RiInversion *inv, double *out, size_t len);

/**
 * # Safety
 * `out` must be valid for one write.
 */
enum RiStatus ri_inversion_errors(const struct RiInversion *inv, struct RiErrorMetrics *out);

/**
 * Experimental orders of convergence: `n - 1` per-step values into `steps`
 * and their mean into `mean`.
 *
 * # Safety
 * `errors` and `mesh_sizes` valid for `n` reads, `steps` for `n - 1` writes,
 * `mean` for one write.
 */
enum RiStatus ri_eoc(const double *errors,
                     const double *mesh_sizes,
                     size_t n,
                     double *steps,
                     double *mean);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* REACTION_INVERSE_H */
