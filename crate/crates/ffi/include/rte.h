#ifndef RTE_H
#define RTE_H

/* Generated by cbindgen from the rte-ffi crate; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes returned by every fallible entry point.
 */
typedef enum RteStatus {
  RTE_OK = 0,
  /**
   * Invalid configuration (geometry, counts, time step).
   */
  RTE_ERR_CONFIG = 1,
  /**
   * Argument outside the mathematical domain of the operation.
   */
  RTE_ERR_DOMAIN = 2,
  /**
   * Time step above the stability bound, or the solve diverged.
   */
  RTE_ERR_STABILITY = 3,
  /**
   * A hypothesis of the stability theory is violated.
   */
  RTE_ERR_HYPOTHESIS = 4,
  /**
   * Null pointer or malformed string argument.
   */
  RTE_ERR_NULL_ARGUMENT = 5,
  /**
   * I/O or serialization failure.
   */
  RTE_ERR_IO = 6,
  /**
   * Internal panic; see the last error message.
   */
  RTE_ERR_INTERNAL = 7,
} RteStatus;

/**
 * Rectangular cell grid (opaque).
 */
typedef struct RteMesh RteMesh;

/**
 * Recorded solution of one solve (opaque).
 */
typedef struct RteSolution RteSolution;

/**
 * Discrete ordinate set (opaque).
 */
typedef struct RteVelocitySet RteVelocitySet;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message describing the most recent failure on this thread. The pointer
 * stays valid until the next failing call on the same thread.
 */
const char *rte_last_error_message(void);

/**
 * Build a rectangular mesh over [origin, origin + extents] with nx x ny
 * cells. `origin` and `extents` point at two doubles each.
 *
 * # Safety
 * Pointer arguments must be valid for the documented lengths.
 */
enum RteStatus rte_mesh_new(const double *origin,
                            const double *extents,
                            size_t nx,
                            size_t ny,
                            struct RteMesh **out);

/**
 * # Safety
 * `mesh` must come from `rte_mesh_new` and not be freed twice.
 */
void rte_mesh_free(struct RteMesh *mesh);

/**
 * # Safety
 * `mesh` must be a valid handle or null.
 */
size_t rte_mesh_n_cells(const struct RteMesh *mesh);

/**
 * Build the discrete ordinate set on the speed band [v_min, v_max].
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum RteStatus rte_velocity_set_new(double v_min,
                                    double v_max,
                                    size_t n_angles,
                                    size_t n_speeds,
                                    struct RteVelocitySet **out);

/**
 * # Safety
 * `vset` must come from `rte_velocity_set_new` and not be freed twice.
 */
void rte_velocity_set_free(struct RteVelocitySet *vset);

/**
 * # Safety
 * `vset` must be a valid handle or null.
 */
size_t rte_velocity_set_len(const struct RteVelocitySet *vset);

/**
 * # Safety
 * `vset` must be a valid handle or null.
 */
double rte_velocity_set_measure(const struct RteVelocitySet *vset);

/**
 * Minimum admissible observation time. Pass `beta <= 0` to use the
 * smallest squared ordinate speed as the denominator.
 *
 * # Safety
 * Handles must be valid; `out` must point at a double.
 */
enum RteStatus rte_min_observation_time(const struct RteMesh *mesh,
                                        const struct RteVelocitySet *vset,
                                        double beta,
                                        double *out);

/**
 * Largest stable time step for the given safety factor (pass 0 for the
 * default factor).
 * # Safety
 * Handles must be valid or null.
 */
double rte_max_stable_dt(const struct RteMesh *mesh,
                         const struct RteVelocitySet *vset,
                         double cfl_factor);

/**
 * Solve the forward problem with constant cross sections and the
 * isotropic kernel. `initial` points at n_cells * n_ordinates doubles in
 * cell-major order, or is NULL for the unit constant. When `zero_inflow`
 * is 0 the inflow data is the time-constant extension of the initial
 * value's boundary trace. Pass `dt <= 0` to use the stability bound.
 *
 * # Safety
 * Handles and buffers must be valid for the documented lengths.
 */
enum RteStatus rte_solve_forward_constant(const struct RteMesh *mesh,
                                          const struct RteVelocitySet *vset,
                                          double sigma_a,
                                          double sigma_s,
                                          const double *initial,
                                          int32_t zero_inflow,
                                          double horizon,
                                          double dt,
                                          struct RteSolution **out);

/**
 * Solve the linearized source problem (zero initial data, zero inflow,
 * right-hand side f with unit source factor). `f` points at
 * n_cells * n_ordinates doubles; NULL means f == 1.
 *
 * # Safety
 * Handles and buffers must be valid for the documented lengths.
 */
enum RteStatus rte_solve_linearized_constant(const struct RteMesh *mesh,
                                             const struct RteVelocitySet *vset,
                                             double sigma_a,
                                             double sigma_s,
                                             const double *f,
                                             double horizon,
                                             double dt,
                                             struct RteSolution **out);

/**
 * # Safety
 * `solution` must come from a solve call and not be freed twice.
 */
void rte_solution_free(struct RteSolution *solution);

/**
 * # Safety
 * `solution` must be a valid handle or null.
 */
size_t rte_solution_n_steps(const struct RteSolution *solution);

/**
 * # Safety
 * `solution` must be a valid handle or null.
 */
double rte_solution_dt(const struct RteSolution *solution);

/**
 * Copy the energy E(t) at every time node into `out` (length
 * n_steps + 1).
 *
 * # Safety
 * `out` must point at `len` doubles.
 */
enum RteStatus rte_solution_energy(const struct RteSolution *solution, double *out, size_t len);

/**
 * Boundary norm of the time-differentiated outflow trace (`weighted != 0`
 * applies the nu . v flux weight).
 *
 * # Safety
 * `out` must point at a double.
 */
enum RteStatus rte_solution_outflow_measurement(const struct RteSolution *solution,
                                                int32_t weighted,
                                                double *out);

/**
 * Run a full experiment pipeline from a TOML configuration file.
 * `subcommand` is one of "forward", "linearized", "carleman-check",
 * "energy-check", "stability-ensemble", "holder-sweep". Pass `seed < 0`
 * to keep the seed from the configuration.
 *
 * # Safety
 * String arguments must be valid NUL-terminated UTF-8.
 */
enum RteStatus rte_run_pipeline(const char *subcommand,
                                const char *config_path,
                                const char *out_dir,
                                int64_t seed);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* RTE_H */
