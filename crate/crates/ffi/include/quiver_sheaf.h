#ifndef QUIVER_SHEAF_H
#define QUIVER_SHEAF_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stddef.h>

/**
 * Result code of every `qs_*` call.
 */
typedef enum QsStatus {
  QS_STATUS_OK = 0,
  QS_STATUS_NULL_POINTER = 1,
  QS_STATUS_INVALID_UTF8 = 2,
  QS_STATUS_BUFFER_TOO_SMALL = 3,
  QS_STATUS_STRUCTURAL = 10,
  QS_STATUS_CONDITIONING = 11,
  QS_STATUS_NUMERIC = 12,
  QS_STATUS_PRECONDITION = 13,
  QS_STATUS_PARSE = 14,
  QS_STATUS_IO = 15,
  QS_STATUS_PANIC = 99,
} QsStatus;

/**
 * Opaque sheaf handle.
 */
typedef struct QsSheaf QsSheaf;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *qs_version(void);

/**
 * Copies the calling thread's last error message (NUL-terminated, truncated
 * to fit) into `buf` and returns the full message length in bytes, excluding
 * the terminator. Pass a null `buf` to query the length.
 *
 * # Safety
 * `buf` must be null or point to `len` writable bytes.
 */
size_t qs_last_error(char *buf, size_t len);

/**
 * Parses a sheaf from its JSON form (`graph`, `d_v`, `d_e`, `maps`).
 *
 * # Safety
 * `json` must be a NUL-terminated string; `out` must be writable.
 */
enum QsStatus qs_sheaf_from_json(const char *json, struct QsSheaf **out);

/**
 * Builds a sheaf from raw arrays.
 *
 * `edges` holds `2 * n_edges` vertex indices, two per edge. The lower index
 * of each pair is the tail whatever the order given.
 * `vertex_dims` has `n_vertices` entries, `edge_dims` has `n_edges`.
 * `maps` concatenates the row-major restriction maps in incidence order
 * (edge 0 tail, edge 0 head, edge 1 tail and so on); each is `d_e × d_v`.
 *
 * # Safety
 * Every pointer must reference the stated number of readable elements;
 * `out` must be writable.
 */
enum QsStatus qs_sheaf_from_maps(size_t n_vertices,
                                 const size_t *edges,
                                 size_t n_edges,
                                 const size_t *vertex_dims,
                                 const size_t *edge_dims,
                                 const double *maps,
                                 size_t maps_len,
                                 struct QsSheaf **out);

/**
 * Releases a handle. Null is ignored.
 *
 * # Safety
 * `sheaf` must be null or a handle from this library not yet freed.
 */
void qs_sheaf_free(struct QsSheaf *sheaf);

/**
 * Writes the sheaf JSON (NUL-terminated) into `buf` and its length in bytes,
 * excluding the terminator, into `written`. With a short buffer the status
 * is `QS_STATUS_BUFFER_TOO_SMALL` and `written` still receives the length.
 *
 * # Safety
 * `sheaf` must be a live handle; `buf` must be null or hold `len` bytes;
 * `written` must be writable.
 */
enum QsStatus qs_sheaf_to_json(const struct QsSheaf *sheaf, char *buf, size_t len, size_t *written);

/**
 * Counts: vertices, edges, `N₀` (total vertex stalk dimension) and `N₁`.
 *
 * # Safety
 * `sheaf` must be a live handle; each output must be null (skipped) or writable.
 */
enum QsStatus qs_sheaf_shape(const struct QsSheaf *sheaf,
                             size_t *n_vertices,
                             size_t *n_edges,
                             size_t *n0,
                             size_t *n1);

/**
 * The `N₀ × N₀` sheaf Laplacian, row-major.
 *
 * # Safety
 * `sheaf` must be a live handle; `out` must hold `len` doubles.
 */
enum QsStatus qs_sheaf_laplacian(const struct QsSheaf *sheaf, double *out, size_t len);

/**
 * `dim H⁰`, the number of independent global sections.
 *
 * # Safety
 * `sheaf` must be a live handle; `h` must be writable.
 */
enum QsStatus qs_sheaf_harmonic_dim(const struct QsSheaf *sheaf, size_t *h);

/**
 * Dirichlet energy `‖δx‖²` of a 0-cochain of length `N₀`.
 *
 * # Safety
 * `sheaf` must be a live handle; `x` must hold `len` doubles; `energy` must be writable.
 */
enum QsStatus qs_sheaf_dirichlet_energy(const struct QsSheaf *sheaf,
                                        const double *x,
                                        size_t len,
                                        double *energy);

/**
 * Runs `layers` explicit steps `x ← x − αΔx` in place with
 * `α = step_factor / λ_max`. On a non-finite state `x` keeps the last
 * finite iterate, `nonfinite_at` receives the failing step (0 otherwise)
 * and the status is still `QS_STATUS_OK`.
 *
 * # Safety
 * `sheaf` must be a live handle; `x` must hold `len` writable doubles;
 * `nonfinite_at` must be null or writable.
 */
enum QsStatus qs_sheaf_diffuse(const struct QsSheaf *sheaf,
                               double *x,
                               size_t len,
                               size_t layers,
                               double step_factor,
                               size_t *nonfinite_at);

/**
 * Central moment penalty `Σ_i ‖μ_i − (tr μ_i / d_i) I‖_F²`.
 *
 * # Safety
 * `sheaf` must be a live handle; `value` must be writable.
 */
enum QsStatus qs_sheaf_cent_mm(const struct QsSheaf *sheaf, double *value);

/**
 * Shifted moment penalty `Σ_i ‖μ_i − θ_i I‖_F²` after projecting the raw
 * per-object values (vertices first, then edges) onto `θ · d = 0`.
 *
 * # Safety
 * `sheaf` must be a live handle; `raw_theta` must hold `len` doubles;
 * `value` must be writable.
 */
enum QsStatus qs_sheaf_theta_mm(const struct QsSheaf *sheaf,
                                const double *raw_theta,
                                size_t len,
                                double *value);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* QUIVER_SHEAF_H */
