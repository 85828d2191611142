#ifndef SEMIFLUXON_H
#define SEMIFLUXON_H

#include <stddef.h>
#include <stdint.h>

typedef enum SfxStatus {
  SFX_STATUS_OK = 0,
  SFX_STATUS_NULL_POINTER = 1,
  SFX_STATUS_DOMAIN = 2,
  SFX_STATUS_ARGUMENT = 3,
  SFX_STATUS_GEOMETRY = 4,
  SFX_STATUS_INVALID_SHAPE = 5,
  SFX_STATUS_NOT_AN_EIGENVALUE = 6,
  SFX_STATUS_WINDOW = 7,
  SFX_STATUS_STENCIL = 8,
  SFX_STATUS_UNDEFINED_DIRECTION = 9,
  SFX_STATUS_TRACING = 10,
  SFX_STATUS_NON_CONVERGENCE = 11,
  SFX_STATUS_OUT_OF_RANGE = 12,
  SFX_STATUS_PANIC = 13,
} SfxStatus;

typedef enum SfxParity {
  SFX_PARITY_EVEN = 0,
  SFX_PARITY_ODD = 1,
} SfxParity;

// A billiard shape with its solver settings.
typedef struct SfxBilliard SfxBilliard;

typedef struct SfxCatalog SfxCatalog;

// Ascending levels, degenerate ones repeated.
typedef struct SfxLevels SfxLevels;

typedef struct SfxDegeneracy {
  // Lower level of the pair `(n, n+1)`, from 1.
  uint32_t n;
  double x;
  double y;
  double k;
  double gap;
} SfxDegeneracy;

typedef struct SfxForce {
  double k;
  double nodal_direction[2];
  // `-grad k^2` over the flux position.
  double hf_gradient[2];
  double alignment_cos;
  double richardson;
} SfxForce;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or null. Valid until the
// next failing call on the same thread.
const char *sfx_last_error_message(void);

void sfx_clear_error(void);

// Library version as a static NUL-terminated string.
const char *sfx_version(void);

// Creates a billiard `w = z + a2 z^2 + a3 e^{i sigma} z^3` with default
// solver settings.
//
// # Safety
// `out` must be null or point to writable storage for one pointer.
enum SfxStatus sfx_billiard_new(double a2, double a3, double sigma, struct SfxBilliard **out);

// # Safety
// `h` must be null or a handle from [`sfx_billiard_new`] not yet freed.
void sfx_billiard_free(struct SfxBilliard *h);

// Sets the collocation truncation `N` (2N boundary points).
//
// # Safety
// `h` must be a live billiard handle.
enum SfxStatus sfx_billiard_set_truncation(struct SfxBilliard *h, uint32_t n);

// # Safety
// `h` must be a live billiard handle; `area` and `perimeter` writable.
enum SfxStatus sfx_billiard_area_perimeter(const struct SfxBilliard *h,
                                           double *area,
                                           double *perimeter);

// Levels in `[k_lo, k_hi]` with the flux at `(x, y)`.
//
// # Safety
// `h` must be a live billiard handle and `out` writable.
enum SfxStatus sfx_find_levels(const struct SfxBilliard *h,
                               double x,
                               double y,
                               double k_lo,
                               double k_hi,
                               struct SfxLevels **out);

// Circle levels of one parity with the flux at distance `r` from the centre,
// using `series` terms of the addition theorem.
//
// # Safety
// `out` must be writable.
enum SfxStatus sfx_circle_levels(enum SfxParity parity,
                                 double r,
                                 double k_lo,
                                 double k_hi,
                                 uint32_t series,
                                 struct SfxLevels **out);

// Number of levels, degenerate ones counted twice. 0 for a null handle.
//
// # Safety
// `l` must be null or a live level handle.
size_t sfx_levels_len(const struct SfxLevels *l);

// # Safety
// `l` must be a live level handle and `k` writable.
enum SfxStatus sfx_levels_get(const struct SfxLevels *l, size_t index, double *k);

// # Safety
// `l` must be null or a level handle not yet freed.
void sfx_levels_free(struct SfxLevels *l);

// Degeneracies of the pairs `(n, n+1)`, `n < n_max`.
//
// # Safety
// `h` must be a live billiard handle and `out` writable.
enum SfxStatus sfx_catalog(const struct SfxBilliard *h, uint32_t n_max, struct SfxCatalog **out);

// # Safety
// `c` must be null or a live catalog handle.
size_t sfx_catalog_len(const struct SfxCatalog *c);

// # Safety
// `c` must be a live catalog handle and `d` writable.
enum SfxStatus sfx_catalog_get(const struct SfxCatalog *c, size_t index, struct SfxDegeneracy *d);

// # Safety
// `c` must be null or a catalog handle not yet freed.
void sfx_catalog_free(struct SfxCatalog *c);

// Force on the flux at `(x, y)` for level `level` (from 1).
//
// # Safety
// `h` must be a live billiard handle and `out` writable.
enum SfxStatus sfx_force(const struct SfxBilliard *h,
                         double x,
                         double y,
                         uint32_t level,
                         double fd_step,
                         struct SfxForce *out);

// # Safety
// `codim` and `min_semifluxons` must be writable.
enum SfxStatus sfx_codimension(uint64_t n_levels, uint64_t *codim, uint64_t *min_semifluxons);

// # Safety
// `out` must be writable.
enum SfxStatus sfx_smoothed_staircase(double area, double perimeter, double energy, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SEMIFLUXON_H */
