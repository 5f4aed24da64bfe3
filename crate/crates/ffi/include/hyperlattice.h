#ifndef HYPERLATTICE_H
#define HYPERLATTICE_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum HlStatus {
  HL_STATUS_OK = 0,
  HL_STATUS_NULL_POINTER = 1,
  HL_STATUS_INVALID_ARGUMENT = 2,
  HL_STATUS_CONFIG = 3,
  HL_STATUS_NUMERICAL = 4,
  HL_STATUS_IO = 5,
  HL_STATUS_PARSE = 6,
  HL_STATUS_BUFFER_TOO_SMALL = 7,
  HL_STATUS_PANIC = 8,
} HlStatus;

// Opaque lattice handle.
typedef struct HlLattice HlLattice;

// Opaque handle to a finished simulation.
typedef struct HlRun HlRun;

// Parameter substitution for one edge. NaN keeps the current value; a
// finite `impedance` sets the density to `impedance / speed`.
typedef struct HlEdgeOverride {
  double length;
  double speed;
  double impedance;
  double loss_factor;
} HlEdgeOverride;

// A point on an edge. `amplitude` is ignored for assessment points.
typedef struct HlPoint {
  size_t edge;
  double position;
  double amplitude;
} HlPoint;

typedef struct HlArrival {
  double time;
  double amplitude;
} HlArrival;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the last failed call on this thread, or null. Release with
// [`hl_string_free`].
char *hl_last_error_message(void);

// # Safety
// `s` must be null or a string returned by this library, not yet freed.
void hl_string_free(char *s);

// Number of edges of the `dimension`-cube lattice.
//
// # Safety
// `out` must be null or point to writable memory for one `u64`.
enum HlStatus hl_edge_count(size_t dimension, uint64_t *out);

// Generate a lattice with the default samplers.
//
// # Safety
// `out` must be null or point to writable memory for one handle pointer.
enum HlStatus hl_lattice_generate(size_t dimension, uint64_t seed, struct HlLattice **out);

// Parse a lattice document.
//
// # Safety
// `text` must be null or a NUL-terminated string; `out` must be null or
// writable.
enum HlStatus hl_lattice_from_toml(const char *text, struct HlLattice **out);

// Serialize a lattice. Release the string with [`hl_string_free`].
//
// # Safety
// `lattice` must be null or a live handle; `out` must be null or writable.
enum HlStatus hl_lattice_to_toml(const struct HlLattice *lattice, char **out);

// # Safety
// `lattice` must be null or a live handle, which is invalid afterwards.
void hl_lattice_free(struct HlLattice *lattice);

// Number of edges, or 0 for a null handle.
//
// # Safety
// `lattice` must be null or a live handle.
size_t hl_lattice_edges(const struct HlLattice *lattice);

// Replace parameters of edge `edge` in place. The lattice is unchanged on
// failure.
//
// # Safety
// `lattice` must be null or a live handle.
enum HlStatus hl_lattice_override(struct HlLattice *lattice,
                                  size_t edge,
                                  struct HlEdgeOverride values);

// Response at `assess` to the source at `drive` on the grid
// `omega_m = m * delta_omega`, `m < bins`, shifted by `-i * damping`. Writes
// `bins` values to each of `re` and `im`.
//
// # Safety
// `lattice` must be null or a live handle; `re` and `im` must be null or
// hold `bins` doubles each.
enum HlStatus hl_frequency_response(const struct HlLattice *lattice,
                                    struct HlPoint drive,
                                    struct HlPoint assess,
                                    double delta_omega,
                                    size_t bins,
                                    double damping,
                                    double *re,
                                    double *im);

// Run the standard sweep, transform and arrival picking.
//
// # Safety
// `lattice` must be null or a live handle; `out` must be null or writable.
enum HlStatus hl_run_simulate(const struct HlLattice *lattice,
                              struct HlPoint drive,
                              struct HlPoint assess,
                              struct HlRun **out);

// # Safety
// `run` must be null or a live handle, which is invalid afterwards.
void hl_run_free(struct HlRun *run);

// Detected arrivals in time order. `total` receives the count; pass a null
// buffer with `capacity` 0 to query it.
//
// # Safety
// `run` must be null or a live handle; `out` must hold `capacity` entries;
// `total` must be writable.
enum HlStatus hl_run_arrivals(const struct HlRun *run,
                              struct HlArrival *out,
                              size_t capacity,
                              size_t *total);

// Time-domain samples at spacing `dt`, starting at t = 0.
//
// # Safety
// `run` must be null or a live handle; `out` must hold `capacity` doubles;
// `total` and `dt` must be writable.
enum HlStatus hl_run_samples(const struct HlRun *run,
                             double *out,
                             size_t capacity,
                             size_t *total,
                             double *dt);

// Ray paths from `drive` to `assess` arriving by `t_max` with loss-free
// amplitude at least `floor`, in time order.
//
// # Safety
// `lattice` must be null or a live handle; `out` must hold `capacity`
// entries; `total` must be writable.
enum HlStatus hl_oracle_paths(const struct HlLattice *lattice,
                              struct HlPoint drive,
                              struct HlPoint assess,
                              double t_max,
                              double floor,
                              struct HlArrival *out,
                              size_t capacity,
                              size_t *total);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* HYPERLATTICE_H */
