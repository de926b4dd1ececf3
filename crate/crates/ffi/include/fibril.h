#ifndef FIBRIL_H
#define FIBRIL_H

/* Generated by cbindgen; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Status codes returned by every API call.
typedef enum FibrilStatus {
  // Success.
  FIBRIL_OK = 0,
  // A pointer argument was null.
  FIBRIL_NULL_POINTER = 1,
  // An argument failed validation (bad geometry, bad compliance, ...).
  FIBRIL_INVALID_ARGUMENT = 2,
  // The computation itself failed (singular system, non-detaching, ...).
  FIBRIL_COMPUTE_ERROR = 3,
  // An index was out of range.
  FIBRIL_OUT_OF_RANGE = 4,
} FibrilStatus;

// Opaque fibril-array handle.
typedef struct fibril_array fibril_array;

// Opaque detachment-trace handle.
typedef struct fibril_trace fibril_trace;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the most recent failure on this thread, or null if none.
// The pointer is owned by the library; do not free it.
const char *fibril_last_error_message(void);

// Library version as a static UTF-8 string.
const char *fibril_version(void);

// Build a circular array of the given radius (in mean fibril radii) with
// a square lattice at `spacing`; fibril properties are the three template
// ratios.
enum FibrilStatus fibril_array_circle(double radius,
                                      double spacing,
                                      double radius_ratio,
                                      double length_ratio,
                                      double modulus_ratio,
                                      struct fibril_array **out);

// Build a square array of the given half-side length.
enum FibrilStatus fibril_array_square(double half_side,
                                      double spacing,
                                      double radius_ratio,
                                      double length_ratio,
                                      double modulus_ratio,
                                      struct fibril_array **out);

// Build an equilateral-triangle array of the given circumradius.
enum FibrilStatus fibril_array_triangle(double side,
                                        double spacing,
                                        double radius_ratio,
                                        double length_ratio,
                                        double modulus_ratio,
                                        struct fibril_array **out);

// Number of fibrils in the array.
enum FibrilStatus fibril_array_size(const struct fibril_array *array, size_t *out);

// Center coordinates of fibril `index` (units of the mean fibril radius).
enum FibrilStatus fibril_array_position(const struct fibril_array *array,
                                        size_t index,
                                        double *out_x,
                                        double *out_y);

// Release an array handle (null is a no-op).
void fibril_array_free(struct fibril_array *array);

// Simulate displacement-controlled detachment to complete failure.
//
// `compliances` must hold `fibril_array_size` positive entries; pass the
// misalignment slopes as `beta_x`/`beta_y` (0 for pure normal loading).
enum FibrilStatus fibril_simulate(const struct fibril_array *array,
                                  const double *compliances,
                                  size_t len,
                                  double beta_x,
                                  double beta_y,
                                  struct fibril_trace **out);

// Adhesive strength: peak total force over the trace, normalized by the
// all-attached critical load.
enum FibrilStatus fibril_trace_strength(const struct fibril_trace *trace, double *out);

// Number of detachment events (= number of fibrils).
enum FibrilStatus fibril_trace_event_count(const struct fibril_trace *trace, size_t *out);

// Event `index`: the backing displacement at detachment, the total force
// just before it, and the detached fibril id. Null outputs are skipped.
enum FibrilStatus fibril_trace_event(const struct fibril_trace *trace,
                                     size_t index,
                                     double *out_displacement,
                                     double *out_force,
                                     size_t *out_fibril_id);

// Release a trace handle (null is a no-op).
void fibril_trace_free(struct fibril_trace *trace);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FIBRIL_H */
