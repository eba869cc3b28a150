#ifndef GRAMA_H
#define GRAMA_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Nonlinearity, stored as `uint32_t` in [`GramaModelOptions`].
typedef enum GramaActivation {
  GRAMA_ACTIVATION_RELU = 0,
  GRAMA_ACTIVATION_ELU = 1,
  GRAMA_ACTIVATION_GELU = 2,
  GRAMA_ACTIVATION_TANH = 3,
} GramaActivation;

// Prediction granularity, stored as `uint32_t` in [`GramaModelOptions`].
typedef enum GramaLevel {
  GRAMA_LEVEL_NODE = 0,
  GRAMA_LEVEL_GRAPH = 1,
} GramaLevel;

// Result code of every fallible call.
typedef enum GramaStatus {
  GRAMA_STATUS_OK = 0,
  // A required pointer argument was null.
  GRAMA_STATUS_NULL_POINTER = 1,
  // An argument was out of range or inconsistent.
  GRAMA_STATUS_INVALID_ARGUMENT = 2,
  // The graph is malformed (edges, features, sizes).
  GRAMA_STATUS_GRAPH = 3,
  // Tensor shapes did not line up.
  GRAMA_STATUS_SHAPE = 4,
  // A configuration, dataset or run directory could not be used.
  GRAMA_STATUS_CONFIG = 5,
  // Reading a file failed.
  GRAMA_STATUS_IO = 6,
  // A Rust panic was caught at the boundary.
  GRAMA_STATUS_PANIC = 7,
} GramaStatus;

// Opaque graph handle.
typedef struct GramaGraph GramaGraph;

// Opaque model handle.
typedef struct GramaModel GramaModel;

// Stability summary of autoregressive coefficients.
typedef struct GramaStability {
  double spectral_radius;
  // Sum of absolute coefficients.
  double lagrange_bound;
  // `lagrange_bound <= 1`.
  bool sufficient_stable;
  // `spectral_radius <= 1` up to round-off.
  bool stable;
} GramaStability;

// Architecture of a freshly initialized model.
typedef struct GramaModelOptions {
  size_t in_dim;
  size_t out_dim;
  // A [`GramaLevel`] value.
  uint32_t level;
  size_t hidden;
  size_t seq_len;
  size_t blocks;
  size_t p;
  size_t q;
  size_t heads;
  // A [`GramaActivation`] value.
  uint32_t activation;
  // Attention-selected coefficients; otherwise learned constants.
  bool selective;
  bool stability_projection;
  // Plain GCN stack instead of ARMA blocks.
  bool gcn_baseline;
} GramaModelOptions;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string.
const char *grama_version(void);

// Message of the most recent failed call on this thread, or null if none.
// The pointer stays valid until the next failing call on the same thread.
const char *grama_last_error(void);

// Spectral radius of the companion matrix of `phi[0..p]` (lag order).
//
// # Safety
// `phi` must point to `p` doubles and `out` to writable memory.
enum GramaStatus grama_spectral_radius(const double *phi, size_t p, double *out);

// Stability summary of `phi[0..p]`.
//
// # Safety
// `phi` must point to `p` doubles and `out` to a writable struct.
enum GramaStatus grama_stability_report(const double *phi, size_t p, struct GramaStability *out);

// Smallest number of steps after which an input's influence on the output
// stays below `eps`. Sets `*infinite` (and leaves `*steps` at 0) when the
// influence never decays below `eps` within the search cap.
//
// # Safety
// `phi`/`theta` must point to `p`/`q` doubles; `steps` and `infinite` must
// be writable.
enum GramaStatus grama_propagation_horizon(const double *phi,
                                           size_t p,
                                           const double *theta,
                                           size_t q,
                                           double eps,
                                           uint64_t *steps,
                                           bool *infinite);

// Build an undirected graph with `n` nodes, `m` edges given as
// `edges[2k], edges[2k+1]`, and row-major `n x width` node features.
//
// # Safety
// `edges` must point to `2 m` values, `features` to `n * width` doubles and
// `out` to a writable handle slot.
enum GramaStatus grama_graph_new(size_t n,
                                 const size_t *edges,
                                 size_t m,
                                 const double *features,
                                 size_t width,
                                 struct GramaGraph **out);

// Disjoint union of `count` graphs; graph-level models predict one row per
// member.
//
// # Safety
// `graphs` must point to `count` valid graph handles.
enum GramaStatus grama_graph_batch(const struct GramaGraph *const *graphs,
                                   size_t count,
                                   struct GramaGraph **out);

// Node count of a graph, or 0 for a null handle.
//
// # Safety
// `graph` must be null or a valid handle.
size_t grama_graph_num_nodes(const struct GramaGraph *graph);

// Release a graph. Null is ignored.
//
// # Safety
// `graph` must be null or a handle not yet freed.
void grama_graph_free(struct GramaGraph *graph);

// Default options: hidden 32, two blocks of two recurrences, p = q = 2,
// ReLU, selective coefficients with two heads, node level.
struct GramaModelOptions grama_model_options_default(size_t in_dim, size_t out_dim);

// Initialize a model with deterministic parameters drawn from `seed`.
//
// # Safety
// `options` must point to a valid struct and `out` to a writable slot.
enum GramaStatus grama_model_new(const struct GramaModelOptions *options,
                                 uint64_t seed,
                                 struct GramaModel **out);

// Load the trained model of a run directory written by `grama train`.
// `data_dir` may be null to use the dataset recorded in the run.
//
// # Safety
// `run_dir` must be a NUL-terminated string, `data_dir` null or one, and
// `out` a writable slot.
enum GramaStatus grama_model_load(const char *run_dir,
                                  const char *data_dir,
                                  struct GramaModel **out);

// Number of doubles `grama_model_predict` writes for `graph`.
//
// # Safety
// `model` and `graph` must be valid handles and `len` writable.
enum GramaStatus grama_model_output_len(const struct GramaModel *model,
                                        const struct GramaGraph *graph,
                                        size_t *len);

// Row-major predictions for `graph` into `out[0..len]`; `len` must equal
// `grama_model_output_len`.
//
// # Safety
// `model` and `graph` must be valid handles and `out` must point to `len`
// writable doubles.
enum GramaStatus grama_model_predict(const struct GramaModel *model,
                                     const struct GramaGraph *graph,
                                     double *out,
                                     size_t len);

// Number of scalar parameters, or 0 for a null handle.
//
// # Safety
// `model` must be null or a valid handle.
size_t grama_model_num_params(const struct GramaModel *model);

// Release a model. Null is ignored.
//
// # Safety
// `model` must be null or a handle not yet freed.
void grama_model_free(struct GramaModel *model);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* GRAMA_H */
