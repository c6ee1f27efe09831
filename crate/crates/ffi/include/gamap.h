#ifndef GAMAP_H
#define GAMAP_H

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

typedef enum GamapStatus {
  GAMAP_STATUS_OK = 0,
  GAMAP_STATUS_NULL_POINTER = 1,
  GAMAP_STATUS_INVALID_ARGUMENT = 2,
  GAMAP_STATUS_IO = 3,
  GAMAP_STATUS_GENERATION = 4,
  GAMAP_STATUS_EPISODE = 5,
  GAMAP_STATUS_PLANNING = 6,
  GAMAP_STATUS_METRIC = 7,
  GAMAP_STATUS_PANIC = 8,
} GamapStatus;

typedef enum GamapDifficulty {
  GAMAP_DIFFICULTY_EASY = 0,
  GAMAP_DIFFICULTY_MAZE = 1,
  GAMAP_DIFFICULTY_MULTISCALE = 2,
} GamapDifficulty;

typedef enum GamapUpdateMode {
  GAMAP_UPDATE_MODE_MAX = 0,
  GAMAP_UPDATE_MODE_AVERAGE = 1,
  GAMAP_UPDATE_MODE_REPLACEMENT = 2,
} GamapUpdateMode;

typedef enum GamapPolicy {
  GAMAP_POLICY_GAMAP = 0,
  GAMAP_POLICY_NEAREST_FRONTIER = 1,
} GamapPolicy;

typedef enum GamapTermination {
  GAMAP_TERMINATION_STOP = 0,
  GAMAP_TERMINATION_MAX_STEPS = 1,
  GAMAP_TERMINATION_EXPLORATION_EXHAUSTED = 2,
  GAMAP_TERMINATION_STUCK = 3,
  GAMAP_TERMINATION_PROVIDER_FAILURE = 4,
} GamapTermination;

typedef enum GamapErrorClass {
  GAMAP_ERROR_CLASS_NONE = 0,
  GAMAP_ERROR_CLASS_DETECTION = 1,
  GAMAP_ERROR_CLASS_PLANNING = 2,
  GAMAP_ERROR_CLASS_EXPLORATION = 3,
} GamapErrorClass;

// Opaque scene handle.
typedef struct GamapScene GamapScene;

typedef struct GamapSceneInfo {
  size_t rows;
  size_t cols;
  // Meters per cell.
  double resolution;
  double spawn_x;
  double spawn_y;
  double spawn_theta;
  uint64_t seed;
  // A `GamapDifficulty` value.
  uint32_t difficulty;
} GamapSceneInfo;

// Episode knobs exposed over the C ABI; everything else keeps its default.
typedef struct GamapEpisodeConfig {
  size_t levels;
  // A `GamapUpdateMode` value.
  uint32_t update_mode;
  // A `GamapPolicy` value.
  uint32_t policy;
  size_t max_steps;
  double success_distance;
  size_t candidate_radius;
  // Per-observation salience gain is drawn from U[1 - noise, 1].
  double salience_noise;
  size_t n_geometric;
  size_t n_affordance;
} GamapEpisodeConfig;

typedef struct GamapEpisodeSummary {
  bool success;
  // A `GamapTermination` value.
  uint32_t termination;
  // A `GamapErrorClass` value.
  uint32_t error_class;
  size_t steps;
  double path_length;
  double shortest_path;
  double final_distance;
} GamapEpisodeSummary;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or null after a success.
//
// The pointer stays valid until the next gamap call on the same thread.
const char *gamap_last_error(void);

// Generates the scene for `seed` and `difficulty` (a `GamapDifficulty`) into `*out`.
//
// # Safety
// `out` must be a valid pointer to writable storage for one handle pointer.
enum GamapStatus gamap_scene_generate(uint64_t seed, uint32_t difficulty, struct GamapScene **out);

// Loads a scene JSON file into `*out`.
//
// # Safety
// `path` must be a NUL-terminated string and `out` a valid pointer to writable storage.
enum GamapStatus gamap_scene_load(const char *path, struct GamapScene **out);

// Releases a scene; null is ignored.
//
// # Safety
// `scene` must come from this library and not be used afterwards.
void gamap_scene_free(struct GamapScene *scene);

// # Safety
// `scene` must be a live handle and `out` a valid pointer.
enum GamapStatus gamap_scene_info(const struct GamapScene *scene, struct GamapSceneInfo *out);

// Default episode settings.
struct GamapEpisodeConfig gamap_episode_config_default(void);

// Runs one episode in `scene` with the synthetic provider.
//
// # Safety
// `scene` must be a live handle; `config` and `out` must be valid pointers.
enum GamapStatus gamap_run_episode(const struct GamapScene *scene,
                                   const struct GamapEpisodeConfig *config,
                                   struct GamapEpisodeSummary *out);

// Success rate (percent) over `n` episodes.
//
// # Safety
// `results` must point to `n` readable summaries and `out` must be valid.
enum GamapStatus gamap_success_rate(const struct GamapEpisodeSummary *results,
                                    size_t n,
                                    double *out);

// Success weighted by path length (percent) over `n` episodes.
//
// # Safety
// `results` must point to `n` readable summaries and `out` must be valid.
enum GamapStatus gamap_spl(const struct GamapEpisodeSummary *results, size_t n, double *out);

// Merged score of a revisited cell under `mode` (a `GamapUpdateMode`); `has_old = false`
// means the cell was never scored.
//
// # Safety
// `out` must be a valid pointer.
enum GamapStatus gamap_update_rule(bool has_old,
                                   double old,
                                   double new_score,
                                   uint32_t mode,
                                   double *out);

// Cosine similarity of two `dim`-long vectors.
//
// # Safety
// `a` and `b` must point to `dim` readable doubles and `out` must be valid.
enum GamapStatus gamap_cosine(const double *a, const double *b, size_t dim, double *out);

// Fast-marching distances (meters) from `(src_row, src_col)` over a row-major
// `rows x cols` slowness grid; blocked cells have non-finite or non-positive cost.
// Unreachable cells get `INFINITY`.
//
// # Safety
// `cost` must point to `rows * cols` readable doubles and `out` to as many writable ones.
enum GamapStatus gamap_fast_march(size_t rows,
                                  size_t cols,
                                  double resolution,
                                  const double *cost,
                                  size_t src_row,
                                  size_t src_col,
                                  double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* GAMAP_H */
