/* C interface to the bespoke separation library.
 *
 * Every function returns a bespoke_status. On failure the message is available
 * from bespoke_last_error() on the calling thread until the next call. Strings
 * returned through char** out-parameters are owned by the caller and released
 * with bespoke_string_free(). */
#ifndef BESPOKE_H
#define BESPOKE_H

#include <stdint.h>

#if defined(BESPOKE_BUILDING_LIBRARY)
#define BESPOKE_API __attribute__((visibility("default")))
#else
#define BESPOKE_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum bespoke_status {
  BESPOKE_OK = 0,
  BESPOKE_ERR_INVALID_ARGUMENT = 1,
  BESPOKE_ERR_PARSE = 2,
  BESPOKE_ERR_UNSUPPORTED_FORMAT = 3,
  BESPOKE_ERR_OUT_OF_RANGE = 4,
  BESPOKE_ERR_IO = 5,
  BESPOKE_ERR_VALIDATION = 6,
  BESPOKE_ERR_CONFIGURATION = 7,
  BESPOKE_ERR_DEPENDENCY = 8,
  BESPOKE_ERR_INCOMPATIBLE_CHECKPOINT = 9,
  BESPOKE_ERR_SELECTOR = 10,
  BESPOKE_ERR_DEGENERATE_SILENCE = 11,
  BESPOKE_ERR_EMPTY_SCORE = 12,
  BESPOKE_ERR_TOO_SHORT = 13,
  BESPOKE_ERR_NUMERIC = 14,
  BESPOKE_ERR_RUNTIME = 15,
  BESPOKE_ERR_INTERNAL = 16
} bespoke_status;

BESPOKE_API const char* bespoke_version(void);
BESPOKE_API const char* bespoke_last_error(void);
/* Stable kebab-case name, e.g. "dependency". */
BESPOKE_API const char* bespoke_status_name(bespoke_status status);
/* Nonzero when the failure is caused by the caller's input (bad file, bad
 * config, missing prerequisite) rather than a fault while running. */
BESPOKE_API int bespoke_status_is_input_error(bespoke_status status);
BESPOKE_API void bespoke_string_free(char* s);

/* JSON array of {index, name, notes, min_pitch, max_pitch} for a MIDI file. */
BESPOKE_API bespoke_status bespoke_tracks_json(const char* midi_path, char** out_json);

typedef struct bespoke_overrides {
  int has_seed;
  uint64_t seed;
  int has_steps;
  int64_t steps;
  const char* output_root; /* NULL: config, then $BESPOKE_OUTPUT_ROOT, then ./experiments */
  int allow_wide_ranges;
} bespoke_overrides;

/* Parses and validates a project config; on success *out_json (optional)
 * receives the resolved configuration. */
BESPOKE_API bespoke_status bespoke_config_validate(const char* config_path, int allow_wide_ranges, char** out_json);

typedef void (*bespoke_progress_fn)(int64_t step, double wall_time_s, double loss, void* user);

typedef struct bespoke_experiment bespoke_experiment;

BESPOKE_API bespoke_status bespoke_experiment_create(const char* config_path, const bespoke_overrides* overrides,
                                                     bespoke_experiment** out);
BESPOKE_API bespoke_status bespoke_experiment_open(const char* dir, bespoke_experiment** out);
BESPOKE_API void bespoke_experiment_free(bespoke_experiment* exp);
/* Valid until the handle is freed. */
BESPOKE_API const char* bespoke_experiment_dir(const bespoke_experiment* exp);
/* steps <= 0 keeps the configured count. */
BESPOKE_API bespoke_status bespoke_experiment_train(bespoke_experiment* exp, int64_t steps,
                                                    bespoke_progress_fn progress, void* user);
BESPOKE_API bespoke_status bespoke_experiment_separate(bespoke_experiment* exp);
BESPOKE_API bespoke_status bespoke_experiment_run(bespoke_experiment* exp, bespoke_progress_fn progress, void* user);

/* Runs every song of a benchmark config and writes report.json plus per-song
 * stems into a fresh directory under the output root. *out_dir receives that
 * directory. Individual song failures are reported inside report.json. */
BESPOKE_API bespoke_status bespoke_benchmark_run(const char* bench_path, const bespoke_overrides* overrides,
                                                 bespoke_progress_fn progress, void* user, char** out_dir);

#ifdef __cplusplus
}
#endif

#endif
