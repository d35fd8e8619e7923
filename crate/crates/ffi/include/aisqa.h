#ifndef AISQA_H
#define AISQA_H

#pragma once

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum AisqaStatus {
  AISQA_STATUS_OK = 0,
  AISQA_STATUS_INVALID_ARGUMENT = 1,
  AISQA_STATUS_DATA = 2,
  AISQA_STATUS_UPSTREAM = 3,
  AISQA_STATUS_NULL_POINTER = 4,
  AISQA_STATUS_PANIC = 5,
} AisqaStatus;

// Opaque record store.
typedef struct AisqaStore AisqaStore;

typedef struct AisqaBox {
  double lat_min;
  double lat_max;
  double lon_min;
  double lon_max;
} AisqaBox;

typedef struct AisqaInterval {
  double point;
  double center;
  double low;
  double high;
} AisqaInterval;

typedef struct AisqaZTest {
  double p1;
  double p2;
  double p_pool;
  double z;
  double p_value;
} AisqaZTest;

typedef struct AisqaRopeConfig {
  double base;
  double scale;
  uint64_t original_context;
  uint64_t target_context;
  size_t head_dim;
  double ramp_low;
  double ramp_high;
} AisqaRopeConfig;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or null.
//
// The pointer stays valid until the next aisqa call on the same thread.
const char *aisqa_last_error(void);

// Free a string returned by this library. Null is ignored.
//
// # Safety
// `s` must come from an aisqa function that documents ownership transfer.
void aisqa_string_free(char *s);

struct AisqaStore *aisqa_store_new(void);

// Open a store directory written by the ingest stage.
//
// # Safety
// `dir` must be a NUL-terminated string; `out` must be writable.
enum AisqaStatus aisqa_store_open(const char *dir, struct AisqaStore **out);

// Ingest one CSV file. Accepted and rejected row counts are optional outputs.
//
// # Safety
// `store` must be live; `path` NUL-terminated; the counters null or writable.
enum AisqaStatus aisqa_store_ingest_csv(struct AisqaStore *store,
                                        const char *path,
                                        uint64_t *accepted,
                                        uint64_t *rejected);

// Number of records, or 0 for a null store.
//
// # Safety
// `store` must be null or live.
uint64_t aisqa_store_len(const struct AisqaStore *store);

// Records and distinct vessels in `[start, end)` (Unix seconds) inside `bbox`.
//
// # Safety
// `store` must be live; the outputs null or writable.
enum AisqaStatus aisqa_store_count(const struct AisqaStore *store,
                                   int64_t start_unix,
                                   int64_t end_unix,
                                   struct AisqaBox bbox,
                                   uint64_t *records,
                                   uint64_t *vessels);

// # Safety
// `store` must be null or come from this library and not be used afterwards.
void aisqa_store_free(struct AisqaStore *store);

double aisqa_normal_cdf(double z);

// # Safety
// `out` must be writable.
enum AisqaStatus aisqa_wilson(uint64_t successes,
                              uint64_t n,
                              double confidence,
                              struct AisqaInterval *out);

// # Safety
// `out` must be writable.
enum AisqaStatus aisqa_ztest(uint64_t x1,
                             uint64_t n1,
                             uint64_t x2,
                             uint64_t n2,
                             struct AisqaZTest *out);

// Judge a response against a reference answer with the given tolerances.
//
// When `detail_json` is non-null it receives the full outcome as JSON;
// release it with [`aisqa_string_free`].
//
// # Safety
// Strings must be NUL-terminated; `correct` writable; `detail_json` null or writable.
enum AisqaStatus aisqa_judge(const char *response,
                             const char *reference,
                             double rel_tol,
                             double zero_abs_tol,
                             bool *correct,
                             char **detail_json);

// YaRN-scaled rotary frequency of pair `d`.
//
// # Safety
// `out` must be writable.
enum AisqaStatus aisqa_yarn_frequency(struct AisqaRopeConfig cfg, size_t d, double *out);

// Label-smoothed cross-entropy of a predicted distribution of `len` entries.
//
// # Safety
// `predicted` must point to `len` readable doubles; `out` must be writable.
enum AisqaStatus aisqa_smoothed_ce(const double *predicted,
                                   size_t len,
                                   size_t true_index,
                                   double epsilon,
                                   double *out);

// Dead-reckoned position `delta_t_secs` after a report.
//
// # Safety
// `out_lat` and `out_lon` must be writable.
enum AisqaStatus aisqa_predict_position(double lat,
                                        double lon,
                                        double sog_kn,
                                        double cog_deg,
                                        double delta_t_secs,
                                        double *out_lat,
                                        double *out_lon);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* AISQA_H */
