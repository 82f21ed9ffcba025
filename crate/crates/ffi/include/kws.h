#ifndef KWS_H
#define KWS_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result codes. Zero is success.
typedef enum KwsStatus {
  KWS_STATUS_OK = 0,
  KWS_STATUS_NULL_ARGUMENT = 1,
  KWS_STATUS_INVALID_UTF8 = 2,
  KWS_STATUS_CONFIG = 3,
  KWS_STATUS_IO = 4,
  KWS_STATUS_BAD_FORMAT = 5,
  KWS_STATUS_UNIT_SET_MISMATCH = 6,
  KWS_STATUS_ALIGNMENT_INFEASIBLE = 7,
  KWS_STATUS_INVALID_INPUT = 8,
  KWS_STATUS_PANIC = 9,
} KwsStatus;

// Which unit stream a call refers to.
typedef enum KwsStream {
  KWS_STREAM_CHARACTER = 0,
  KWS_STREAM_SYLLABLE = 1,
} KwsStream;

// Loaded resources and settings from a pipeline config.
typedef struct KwsEngine KwsEngine;

// A posteriorgram in log-probabilities.
typedef struct KwsPosteriorgram KwsPosteriorgram;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failure on this thread, or NULL. Valid until the next
// failing call on the same thread.
const char *kws_last_error(void);

// Frees a string returned by this library. NULL is ignored.
//
// # Safety
// `s` must come from this library and not have been freed already.
void kws_string_free(char *s);

// Loads a pipeline config and every resource it names.
//
// # Safety
// `config_path` must be a NUL-terminated string; `out` must be writable.
enum KwsStatus kws_engine_open(const char *config_path, struct KwsEngine **out);

// # Safety
// `engine` must come from [`kws_engine_open`] or be NULL.
void kws_engine_free(struct KwsEngine *engine);

// Number of keywords the engine searches for.
//
// # Safety
// `engine` must be a live handle; `out` must be writable.
enum KwsStatus kws_engine_keyword_count(const struct KwsEngine *engine, size_t *out);

// Reads a posteriorgram file (binary or JSON).
//
// # Safety
// `path` must be a NUL-terminated string; `out` must be writable.
enum KwsStatus kws_pgram_read(const char *path, struct KwsPosteriorgram **out);

// Builds a posteriorgram from `frames * vocab` row-major natural-log
// probabilities. Column 0 is the blank.
//
// # Safety
// Strings must be NUL-terminated, `logp` must point to `frames * vocab`
// floats and `out` must be writable.
enum KwsStatus kws_pgram_new(const char *utt_id,
                             const char *unit_set_id,
                             double frame_period_s,
                             size_t frames,
                             size_t vocab,
                             const float *logp,
                             struct KwsPosteriorgram **out);

// # Safety
// `pg` must come from this library or be NULL.
void kws_pgram_free(struct KwsPosteriorgram *pg);

// # Safety
// `pg` must be a live handle; `out` must be writable.
enum KwsStatus kws_pgram_frames(const struct KwsPosteriorgram *pg, size_t *out);

// Decodes one stream with the engine's beam, LM and biasing settings and
// returns the N-best list as a JSON object.
//
// # Safety
// Handles must be live; `out_json` must be writable. Free the result with
// [`kws_string_free`].
enum KwsStatus kws_engine_decode(const struct KwsEngine *engine,
                                 const struct KwsPosteriorgram *pg,
                                 enum KwsStream stream,
                                 char **out_json);

// Decodes both streams and runs keyword detection. The result holds one
// hit per line: `utt_id kw_id start_s end_s score decision stage`,
// tab-separated. `pg_syll` may be NULL, which disables syllable matching.
//
// # Safety
// Handles must be live or NULL where allowed; `out_tsv` must be writable.
enum KwsStatus kws_engine_detect(const struct KwsEngine *engine,
                                 const struct KwsPosteriorgram *pg_char,
                                 const struct KwsPosteriorgram *pg_syll,
                                 char **out_tsv);

// Log-probability that `units` is emitted within frames `[start, end)`
// under CTC.
//
// # Safety
// `pg` must be live, `units` must point to `n_units` ids and `out` must be
// writable.
enum KwsStatus kws_score_ctc(const struct KwsPosteriorgram *pg,
                             const uint32_t *units,
                             size_t n_units,
                             size_t start,
                             size_t end,
                             double *out);

// Normalized pinyin edit distance between two space-separated syllable
// strings such as `"zhong1 guo2"`. With a NULL engine the built-in cost
// table is used.
//
// # Safety
// `a` and `b` must be NUL-terminated; `engine` must be live or NULL; `out`
// must be writable.
enum KwsStatus kws_phrase_distance(const struct KwsEngine *engine,
                                   const char *a,
                                   const char *b,
                                   double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* KWS_H */
