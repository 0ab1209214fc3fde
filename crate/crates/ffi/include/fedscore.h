#ifndef FEDSCORE_H
#define FEDSCORE_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result of every fallible call. Library error classes share their numbers
// with the `fedscore` command's exit codes.
typedef enum FsStatus {
  FS_STATUS_OK = 0,
  // Invalid settings or arguments (for example a bad interval level).
  FS_STATUS_CONFIG = 2,
  // Malformed input data or an unknown category.
  FS_STATUS_DATA = 3,
  // Numerical or protocol failure: separation, non-convergence, a bad
  // packet.
  FS_STATUS_NUMERICAL = 4,
  // File or JSON failure.
  FS_STATUS_IO = 5,
  // A required pointer was null or a string was not UTF-8.
  FS_STATUS_INVALID_ARGUMENT = 10,
  // The library panicked; this is a bug.
  FS_STATUS_PANIC = 11,
} FsStatus;

// A scorecard owned by the library.
typedef struct FsScoreCard FsScoreCard;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the most recent failure on this thread, or null. Owned by the
// library; do not free.
const char *fs_last_error(void);

// Library version as a static string.
const char *fs_version(void);

// Releases a string returned by this library. Null is ignored.
//
// # Safety
// `s` must come from this library and not have been freed already.
void fs_string_free(char *s);

// Parses a scorecard from its JSON form (`card.json`).
//
// # Safety
// `json` must be a nul-terminated string; `out` must be writable.
enum FsStatus fs_scorecard_from_json(const char *json, struct FsScoreCard **out);

// Parses a scorecard from its Markdown table (`card.md`).
//
// # Safety
// `markdown` must be a nul-terminated string; `out` must be writable.
enum FsStatus fs_scorecard_from_markdown(const char *markdown, struct FsScoreCard **out);

// Releases a scorecard. Null is ignored.
//
// # Safety
// `card` must come from this library and not have been freed already.
void fs_scorecard_free(struct FsScoreCard *card);

// Total points for one row given as a JSON object of variable name to
// category label, e.g. `{"age":"[40,65)","triage":"P1"}`.
//
// # Safety
// `card` must be a live scorecard, `row_json` a nul-terminated string and
// `out` writable.
enum FsStatus fs_scorecard_score(const struct FsScoreCard *card,
                                 const char *row_json,
                                 uint32_t *out);

// Highest attainable total of the card.
//
// # Safety
// `card` must be a live scorecard and `out` writable.
enum FsStatus fs_scorecard_max_total(const struct FsScoreCard *card, uint32_t *out);

// Renders the card as a Markdown table. Free the result with
// [`fs_string_free`].
//
// # Safety
// `card` must be a live scorecard and `out` writable.
enum FsStatus fs_scorecard_to_markdown(const struct FsScoreCard *card, char **out);

// Serializes the card to JSON. Free the result with [`fs_string_free`].
//
// # Safety
// `card` must be a live scorecard and `out` writable.
enum FsStatus fs_scorecard_to_json(const struct FsScoreCard *card, char **out);

// Area under the ROC curve; ties count one half.
//
// # Safety
// `scores` and `labels` must each point to `n` elements; `out` writable.
enum FsStatus fs_auc(const double *scores, const uint8_t *labels, size_t n, double *out);

// AUC with a DeLong interval at `level` (e.g. 0.95). Needs at least ten
// rows.
//
// # Safety
// `scores` and `labels` must each point to `n` elements; the three outputs
// must be writable.
enum FsStatus fs_auc_ci(const double *scores,
                        const uint8_t *labels,
                        size_t n,
                        double level,
                        double *out_auc,
                        double *out_low,
                        double *out_high);

// Maximum-likelihood logistic regression. `x` is `n × p` row-major and must
// include the intercept column if one is wanted; `out_beta` receives `p`
// coefficients.
//
// # Safety
// `x` must point to `n * p` elements, `y` to `n` and `out_beta` to `p`
// writable elements.
enum FsStatus fs_fit_mle(const double *x, const double *y, size_t n, size_t p, double *out_beta);

// Remote-site step of the one-shot protocol: reads the lead's broadcast
// packet and returns this site's reply (sample size, gradient and Hessian)
// in wire format. `x` is this site's encoded design, `n × p` row-major with
// `p` equal to the packet's coefficient count. Free the reply with
// [`fs_string_free`].
//
// # Safety
// `packet` must be a nul-terminated string, `x` must point to `n * p`
// elements, `y` to `n`, and `out` must be writable.
enum FsStatus fs_remote_summarize(const char *packet,
                                  uint32_t site_id,
                                  const double *x,
                                  const double *y,
                                  size_t n,
                                  size_t p,
                                  char **out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FEDSCORE_H */
