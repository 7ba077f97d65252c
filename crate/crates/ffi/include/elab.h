#ifndef ELAB_H
#define ELAB_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result of every call.
typedef enum ElabStatus {
  ELAB_STATUS_OK = 0,
  ELAB_STATUS_NULL_POINTER = 1,
  ELAB_STATUS_INVALID_UTF8 = 2,
  // Bad configuration or argument value.
  ELAB_STATUS_CONFIG = 3,
  // Malformed data, template or record.
  ELAB_STATUS_SCHEMA = 4,
  // Training, teacher or I/O failure.
  ELAB_STATUS_RUNTIME = 5,
  // A Rust panic was caught at the boundary.
  ELAB_STATUS_PANIC = 6,
} ElabStatus;

// Opaque session handle.
typedef struct ElabSession ElabSession;

// Message of the last failed call on this thread, or null. Valid until the next failure.
const char *elab_last_error_message(void);

// Library version as a static string.
const char *elab_version(void);

// Releases a string returned by this library. Null is ignored.
void elab_string_free(char *s);

// Creates a session from TOML config text.
//
// With `persist` the teacher cache lives on disk under the configured output
// directory; otherwise it is kept in memory.
enum ElabStatus elab_session_new(const char *config_toml, bool persist, struct ElabSession **out);

// Destroys a session. Null is ignored.
void elab_session_free(struct ElabSession *s);

// Trains from scratch. With `write_outputs` metrics and checkpoints go to the
// configured output directory. `out_dev_accuracy` may be null; it receives NaN
// when no dev accuracy was measured.
enum ElabStatus elab_session_train(struct ElabSession *s,
                                   bool write_outputs,
                                   double *out_dev_accuracy);

// Replaces the session's models with a saved checkpoint.
enum ElabStatus elab_session_load_checkpoint(struct ElabSession *s, const char *path);

// Dev-set accuracy under the configured integration strategy.
enum ElabStatus elab_session_evaluate(struct ElabSession *s, double *out_accuracy);

// Answers one question. `out_elaboration` may be null; otherwise it receives
// the elaboration behind the answer, or null when the strategy has none.
enum ElabStatus elab_session_predict(struct ElabSession *s,
                                     const char *question,
                                     const char *const *candidates,
                                     size_t n_candidates,
                                     uint64_t seed,
                                     size_t *out_index,
                                     char **out_elaboration);

// Writes the top-p filtered, renormalized distribution over `n` tokens into `out`.
//
// `probs` must be non-negative with a positive sum; it is normalized first.
enum ElabStatus elab_nucleus_filter(const double *probs, size_t n, double p, double *out);

// Cosine similarity of two vectors of length `n`.
enum ElabStatus elab_cosine_similarity(const double *u, const double *v, size_t n, double *out);

// Renders the built-in few-shot teacher prompt of `dataset` (csqa, csqa2,
// qasc, obqa or synthetic) for one question.
enum ElabStatus elab_render_prompt(const char *dataset,
                                   const char *question,
                                   const char *const *candidates,
                                   size_t n_candidates,
                                   char **out);

#endif  /* ELAB_H */
