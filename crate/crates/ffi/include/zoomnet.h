/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#ifndef ZOOMNET_H
#define ZOOMNET_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every fallible call.
 */
typedef enum ZnStatus {
  ZN_STATUS_OK = 0,
  ZN_STATUS_NULL_ARGUMENT = 1,
  ZN_STATUS_INVALID_UTF8 = 2,
  ZN_STATUS_INVALID_ARGUMENT = 3,
  ZN_STATUS_IO = 4,
  ZN_STATUS_PARSE = 5,
  ZN_STATUS_MODEL = 6,
  ZN_STATUS_PANIC = 7,
} ZnStatus;

/**
 * A loaded checkpoint of either model kind.
 */
typedef struct ZnModel ZnModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *zn_version(void);

/**
 * Message of the last failed call on this thread; empty after a success.
 * The pointer stays valid until the next call on this thread.
 */
const char *zn_last_error_message(void);

/**
 * Index (`3 * level + kind`) of an action, or -1 when out of range.
 * Levels: 0 word, 1 sentence, 2 paragraph. Kinds: 0 B, 1 I, 2 O.
 */
int32_t zn_action_index(uint32_t level, uint32_t kind);

/**
 * Loads a checkpoint written by the `zoomnet` CLI or library.
 *
 * # Safety
 * `path` must be a valid NUL-terminated string and `out` a valid pointer.
 */
enum ZnStatus zn_model_load(const char *path, struct ZnModel **out);

/**
 * Releases a handle from `zn_model_load`. Null is ignored.
 *
 * # Safety
 * `model` must be null or a handle not yet freed.
 */
void zn_model_free(struct ZnModel *model);

/**
 * Parameter counts. For the baseline, `encoder` and `controller` are 0.
 *
 * # Safety
 * `model` must be a live handle; each out pointer must be valid or null.
 */
enum ZnStatus zn_model_param_count(const struct ZnModel *model,
                                   size_t *total,
                                   size_t *encoder,
                                   size_t *controller);

/**
 * Labels one document given as a corpus JSON line (gold labels optional).
 *
 * `out` receives a JSON object with `id`, `labels`, `counts`
 * (`N_aw`/`N_as`/`N_ap`), `wlar` and, for the zooming network, `trace`.
 *
 * # Safety
 * `model` must be a live handle, `doc_json` a valid NUL-terminated string
 * and `out` a valid pointer.
 */
enum ZnStatus zn_model_label_json(const struct ZnModel *model, const char *doc_json, char **out);

/**
 * Releases a string returned by this library. Null is ignored.
 *
 * # Safety
 * `s` must be null or a string from this library not yet freed.
 */
void zn_string_free(char *s);

/**
 * Writes `docs` synthetic documents to `path` as JSONL.
 * `preset` 0 selects the court-judgment-like layout, 1 the
 * contract-like layout.
 *
 * # Safety
 * `path` must be a valid NUL-terminated string.
 */
enum ZnStatus zn_generate_corpus(uint32_t preset, size_t docs, uint64_t seed, const char *path);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ZOOMNET_H */
