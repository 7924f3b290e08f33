#ifndef SSMK_H
#define SSMK_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum SsmkStatus {
  SSMK_STATUS_OK = 0,
  SSMK_STATUS_NULL_POINTER = 1,
  SSMK_STATUS_INVALID_UTF8 = 2,
  SSMK_STATUS_UNKNOWN_BUILTIN = 3,
  SSMK_STATUS_INVALID_SPEC = 4,
  SSMK_STATUS_UNKNOWN_POINT = 5,
  SSMK_STATUS_COMPUTATION = 6,
  SSMK_STATUS_PANIC = 7,
} SsmkStatus;

typedef enum SsmkMapKind {
  SSMK_MAP_KIND_INCLUSION = 0,
  SSMK_MAP_KIND_BETA = 1,
} SsmkMapKind;

/**
 * Opaque handle to a validated map description.
 */
typedef struct SsmkSpec SsmkSpec;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Creates a handle for a built-in map (`tent`, `gasket`, `fullshift2`).
 *
 * # Safety
 * `name` must be a nul-terminated string and `out` a valid pointer.
 */
enum SsmkStatus ssmk_spec_builtin(const char *name, struct SsmkSpec **out);

/**
 * Parses and validates a TOML map description.
 *
 * # Safety
 * `text` must be a nul-terminated string and `out` a valid pointer.
 */
enum SsmkStatus ssmk_spec_parse(const char *text, struct SsmkSpec **out);

/**
 * # Safety
 * `spec` must come from this library and not be used afterwards. Null is ignored.
 */
void ssmk_spec_free(struct SsmkSpec *spec);

/**
 * Sets the largest fiber matrix dimension computations may realize.
 *
 * # Safety
 * `spec` must be a live handle.
 */
enum SsmkStatus ssmk_spec_set_size_guard(struct SsmkSpec *spec, size_t guard);

/**
 * # Safety
 * `spec` must be a live handle and `out` a valid pointer.
 */
enum SsmkStatus ssmk_spec_branch_count(const struct SsmkSpec *spec, size_t *out);

/**
 * Writes the map description back out as TOML.
 *
 * # Safety
 * `spec` must be a live handle and `out` a valid pointer. Free the result
 * with `ssmk_string_free`.
 */
enum SsmkStatus ssmk_spec_to_toml(const struct SsmkSpec *spec, char **out);

/**
 * Number of distinct endpoints of length-`n` backward words from `point`.
 * A null `point` selects a generic point.
 *
 * # Safety
 * `spec` must be a live handle, `point` null or a nul-terminated string and
 * `out` a valid pointer.
 */
enum SsmkStatus ssmk_backward_count(const struct SsmkSpec *spec,
                                    const char *point,
                                    size_t n,
                                    uint64_t *out);

/**
 * Rank of K₀ of the level-`n` core.
 *
 * # Safety
 * `spec` must be a live handle and `out` a valid pointer.
 */
enum SsmkStatus ssmk_k0_rank(const struct SsmkSpec *spec, size_t n, size_t *out);

/**
 * Inclusion or shift matrix from level `n` to level `n + 1` as JSON, with
 * entries as exact decimal strings.
 *
 * # Safety
 * `spec` must be a live handle and `out` a valid pointer. Free the result
 * with `ssmk_string_free`.
 */
enum SsmkStatus ssmk_level_map_json(const struct SsmkSpec *spec,
                                    enum SsmkMapKind kind,
                                    size_t n,
                                    char **out);

/**
 * Trace pairing at level `n` for depths up to `r_max`, as JSON with `p/q`
 * strings.
 *
 * # Safety
 * `spec` must be a live handle and `out` a valid pointer. Free the result
 * with `ssmk_string_free`.
 */
enum SsmkStatus ssmk_traces_json(const struct SsmkSpec *spec, size_t n, size_t r_max, char **out);

/**
 * Full inductive-limit report up to level `n_max`, as JSON.
 *
 * # Safety
 * `spec` must be a live handle and `out` a valid pointer. Free the result
 * with `ssmk_string_free`.
 */
enum SsmkStatus ssmk_limit_json(const struct SsmkSpec *spec,
                                size_t n_max,
                                size_t r_max,
                                char **out);

/**
 * # Safety
 * `s` must come from this library and not be used afterwards. Null is ignored.
 */
void ssmk_string_free(char *s);

/**
 * Message for the most recent failure on this thread, or null. The pointer
 * stays valid until the next call into the library from the same thread.
 */
const char *ssmk_last_error_message(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SSMK_H */
