#ifndef AQL_H
#define AQL_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

typedef enum AqlStatus {
  AQL_STATUS_OK = 0,
  // A required pointer argument was null.
  AQL_STATUS_NULL_ARGUMENT = 1,
  // A string argument was not valid UTF-8.
  AQL_STATUS_INVALID_UTF8 = 2,
  // An argument was well-formed but unacceptable (bad timestamp,
  // invalid registry, unknown provider).
  AQL_STATUS_INVALID_ARGUMENT = 3,
  // A file could not be read.
  AQL_STATUS_IO = 4,
  // The input was valid but nothing matched (no query in the URL, no
  // applicable SERP parser).
  AQL_STATUS_NO_MATCH = 5,
  // The library panicked; the call had no effect.
  AQL_STATUS_INTERNAL = 6,
} AqlStatus;

// Opaque provider registry.
typedef struct AqlRegistry AqlRegistry;

// Message of the last failed call on this thread, or null. The pointer
// stays valid until the next call into the library on this thread.
const char *aql_last_error(void);

// Library version as a static string.
const char *aql_version(void);

// Releases a string returned by this library. Null is ignored.
//
// # Safety
// `s` must come from this library and not have been freed before.
void aql_string_free(char *s);

// Loads and validates a TOML registry file.
//
// # Safety
// `path` must be a NUL-terminated string; `out` must be writable.
enum AqlStatus aql_registry_load(const char *path, struct AqlRegistry **out);

// Parses and validates registry TOML held in memory.
//
// # Safety
// `toml` must be a NUL-terminated string; `out` must be writable.
enum AqlStatus aql_registry_from_toml(const char *toml, struct AqlRegistry **out);

// Releases a registry. Null is ignored.
//
// # Safety
// `registry` must come from this library and not have been freed before.
void aql_registry_free(struct AqlRegistry *registry);

// Number of providers, excluded ones included; 0 for null.
//
// # Safety
// `registry` must be null or a live registry handle.
size_t aql_registry_len(const struct AqlRegistry *registry);

// Runs the provider's parser chains over `url` and writes the extraction
// as JSON (`query`, `page`, `offset`, `matched_parser`). Returns
// `AQL_STATUS_NO_MATCH` when no field could be extracted.
//
// # Safety
// String arguments must be NUL-terminated; `out_json` must be writable.
enum AqlStatus aql_extract(const struct AqlRegistry *registry,
                           const char *provider_name,
                           const char *url,
                           char **out_json);

// Parses archived SERP bytes with the provider's SERP parser chain and
// writes the result as JSON (`interpreted_query`, `results`,
// `matched_spec`). `url` is the SERP's original URL, used to resolve
// relative links and evaluate gates. Returns `AQL_STATUS_NO_MATCH` when no spec
// applies.
//
// # Safety
// `html` must point to `html_len` readable bytes; other pointers as for
// [`aql_extract`].
enum AqlStatus aql_parse_serp(const struct AqlRegistry *registry,
                              const char *provider_name,
                              const uint8_t *html,
                              size_t html_len,
                              const char *url,
                              char **out_json);

// Query id for a capture: version-5 UUID, hyphenated lowercase.
//
// # Safety
// String arguments must be NUL-terminated; `out` must be writable.
enum AqlStatus aql_query_id(const char *url, const char *timestamp, char **out);

// Result id for the document at `rank` of the SERP captured at
// `query_timestamp`.
//
// # Safety
// String arguments must be NUL-terminated; `out` must be writable.
enum AqlStatus aql_result_id(const char *doc_url,
                             const char *query_timestamp,
                             uint64_t rank,
                             char **out);

// Wayback snapshot URL; a null `base` selects the public Wayback Machine.
//
// # Safety
// `base` must be null or NUL-terminated; other strings NUL-terminated;
// `out` must be writable.
enum AqlStatus aql_wayback_url(const char *base,
                               const char *timestamp,
                               const char *url,
                               char **out);

// Whether a landing page looks like it offers a search interface.
//
// # Safety
// `html` must point to `html_len` readable bytes; `out` must be writable.
enum AqlStatus aql_detect_search_interface(const uint8_t *html, size_t html_len, bool *out);

#endif  /* AQL_H */
