#ifndef FLOWSTEP_H
#define FLOWSTEP_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// `algorithm` argument of [`fs_analyze`].
#define FS_ALGO_CLASSIC 0

#define FS_ALGO_OPT 1

// `mode` argument of [`fs_incremental`].
#define FS_MODE_NAIVE 0

#define FS_MODE_OPT 1

// `slot` argument of [`fs_result_fact`].
#define FS_SLOT_IN 0

#define FS_SLOT_OUT 1

// Result code of every fallible call.
typedef enum FsStatus {
  FS_STATUS_OK = 0,
  FS_STATUS_NULL_ARGUMENT = 1,
  FS_STATUS_INVALID_UTF8 = 2,
  FS_STATUS_INVALID_ARGUMENT = 3,
  FS_STATUS_PARSE = 4,
  FS_STATUS_ANALYSIS = 5,
  FS_STATUS_NON_CONVERGENCE = 6,
  FS_STATUS_STORE = 7,
  FS_STATUS_IO = 8,
  FS_STATUS_NOT_FOUND = 9,
  FS_STATUS_PANIC = 10,
} FsStatus;

// A parsed control-flow graph.
typedef struct FsGraph FsGraph;

// Converged facts of one analysis run.
typedef struct FsResult FsResult;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message describing the last failure on this thread; empty after a
// successful call. Never null; owned by the library.
const char *fs_last_error(void);

// Parse a CFG from its text form.
//
// # Safety
// `text` must be a NUL-terminated string and `out` a valid pointer.
enum FsStatus fs_graph_parse(const char *text, struct FsGraph **out);

// Release a graph. Null is ignored.
//
// # Safety
// `graph` must come from [`fs_graph_parse`] and not be used afterwards.
void fs_graph_free(struct FsGraph *graph);

// Number of vertices, or 0 for a null graph.
//
// # Safety
// `graph` must be null or a live graph handle.
size_t fs_graph_vertex_count(const struct FsGraph *graph);

// Number of edges, or 0 for a null graph.
//
// # Safety
// `graph` must be null or a live graph handle.
size_t fs_graph_edge_count(const struct FsGraph *graph);

// Analyze `graph` with the analysis named `analysis` (`rd`, `cp` or
// `cache`; `sets`/`assoc` only matter for `cache`). `algorithm` is
// `FS_ALGO_CLASSIC` or `FS_ALGO_OPT`; `workers` must be at least 1.
//
// # Safety
// `graph` must be a live graph handle, `analysis` a NUL-terminated string
// and `out` a valid pointer.
enum FsStatus fs_analyze(const struct FsGraph *graph,
                         const char *analysis,
                         uint32_t sets,
                         uint32_t assoc,
                         uint32_t algorithm,
                         uint32_t workers,
                         struct FsResult **out);

// Release a result. Null is ignored.
//
// # Safety
// `result` must come from [`fs_analyze`] and not be used afterwards.
void fs_result_free(struct FsResult *result);

// Supersteps the run took, or 0 for a null result.
//
// # Safety
// `result` must be null or a live result handle.
uint64_t fs_result_supersteps(const struct FsResult *result);

// Messages the run sent, or 0 for a null result.
//
// # Safety
// `result` must be null or a live result handle.
uint64_t fs_result_messages(const struct FsResult *result);

// Text form of the fact at `vertex` (`slot` is `FS_SLOT_IN` or
// `FS_SLOT_OUT`). Free the string with [`fs_string_free`].
//
// # Safety
// `result` must be a live result handle and `out` a valid pointer.
enum FsStatus fs_result_fact(const struct FsResult *result,
                             uint64_t vertex,
                             uint32_t slot,
                             char **out);

// Write the result to a store file at `path`, replacing any existing file.
//
// # Safety
// `result` must be a live result handle and `path` a NUL-terminated string.
enum FsStatus fs_result_save(const struct FsResult *result, const char *path);

// Bring the store at `store_path` up to date with `new_graph` after the
// edits in `changes` (change-file text). `mode` is `FS_MODE_NAIVE` or
// `FS_MODE_OPT`. On success `*report_json` receives the JSON report.
//
// # Safety
// Pointers must be valid; strings NUL-terminated.
enum FsStatus fs_incremental(const struct FsGraph *new_graph,
                             const char *changes,
                             const char *store_path,
                             uint32_t mode,
                             uint32_t workers,
                             char **report_json);

// Solve `graph` with both engine algorithms and both sequential solvers.
// `*agree` is set to 1 if all four agree and 0 otherwise, in which case
// [`fs_last_error`] describes the first divergence.
//
// # Safety
// Pointers must be valid; `analysis` NUL-terminated.
enum FsStatus fs_verify(const struct FsGraph *graph,
                        const char *analysis,
                        uint32_t workers,
                        int32_t *agree);

// Release a string returned by this library. Null is ignored.
//
// # Safety
// `s` must come from this library and not be used afterwards.
void fs_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FLOWSTEP_H */
