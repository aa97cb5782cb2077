#ifndef SSBFS_H
#define SSBFS_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum SsbfsAdversary {
  SSBFS_ADVERSARY_SILENT = 0,
  SSBFS_ADVERSARY_FAKE_ROOT = 1,
  SSBFS_ADVERSARY_MIRROR_ROOT = 2,
  SSBFS_ADVERSARY_OSCILLATOR = 3,
  SSBFS_ADVERSARY_RANDOM = 4,
  SSBFS_ADVERSARY_HONEST = 5,
} SsbfsAdversary;

/**
 * Where a process sits relative to the Byzantine processes.
 */
typedef enum SsbfsArea {
  SSBFS_AREA_ROOT = 0,
  SSBFS_AREA_BYZANTINE = 1,
  /**
   * Strictly closer to a Byzantine process than to the root (`S_B*`).
   */
  SSBFS_AREA_STRICT = 2,
  /**
   * Equally close (`E_B`).
   */
  SSBFS_AREA_FRONTIER = 3,
  /**
   * Strictly closer to the root.
   */
  SSBFS_AREA_OUTSIDE = 4,
} SsbfsArea;

typedef enum SsbfsDaemon {
  SSBFS_DAEMON_CENTRAL = 0,
  SSBFS_DAEMON_DISTRIBUTED = 1,
  SSBFS_DAEMON_SYNCHRONOUS = 2,
} SsbfsDaemon;

typedef enum SsbfsInit {
  /**
   * Every process at `(⊥, 0)`.
   */
  SSBFS_INIT_ZERO = 0,
  SSBFS_INIT_CORRUPTED = 1,
  /**
   * Seeded from `SsbfsRunOptions::seed`.
   */
  SSBFS_INIT_RANDOM = 2,
} SsbfsInit;

typedef enum SsbfsStatus {
  SSBFS_STATUS_OK = 0,
  SSBFS_STATUS_NULL_POINTER = 1,
  SSBFS_STATUS_INVALID_UTF8 = 2,
  SSBFS_STATUS_INVALID_INPUT = 3,
  SSBFS_STATUS_PARSE = 4,
  SSBFS_STATUS_CONTRACT = 5,
  SSBFS_STATUS_GENERATION = 6,
  SSBFS_STATUS_FAIRNESS = 7,
  SSBFS_STATUS_ANALYSIS = 8,
  SSBFS_STATUS_SCENARIO = 9,
  SSBFS_STATUS_IO = 10,
  SSBFS_STATUS_OUT_OF_RANGE = 11,
  SSBFS_STATUS_REPLAY_MISMATCH = 12,
  SSBFS_STATUS_PANIC = 13,
} SsbfsStatus;

typedef struct SsbfsExecution SsbfsExecution;

/**
 * A topology together with its Byzantine processes.
 */
typedef struct SsbfsTopology SsbfsTopology;

typedef struct SsbfsRunOptions {
  enum SsbfsDaemon daemon;
  /**
   * Random activation order when true, round robin otherwise.
   */
  bool random_fairness;
  enum SsbfsAdversary adversary;
  enum SsbfsInit init;
  uint64_t seed;
  /**
   * Step budget; 0 selects the default of `50·n·m`.
   */
  uint64_t max_steps;
} SsbfsRunOptions;

/**
 * Summary of an execution. Absent indices are reported as -1.
 */
typedef struct SsbfsMetrics {
  int64_t first_lc_index;
  int64_t first_lc_star_index;
  uint64_t disruption_count;
  uint64_t max_changes;
} SsbfsMetrics;

/**
 * Copies the last error message of this thread into `buf` (NUL-terminated,
 * truncated to `len`). Returns the full message length without the NUL.
 *
 * # Safety
 * `buf` must be null or point to `len` writable bytes.
 */
size_t ssbfs_last_error(char *buf, size_t len);

/**
 * Parses a topology in the text format of the CLI (`n root`, one edge per
 * line, optional `byz` line).
 *
 * # Safety
 * `text` must be a NUL-terminated string and `out_topology` writable.
 */
enum SsbfsStatus ssbfs_topology_parse(const char *text, struct SsbfsTopology **out_topology);

/**
 * # Safety
 * `topology` must be null or a handle from [`ssbfs_topology_parse`] not yet freed.
 */
void ssbfs_topology_free(struct SsbfsTopology *topology);

/**
 * Number of processes, 0 for a null handle.
 *
 * # Safety
 * `topology` must be null or a live handle.
 */
size_t ssbfs_topology_process_count(const struct SsbfsTopology *topology);

/**
 * Number of edges, 0 for a null handle.
 *
 * # Safety
 * `topology` must be null or a live handle.
 */
size_t ssbfs_topology_edge_count(const struct SsbfsTopology *topology);

/**
 * Diameter, 0 for a null handle.
 *
 * # Safety
 * `topology` must be null or a live handle.
 */
uint32_t ssbfs_topology_diameter(const struct SsbfsTopology *topology);

/**
 * # Safety
 * `topology` must be a live handle and `out_area` writable.
 */
enum SsbfsStatus ssbfs_topology_area(const struct SsbfsTopology *topology,
                                     size_t process,
                                     enum SsbfsArea *out_area);

/**
 * Options matching the CLI defaults: distributed daemon, random fairness,
 * oscillating adversary, random initial configuration, seed 0.
 */
struct SsbfsRunOptions ssbfs_run_options_default(void);

/**
 * Runs the protocol on `topology`. A null `options` selects
 * [`ssbfs_run_options_default`].
 *
 * # Safety
 * `topology` must be a live handle, `options` null or readable, and
 * `out_execution` writable.
 */
enum SsbfsStatus ssbfs_run(const struct SsbfsTopology *topology,
                           const struct SsbfsRunOptions *options,
                           struct SsbfsExecution **out_execution);

/**
 * Loads a trace recorded on `topology`.
 *
 * # Safety
 * `topology` must be a live handle, `trace` NUL-terminated and
 * `out_execution` writable.
 */
enum SsbfsStatus ssbfs_trace_read(const struct SsbfsTopology *topology,
                                  const char *trace,
                                  struct SsbfsExecution **out_execution);

/**
 * # Safety
 * `execution` must be null or a live handle.
 */
void ssbfs_execution_free(struct SsbfsExecution *execution);

/**
 * Number of steps; the execution holds one more configuration than steps.
 *
 * # Safety
 * `execution` must be null or a live handle.
 */
size_t ssbfs_execution_len(const struct SsbfsExecution *execution);

/**
 * Level of `process` in configuration `index`.
 *
 * # Safety
 * `execution` must be a live handle and `out_level` writable.
 */
enum SsbfsStatus ssbfs_execution_level(const struct SsbfsExecution *execution,
                                       size_t index,
                                       size_t process,
                                       uint64_t *out_level);

/**
 * # Safety
 * `execution` must be a live handle and `out_metrics` writable.
 */
enum SsbfsStatus ssbfs_execution_metrics(const struct SsbfsExecution *execution,
                                         struct SsbfsMetrics *out_metrics);

/**
 * Writes the execution as a trace file at `path`.
 *
 * # Safety
 * `execution` must be a live handle and `path` NUL-terminated.
 */
enum SsbfsStatus ssbfs_execution_write_trace(const struct SsbfsExecution *execution,
                                             const char *path);

/**
 * Re-derives every step with the protocol. Returns
 * [`SsbfsStatus::ReplayMismatch`] at the first step that disagrees.
 *
 * # Safety
 * `execution` must be a live handle.
 */
enum SsbfsStatus ssbfs_execution_replay(const struct SsbfsExecution *execution);

#endif  /* SSBFS_H */
