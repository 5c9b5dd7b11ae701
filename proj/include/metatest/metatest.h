/* C interface to the metatest library.
 *
 * Every function returning mt_status reports failures through the status
 * code and mt_last_error(). Strings returned through char** are allocated by
 * the library and released with mt_free(). Structured results are JSON.
 */
#ifndef METATEST_H
#define METATEST_H

#include <stddef.h>
#include <stdint.h>

#if defined(MT_BUILDING_LIBRARY)
#define MT_API __attribute__((visibility("default")))
#else
#define MT_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum mt_status {
  MT_OK = 0,
  MT_INVALID_ARGUMENT,
  MT_SYNTAX,
  MT_DUPLICATE_KEY,
  MT_UNKNOWN_DATA_TYPE,
  MT_SCHEMA,
  MT_INVALID_METADATA,
  MT_NAVIGATION,
  MT_ELEMENT_NOT_FOUND,
  MT_LOCATOR,
  MT_NO_FORM,
  MT_UNKNOWN_LABEL,
  MT_DSL,
  MT_UNSATISFIABLE,
  MT_UNKNOWN_RUN,
  MT_INTEGRITY,
  MT_INCOMPARABLE_RUNS,
  MT_CONNECTION,
  MT_CORRUPT_LOG,
  MT_EMPTY_LOG,
  MT_AMBIGUOUS_KEY,
  MT_METADATA_MISMATCH,
  MT_IO,
  MT_INTERNAL
} mt_status;

typedef enum mt_verdict { MT_PASS = 0, MT_FAIL = 1, MT_ERROR = 2 } mt_verdict;

typedef struct mt_app mt_app;
typedef struct mt_site mt_site;
typedef struct mt_server mt_server;

/* Message of the last failure on the calling thread ("" if none). */
MT_API const char* mt_last_error(void);
MT_API const char* mt_status_name(mt_status status);
MT_API const char* mt_version(void);
MT_API void mt_free(char* text);

/* Metadata */
MT_API mt_status mt_app_parse(const char* json, mt_app** out);
MT_API mt_status mt_app_load(const char* path, mt_app** out);
MT_API void mt_app_free(mt_app* app);
MT_API mt_status mt_app_serialize(const mt_app* app, char** out);
/* diagnostics_json: array of {severity, location, message}. */
MT_API mt_status mt_app_validate(const mt_app* app, char** diagnostics_json, size_t* error_count);
MT_API mt_status mt_app_form_ids(const mt_app* app, char** json_array);
/* raw == NULL means the field was not submitted. */
MT_API mt_status mt_field_accepts(const mt_app* app, const char* form_id, const char* field, const char* raw,
                                  char** outcome_json);

/* Suites */
MT_API mt_status mt_generate_suite(const mt_app* app, const char* form_id, char** suite_text);
MT_API mt_status mt_suite_normalize(const char* suite_text, char** canonical);

/* Sites. deterministic != 0 selects a counter clock. */
MT_API mt_status mt_site_create(const mt_app* app, int deterministic, mt_site** out);
MT_API void mt_site_free(mt_site* site);
MT_API mt_status mt_site_load_store(mt_site* site, const char* dir);
MT_API mt_status mt_site_save_store(mt_site* site, const char* dir);
/* Restores an earlier log so new entries continue its sequence. */
MT_API mt_status mt_site_load_log(mt_site* site, const char* log_jsonl);
MT_API mt_status mt_site_log_jsonl(mt_site* site, char** out);
/* Appends every new log entry to `path` as it is written. */
MT_API mt_status mt_site_set_log_file(mt_site* site, const char* path);
/* Changes between checkpoint `label` and the current store. */
MT_API mt_status mt_site_checkpoint_diff(mt_site* site, const char* label, char** diff_json, size_t* changes);

/* Runs */
typedef struct mt_run_options {
  const char* runs_dir;   /* required */
  const char* suite_id;   /* defaults to "suite" */
  const char* userid;     /* overrides the suite's userid when set */
  const char* target;     /* recorded for replay */
  int deterministic;
  int64_t step_delay_ms;
} mt_run_options;

MT_API mt_status mt_run_inprocess(mt_site* site, const char* suite_text, const mt_run_options* options,
                                  char** run_json, mt_verdict* verdict);
MT_API mt_status mt_run_wire(const char* address, const char* suite_text, const mt_run_options* options,
                             char** run_json, mt_verdict* verdict);
/* diff_changes: number of steps that differ from the original run. */
MT_API mt_status mt_replay_inprocess(mt_site* site, const char* runs_dir, const char* run_id, int deterministic,
                                     char** run_json, char** diff_json, size_t* diff_changes);
MT_API mt_status mt_replay_wire(const char* address, const char* runs_dir, const char* run_id, int deterministic,
                                char** run_json, char** diff_json, size_t* diff_changes);
MT_API mt_status mt_run_load(const char* runs_dir, const char* run_id, char** run_json);
MT_API mt_status mt_runs_list(const char* runs_dir, char** json_array);
MT_API mt_status mt_diff_runs(const char* runs_dir, const char* run_a, const char* run_b, char** diff_json,
                              size_t* diff_changes);

/* Wire server. bind is "host:port"; port 0 picks a free port. */
MT_API mt_status mt_server_start(mt_site* site, const char* bind, mt_server** out);
MT_API int mt_server_port(const mt_server* server);
MT_API void mt_server_stop(mt_server* server);
MT_API void mt_server_free(mt_server* server);

/* Logs. Inputs are JSON-lines site logs. */
/* sessions: comma-separated session ids, or NULL for all. */
MT_API mt_status mt_logs_derive(const char* log_jsonl, const char* sessions, char** suite_text);
MT_API mt_status mt_logs_frequency(const char* log_jsonl, char** report_json);
MT_API mt_status mt_logs_perf(const char* log_jsonl, int top_k, int repetitions, char** suite_text);
MT_API mt_status mt_logs_csv(const char* log_jsonl, char** csv);
MT_API mt_status mt_logs_selftest(const char* runs_dir, const char* run_id, const char* log_jsonl,
                                  char** findings_json, size_t* count);

/* Agents. Relative paths in an agent spec file resolve against its directory. */
/* repair_suite may be NULL; it is set only for emit_repair_suite agents. */
MT_API mt_status mt_agent_run(const char* spec_path, int deterministic, char** report_json, size_t* findings,
                              char** repair_suite);
/* reports_json: array of reports, in order. */
MT_API mt_status mt_agent_schedule(const char* spec_path, int deterministic, int64_t interval_ms, int iterations,
                                   char** reports_json, size_t* findings_total);

#ifdef __cplusplus
}
#endif

#endif
