/* boostdet C API: a two-stage detector library for synthetic vague-object
 * scenes, exposing dataset generation, training, evaluation, ablation sweeps,
 * gradient checking and plotting behind an opaque session handle.
 *
 * Every call returns a bdt_status; on failure the session keeps a
 * human-readable message retrievable via bdt_session_last_error(). Strings
 * returned through char** out-parameters are heap-allocated and must be
 * released with bdt_string_free().
 */
#ifndef BOOSTDET_H
#define BOOSTDET_H

#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef struct bdt_session bdt_session;

typedef enum bdt_status {
  BDT_OK = 0,
  BDT_ERR_INVALID_ARGUMENT = 1,
  BDT_ERR_CONFIG = 2,
  BDT_ERR_INPUT = 3,
  BDT_ERR_STATE = 4,
  BDT_ERR_TRAINING = 5,
  BDT_ERR_IO = 6,
  BDT_ERR_INTERNAL = 7
} bdt_status;

const char* bdt_version(void);
const char* bdt_status_name(bdt_status status);

/* Session lifecycle. A session owns one validated run configuration. */
bdt_status bdt_session_create(bdt_session** out);
bdt_status bdt_session_create_from_json(const char* config_json, bdt_session** out);
bdt_status bdt_session_create_from_file(const char* config_path, bdt_session** out);
void bdt_session_destroy(bdt_session* session);

/* Message describing the most recent failure on this session. */
const char* bdt_session_last_error(const bdt_session* session);

/* Dotted-path configuration override, e.g.
 *   bdt_session_set(s, "detector.fiou.eta", "2.0")
 *   bdt_session_set(s, "paths.dataset", "runs/a/dataset.jsonl")
 * The value is parsed as JSON when possible, else taken as a string. The full
 * configuration is re-validated; on failure nothing changes. */
bdt_status bdt_session_set(bdt_session* session, const char* key, const char* value);

/* The effective configuration with all defaults made explicit. */
bdt_status bdt_session_config_json(bdt_session* session, char** out_json);

/* Commands. Inputs and outputs are taken from the session configuration
 * (paths.*, out_dir, seed, variant). */
bdt_status bdt_gen_data(bdt_session* session, char** out_summary_json);
bdt_status bdt_train(bdt_session* session, char** out_summary_json);
bdt_status bdt_eval(bdt_session* session, char** out_metrics_json);
bdt_status bdt_ablate(bdt_session* session, char** out_summary_json);
bdt_status bdt_grad_check(bdt_session* session, char** out_report_json);
bdt_status bdt_plot(bdt_session* session, char** out_summary_json);

void bdt_string_free(char* text);

#ifdef __cplusplus
}
#endif

#endif /* BOOSTDET_H */
