/* C interface to the ranids core. All functions are thread-safe unless a
 * handle is shared across threads. Errors return a non-zero status; the
 * message is available from ranids_last_error() on the same thread. */
#ifndef RANIDS_H
#define RANIDS_H

#include <stddef.h>
#include <stdint.h>

#if defined(RANIDS_BUILDING)
#define RANIDS_API __attribute__((visibility("default")))
#else
#define RANIDS_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum ranids_status {
  RANIDS_OK = 0,
  RANIDS_E_INVALID = 1,
  RANIDS_E_PARSE = 2,
  RANIDS_E_IO = 3,
  RANIDS_E_MODEL = 4,
  RANIDS_E_NETWORK = 5,
  RANIDS_E_PROTOCOL = 6,
  RANIDS_E_STATE = 7,
  RANIDS_E_INTERNAL = 8
} ranids_status;

typedef struct ranids_scenario ranids_scenario;
typedef struct ranids_model ranids_model;
typedef struct ranids_policy ranids_policy;

RANIDS_API const char* ranids_version(void);
/* Message for the last failed call on this thread; "" if none. */
RANIDS_API const char* ranids_last_error(void);
RANIDS_API const char* ranids_status_name(ranids_status s);

/* Cancels long-running calls (serve, sim, xapp, closed loop). Async-signal-safe. */
RANIDS_API void ranids_request_stop(void);
RANIDS_API void ranids_clear_stop(void);

/* Scenarios. Presets: one-ue, two-ue, closed-loop, benign. */
RANIDS_API ranids_status ranids_scenario_preset(const char* name, uint64_t seed, ranids_scenario** out);
RANIDS_API ranids_status ranids_scenario_load(const char* path, ranids_scenario** out);
RANIDS_API ranids_status ranids_scenario_parse(const char* text, ranids_scenario** out);
RANIDS_API ranids_status ranids_scenario_set_seed(ranids_scenario* s, uint64_t seed);
RANIDS_API ranids_status ranids_scenario_set_duration_ms(ranids_scenario* s, int64_t duration_ms);
RANIDS_API ranids_status ranids_scenario_set_transient_ms(ranids_scenario* s, int64_t transient_ms);
RANIDS_API ranids_status ranids_scenario_ue_count(const ranids_scenario* s, size_t* out);
/* Writes the scenario as config text; `*needed` gets the size incl. NUL. */
RANIDS_API ranids_status ranids_scenario_to_text(const ranids_scenario* s, char* buf, size_t cap, size_t* needed);
RANIDS_API void ranids_scenario_free(ranids_scenario* s);

/* Dataset collection in virtual time. */
RANIDS_API ranids_status ranids_collect(const ranids_scenario* s, const char* out_csv, size_t* rows,
                                        size_t* n_ues);

/* Training. algo: "dt", "rf", "knn", "ada". Zero fields take defaults. */
typedef struct ranids_train_params {
  int n_trees;          /* 100 */
  int max_depth;        /* 15 */
  int min_samples_split;/* 5 */
  int min_samples_leaf; /* 1 */
  int max_features;     /* 0: sqrt(d) for rf, all for dt */
  int knn_k;            /* 5 */
  int ada_rounds;       /* 50 */
  unsigned threads;     /* 0: hardware concurrency */
} ranids_train_params;

RANIDS_API void ranids_train_params_default(ranids_train_params* p);
RANIDS_API ranids_status ranids_train(const char* dataset_csv, const char* algo, const ranids_train_params* p,
                                      uint64_t seed, ranids_model** out);
RANIDS_API ranids_status ranids_model_load(const char* path, ranids_model** out);
RANIDS_API ranids_status ranids_model_save(const ranids_model* m, const char* path);
RANIDS_API const char* ranids_model_algo(const ranids_model* m);
RANIDS_API ranids_status ranids_model_predict(const ranids_model* m, const double* features, size_t n_features,
                                              int* out_class);
RANIDS_API void ranids_model_free(ranids_model* m);

RANIDS_API size_t ranids_feature_count(void);
RANIDS_API const char* ranids_class_name(int index);

typedef struct ranids_eval_result {
  size_t samples;
  double accuracy;
  double macro_f1;
  double binary_accuracy;
  double binary_f1_attack;
  size_t bench_n;
  double delta_i_median_us;
  uint64_t confusion[5][5];
} ranids_eval_result;

/* out_dir may be NULL to skip report files; bench_n = 0 skips timing. */
RANIDS_API ranids_status ranids_evaluate(const ranids_model* m, const char* dataset_csv, const char* out_dir,
                                         size_t bench_n, ranids_eval_result* out);
RANIDS_API ranids_status ranids_bench_inference(const ranids_model* m, const char* dataset_csv, size_t n,
                                                double* median_us);

/* Policy: defaults are window 5, dwell 3, attacks -> rrc_release. */
RANIDS_API ranids_status ranids_policy_default(ranids_policy** out);
RANIDS_API ranids_status ranids_policy_load(const char* path, ranids_policy** out);
RANIDS_API ranids_status ranids_policy_set_window(ranids_policy* p, int window);
RANIDS_API ranids_status ranids_policy_set_dwell(ranids_policy* p, int dwell);
RANIDS_API ranids_status ranids_policy_set_action(ranids_policy* p, const char* cls, const char* action);
RANIDS_API void ranids_policy_free(ranids_policy* p);

typedef enum ranids_transport { RANIDS_INPROCESS = 0, RANIDS_LOOPBACK = 1 } ranids_transport;

typedef struct ranids_loop_result {
  int aborted;
  size_t decisions;
  size_t commands;
  size_t releases;
  size_t episodes;
  size_t episodes_terminated;
  size_t episodes_preempted;
  size_t false_mitigations;
  size_t segments_covered;
  double fraction_correct_500ms;
  double per_interval_accuracy;
  double smoothed_accuracy;
  double T_d_median_us;
  double T_d_p99_us;
  double delta_i_median_us;
  size_t over_budget;
  size_t identity_failures;
  size_t non_monotone;
  size_t ues_idle;
} ranids_loop_result;

/* Runs simulator, broker and xApp together. out_dir may be NULL. */
RANIDS_API ranids_status ranids_closed_loop(const ranids_scenario* s, const ranids_model* m,
                                            const ranids_policy* p, int mitigation, ranids_transport t,
                                            const char* out_dir, ranids_loop_result* out);

/* Networked components over TCP; they block until ranids_request_stop(). */
typedef void (*ranids_port_cb)(uint16_t port, void* user);
RANIDS_API ranids_status ranids_serve_broker(const char* listen, ranids_port_cb on_ready, void* user);
RANIDS_API ranids_status ranids_run_sim(const ranids_scenario* s, const char* broker, uint64_t* frames);
/* model may be NULL (frames are dropped until one is loaded); log_dir may be NULL.
 * duration_ms 0 runs until stopped. */
RANIDS_API ranids_status ranids_run_xapp(const ranids_model* m, const ranids_policy* p, const char* broker,
                                         const char* log_dir, int64_t duration_ms, uint64_t* decisions);

#ifdef __cplusplus
}
#endif

#endif
