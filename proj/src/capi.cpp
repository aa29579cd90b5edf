#include "ranids/ranids.h"

#include "ranids/error.hpp"
#include "ranids/pipeline.hpp"

#include <atomic>
#include <cstring>
#include <new>
#include <string>

struct ranids_scenario {
  ranids::sim::ScenarioConfig cfg;
};
struct ranids_model {
  ranids::ml::Model model;
};
struct ranids_policy {
  ranids::xapp::PolicyMap policy;
};

namespace {

using namespace ranids;

thread_local std::string g_last_error;
std::atomic<bool> g_stop{false};

ranids_status status_of(ErrorKind k) {
  switch (k) {
  case ErrorKind::InvalidArgument: return RANIDS_E_INVALID;
  case ErrorKind::Parse: return RANIDS_E_PARSE;
  case ErrorKind::Io: return RANIDS_E_IO;
  case ErrorKind::Model: return RANIDS_E_MODEL;
  case ErrorKind::Network: return RANIDS_E_NETWORK;
  case ErrorKind::Protocol: return RANIDS_E_PROTOCOL;
  case ErrorKind::State: return RANIDS_E_STATE;
  }
  return RANIDS_E_INTERNAL;
}

template <typename F>
ranids_status guard(F&& f) {
  g_last_error.clear();
  try {
    f();
    return RANIDS_OK;
  } catch (const Error& e) {
    g_last_error = e.what();
    return status_of(e.kind());
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
  } catch (const std::exception& e) {
    g_last_error = e.what();
  } catch (...) {
    g_last_error = "unknown error";
  }
  return RANIDS_E_INTERNAL;
}

template <typename T>
void need(const T* p, const char* what) {
  if (!p) fail(ErrorKind::InvalidArgument, std::string(what) + " is NULL");
}

std::string str(const char* s) { return s ? s : ""; }

} // namespace

extern "C" {

const char* ranids_version(void) { return RANIDS_VERSION; }
const char* ranids_last_error(void) { return g_last_error.c_str(); }

const char* ranids_status_name(ranids_status s) {
  switch (s) {
  case RANIDS_OK: return "ok";
  case RANIDS_E_INVALID: return "invalid argument";
  case RANIDS_E_PARSE: return "parse error";
  case RANIDS_E_IO: return "i/o error";
  case RANIDS_E_MODEL: return "model error";
  case RANIDS_E_NETWORK: return "network error";
  case RANIDS_E_PROTOCOL: return "protocol error";
  case RANIDS_E_STATE: return "state error";
  case RANIDS_E_INTERNAL: return "internal error";
  }
  return "unknown status";
}

void ranids_request_stop(void) { g_stop.store(true); }
void ranids_clear_stop(void) { g_stop.store(false); }

ranids_status ranids_scenario_preset(const char* name, uint64_t seed, ranids_scenario** out) {
  return guard([&] {
    need(name, "name");
    need(out, "out");
    *out = new ranids_scenario{pipeline::preset(name, seed)};
  });
}

ranids_status ranids_scenario_load(const char* path, ranids_scenario** out) {
  return guard([&] {
    need(path, "path");
    need(out, "out");
    *out = new ranids_scenario{sim::load_scenario(path)};
  });
}

ranids_status ranids_scenario_parse(const char* text, ranids_scenario** out) {
  return guard([&] {
    need(text, "text");
    need(out, "out");
    *out = new ranids_scenario{sim::scenario_from_config(KeyValueConfig::parse(text))};
  });
}

ranids_status ranids_scenario_set_seed(ranids_scenario* s, uint64_t seed) {
  return guard([&] {
    need(s, "scenario");
    s->cfg.seed = seed;
  });
}

ranids_status ranids_scenario_set_duration_ms(ranids_scenario* s, int64_t duration_ms) {
  return guard([&] {
    need(s, "scenario");
    auto cfg = s->cfg;
    cfg.duration_ms = duration_ms;
    cfg.validate();
    s->cfg = cfg;
  });
}

ranids_status ranids_scenario_set_transient_ms(ranids_scenario* s, int64_t transient_ms) {
  return guard([&] {
    need(s, "scenario");
    auto cfg = s->cfg;
    cfg.transient_ms = transient_ms;
    cfg.validate();
    s->cfg = cfg;
  });
}

ranids_status ranids_scenario_ue_count(const ranids_scenario* s, size_t* out) {
  return guard([&] {
    need(s, "scenario");
    need(out, "out");
    *out = s->cfg.ues.size();
  });
}

ranids_status ranids_scenario_to_text(const ranids_scenario* s, char* buf, size_t cap, size_t* needed) {
  return guard([&] {
    need(s, "scenario");
    const std::string text = sim::scenario_to_text(s->cfg);
    if (needed) *needed = text.size() + 1;
    if (buf && cap > 0) {
      const std::size_t n = std::min(cap - 1, text.size());
      std::memcpy(buf, text.data(), n);
      buf[n] = '\0';
    }
  });
}

void ranids_scenario_free(ranids_scenario* s) { delete s; }

ranids_status ranids_collect(const ranids_scenario* s, const char* out_csv, size_t* rows, size_t* n_ues) {
  return guard([&] {
    need(s, "scenario");
    need(out_csv, "out_csv");
    const auto r = pipeline::collect(s->cfg, out_csv);
    if (rows) *rows = r.rows;
    if (n_ues) *n_ues = r.ue_ids.size();
  });
}

void ranids_train_params_default(ranids_train_params* p) {
  if (!p) return;
  *p = ranids_train_params{100, 15, 5, 1, 0, 5, 50, 0};
}

ranids_status ranids_train(const char* dataset_csv, const char* algo, const ranids_train_params* p,
                           uint64_t seed, ranids_model** out) {
  return guard([&] {
    need(dataset_csv, "dataset");
    need(algo, "algo");
    need(out, "out");
    ranids_train_params tp;
    ranids_train_params_default(&tp);
    if (p) {
      if (p->n_trees) tp.n_trees = p->n_trees;
      if (p->max_depth) tp.max_depth = p->max_depth;
      if (p->min_samples_split) tp.min_samples_split = p->min_samples_split;
      if (p->min_samples_leaf) tp.min_samples_leaf = p->min_samples_leaf;
      tp.max_features = p->max_features;
      if (p->knn_k) tp.knn_k = p->knn_k;
      if (p->ada_rounds) tp.ada_rounds = p->ada_rounds;
      tp.threads = p->threads;
    }
    pipeline::TrainOptions o;
    o.algo = ml::parse_algorithm(algo);
    o.seed = seed;
    o.forest.n_trees = tp.n_trees;
    o.forest.tree.max_depth = tp.max_depth;
    o.forest.tree.min_samples_split = tp.min_samples_split;
    o.forest.tree.min_samples_leaf = tp.min_samples_leaf;
    if (o.algo == ml::Algorithm::DecisionTree) {
      o.forest.tree.max_features = tp.max_features;
    } else {
      o.forest.max_features = tp.max_features;
    }
    o.forest.threads = tp.threads;
    o.knn_k = tp.knn_k;
    o.ada_rounds = tp.ada_rounds;
    const auto data = read_dataset(dataset_csv);
    *out = new ranids_model{pipeline::train(data, o)};
  });
}

ranids_status ranids_model_load(const char* path, ranids_model** out) {
  return guard([&] {
    need(path, "path");
    need(out, "out");
    *out = new ranids_model{ml::load_model(path)};
  });
}

ranids_status ranids_model_save(const ranids_model* m, const char* path) {
  return guard([&] {
    need(m, "model");
    need(path, "path");
    ml::save_model(m->model, path);
  });
}

const char* ranids_model_algo(const ranids_model* m) {
  if (!m) return "";
  return ml::to_string(ml::algorithm_of(m->model)).data();
}

ranids_status ranids_model_predict(const ranids_model* m, const double* features, size_t n_features,
                                   int* out_class) {
  return guard([&] {
    need(m, "model");
    need(features, "features");
    need(out_class, "out_class");
    *out_class = ml::predict(m->model, std::span<const double>(features, n_features));
  });
}

void ranids_model_free(ranids_model* m) { delete m; }

size_t ranids_feature_count(void) { return kNumFeatures; }

const char* ranids_class_name(int index) {
  if (index < 0 || index >= kNumClasses) return "";
  return to_string(class_from_index(index)).data();
}

ranids_status ranids_evaluate(const ranids_model* m, const char* dataset_csv, const char* out_dir,
                              size_t bench_n, ranids_eval_result* out) {
  return guard([&] {
    need(m, "model");
    need(dataset_csv, "dataset");
    const auto data = read_dataset(dataset_csv);
    const auto r = pipeline::evaluate(m->model, data, bench_n);
    if (out_dir) pipeline::write_eval_report(r, out_dir);
    if (out) {
      *out = ranids_eval_result{};
      out->samples = r.five.total();
      out->accuracy = r.five.accuracy();
      out->macro_f1 = r.five.macro_f1();
      out->binary_accuracy = r.binary.accuracy();
      out->binary_f1_attack = r.binary.class_metrics(1).f1;
      out->bench_n = r.bench_n;
      out->delta_i_median_us = r.delta_i_median_us;
      for (int t = 0; t < kNumClasses; ++t) {
        for (int p = 0; p < kNumClasses; ++p) out->confusion[t][p] = r.five.at(t, p);
      }
    }
  });
}

ranids_status ranids_bench_inference(const ranids_model* m, const char* dataset_csv, size_t n, double* median_us) {
  return guard([&] {
    need(m, "model");
    need(dataset_csv, "dataset");
    need(median_us, "median_us");
    *median_us = pipeline::bench_inference(m->model, read_dataset(dataset_csv), n);
  });
}

ranids_status ranids_policy_default(ranids_policy** out) {
  return guard([&] {
    need(out, "out");
    *out = new ranids_policy{};
  });
}

ranids_status ranids_policy_load(const char* path, ranids_policy** out) {
  return guard([&] {
    need(path, "path");
    need(out, "out");
    *out = new ranids_policy{xapp::load_policy(path)};
  });
}

ranids_status ranids_policy_set_window(ranids_policy* p, int window) {
  return guard([&] {
    need(p, "policy");
    auto copy = p->policy;
    copy.window = window;
    copy.validate();
    p->policy = copy;
  });
}

ranids_status ranids_policy_set_dwell(ranids_policy* p, int dwell) {
  return guard([&] {
    need(p, "policy");
    auto copy = p->policy;
    copy.dwell = dwell;
    copy.validate();
    p->policy = copy;
  });
}

ranids_status ranids_policy_set_action(ranids_policy* p, const char* cls, const char* action) {
  return guard([&] {
    need(p, "policy");
    need(cls, "class");
    need(action, "action");
    auto c = parse_traffic_class(cls);
    if (!c) fail(ErrorKind::InvalidArgument, "unknown class '" + str(cls) + "'");
    auto a = parse_action(action);
    if (!a) fail(ErrorKind::InvalidArgument, "unknown action '" + str(action) + "'");
    p->policy.action[class_index(*c)] = *a;
  });
}

void ranids_policy_free(ranids_policy* p) { delete p; }

ranids_status ranids_closed_loop(const ranids_scenario* s, const ranids_model* m, const ranids_policy* p,
                                 int mitigation, ranids_transport t, const char* out_dir,
                                 ranids_loop_result* out) {
  return guard([&] {
    need(s, "scenario");
    need(m, "model");
    pipeline::ClosedLoopConfig cfg;
    cfg.scenario = s->cfg;
    cfg.model = m->model;
    if (p) cfg.policy = p->policy;
    cfg.mitigation = mitigation != 0;
    cfg.transport = t == RANIDS_LOOPBACK ? pipeline::Transport::Loopback : pipeline::Transport::InProcess;
    const auto r = pipeline::closed_loop(cfg);
    if (out_dir) pipeline::write_closed_loop_report(r, out_dir);
    if (out) {
      *out = ranids_loop_result{};
      out->aborted = r.aborted ? 1 : 0;
      out->decisions = r.decisions.size();
      out->commands = r.xapp.commands;
      out->releases = r.releases();
      out->episodes = r.episodes.size();
      for (const auto& e : r.episodes) {
        out->episodes_terminated += e.terminated();
        out->episodes_preempted += e.preempted;
      }
      out->false_mitigations = r.false_mitigations;
      out->segments_covered = r.ttc.covered;
      out->fraction_correct_500ms = r.ttc.fraction_at(500);
      std::size_t labelled = 0, raw = 0, smooth = 0;
      for (const auto& d : r.decisions) {
        if (!d.truth) continue;
        ++labelled;
        raw += d.predicted == *d.truth;
        smooth += d.smoothed == *d.truth;
      }
      if (labelled) {
        out->per_interval_accuracy = static_cast<double>(raw) / static_cast<double>(labelled);
        out->smoothed_accuracy = static_cast<double>(smooth) / static_cast<double>(labelled);
      }
      if (r.latency) {
        out->T_d_median_us = r.latency->T_d_us.median;
        out->T_d_p99_us = r.latency->T_d_us.p99;
        out->delta_i_median_us = r.latency->delta_i_us.median;
        out->over_budget = r.latency->over_budget;
        out->identity_failures = r.latency->identity_failures;
        out->non_monotone = r.latency->non_monotone;
      }
      for (const auto& [ue, st] : r.final_rrc) out->ues_idle += st == RrcState::Idle;
    }
    if (r.aborted) fail(ErrorKind::State, "closed loop aborted: " + r.error);
  });
}

ranids_status ranids_serve_broker(const char* listen, ranids_port_cb on_ready, void* user) {
  return guard([&] {
    pipeline::serve_broker(net::parse_endpoint(str(listen)), g_stop, [&](std::uint16_t port) {
      if (on_ready) on_ready(port, user);
    });
  });
}

ranids_status ranids_run_sim(const ranids_scenario* s, const char* broker, uint64_t* frames) {
  return guard([&] {
    need(s, "scenario");
    const auto stats = pipeline::run_networked_sim(s->cfg, net::parse_endpoint(str(broker)), &g_stop);
    if (frames) *frames = stats.frames_published;
  });
}

ranids_status ranids_run_xapp(const ranids_model* m, const ranids_policy* p, const char* broker,
                              const char* log_dir, int64_t duration_ms, uint64_t* decisions) {
  return guard([&] {
    std::optional<ml::Model> model;
    if (m) model = m->model;
    const xapp::PolicyMap policy = p ? p->policy : xapp::PolicyMap{};
    const auto r = pipeline::run_networked_xapp(std::move(model), policy, net::parse_endpoint(str(broker)), g_stop,
                                                duration_ms);
    if (log_dir) {
      std::filesystem::create_directories(log_dir);
      xapp::write_prediction_log(r.decisions, std::filesystem::path(log_dir) / "predictions.csv");
      xapp::write_latency_csv(r.decisions, std::filesystem::path(log_dir) / "latency.csv");
    }
    if (decisions) *decisions = r.stats.decisions;
  });
}

} // extern "C"
