// Command-line front end. Talks to the library only through ranids.h.
#include <ranids/ranids.h>

#include <CLI11.hpp>

#include <csignal>
#include <cstdio>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace {

constexpr int kExitError = 1;
constexpr int kExitAssert = 2;

struct Failure {
  ranids_status status;
  std::string context;
};

void check(ranids_status s, const std::string& context) {
  if (s != RANIDS_OK) throw Failure{s, context};
}

template <typename T, void (*Free)(T*)>
struct Deleter {
  void operator()(T* p) const { Free(p); }
};
using Scenario = std::unique_ptr<ranids_scenario, Deleter<ranids_scenario, ranids_scenario_free>>;
using Model = std::unique_ptr<ranids_model, Deleter<ranids_model, ranids_model_free>>;
using Policy = std::unique_ptr<ranids_policy, Deleter<ranids_policy, ranids_policy_free>>;

struct Globals {
  std::uint64_t seed = 42;
  bool seed_given = false;
  bool assert_mode = false;
};

struct ScenarioArgs {
  std::string preset;
  std::string file;
  std::int64_t duration_ms = -1;
};

void add_scenario_opts(CLI::App* cmd, ScenarioArgs& a, const std::string& default_preset) {
  a.preset = default_preset;
  auto* p = cmd->add_option("--preset", a.preset, "one-ue, two-ue, closed-loop or benign")
                ->capture_default_str();
  cmd->add_option("--scenario", a.file, "scenario config file")->excludes(p)->check(CLI::ExistingFile);
  cmd->add_option("--duration-ms", a.duration_ms, "override the scenario duration");
}

Scenario make_scenario(const ScenarioArgs& a, const Globals& g) {
  ranids_scenario* raw = nullptr;
  if (!a.file.empty()) {
    check(ranids_scenario_load(a.file.c_str(), &raw), "loading " + a.file);
  } else {
    check(ranids_scenario_preset(a.preset.c_str(), g.seed, &raw), "preset " + a.preset);
  }
  Scenario s(raw);
  if (!a.file.empty() && g.seed_given) check(ranids_scenario_set_seed(s.get(), g.seed), "seed");
  if (a.duration_ms >= 0) check(ranids_scenario_set_duration_ms(s.get(), a.duration_ms), "duration");
  return s;
}

Model load_model(const std::string& path) {
  ranids_model* raw = nullptr;
  check(ranids_model_load(path.c_str(), &raw), "loading model " + path);
  return Model(raw);
}

struct PolicyArgs {
  std::string file;
  int window = 0;
  int dwell = 0;
};

void add_policy_opts(CLI::App* cmd, PolicyArgs& a) {
  cmd->add_option("--policy", a.file, "policy file")->check(CLI::ExistingFile);
  cmd->add_option("--window", a.window, "smoothing window (default 5)");
  cmd->add_option("--dwell", a.dwell, "attack verdicts before mitigation (default 3)");
}

Policy make_policy(const PolicyArgs& a) {
  ranids_policy* raw = nullptr;
  if (a.file.empty()) {
    check(ranids_policy_default(&raw), "policy");
  } else {
    check(ranids_policy_load(a.file.c_str(), &raw), "loading policy " + a.file);
  }
  Policy p(raw);
  if (a.window) check(ranids_policy_set_window(p.get(), a.window), "window");
  if (a.dwell) check(ranids_policy_set_dwell(p.get(), a.dwell), "dwell");
  return p;
}

struct Assertions {
  std::vector<std::string> failed;
  void expect(bool ok, const std::string& what) {
    std::printf("%s %s\n", ok ? "PASS" : "FAIL", what.c_str());
    if (!ok) failed.push_back(what);
  }
};

std::string num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

void on_signal(int) { ranids_request_stop(); }

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"Early attack detection on a simulated RAN with a near-RT controller"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option_function<std::uint64_t>(
      "--seed", [&](std::uint64_t s) {
        g.seed = s;
        g.seed_given = true;
      }, "random seed (default 42)");
  app.add_flag("--assert", g.assert_mode, "exit with status 2 if any acceptance check fails");
  app.set_version_flag("--version", std::string(ranids_version()));

  // collect
  ScenarioArgs collect_sc;
  std::string collect_out;
  auto* collect = app.add_subcommand("collect", "run a scenario in virtual time and write a labeled dataset");
  add_scenario_opts(collect, collect_sc, "one-ue");
  collect->add_option("--out", collect_out, "output CSV")->required();

  // train
  std::string train_algo = "rf", train_dataset, train_out;
  ranids_train_params tp;
  ranids_train_params_default(&tp);
  auto* train = app.add_subcommand("train", "train a classifier on a dataset");
  train->add_option("--algo", train_algo, "dt, rf, knn or ada")
      ->check(CLI::IsMember({"dt", "rf", "knn", "ada"}))
      ->capture_default_str();
  train->add_option("--dataset", train_dataset, "training CSV")->required()->check(CLI::ExistingFile);
  train->add_option("--out", train_out, "model file")->required();
  train->add_option("--trees", tp.n_trees, "forest size")->capture_default_str();
  train->add_option("--max-depth", tp.max_depth, "tree depth limit")->capture_default_str();
  train->add_option("--min-split", tp.min_samples_split, "samples needed to split")->capture_default_str();
  train->add_option("--min-leaf", tp.min_samples_leaf, "samples per leaf")->capture_default_str();
  train->add_option("--max-features", tp.max_features, "features per split, 0 for the default");
  train->add_option("--k", tp.knn_k, "neighbours for knn")->capture_default_str();
  train->add_option("--rounds", tp.ada_rounds, "boosting rounds for ada")->capture_default_str();
  train->add_option("--threads", tp.threads, "training threads, 0 for all cores");

  // evaluate
  std::string eval_model, eval_dataset, eval_out;
  std::size_t eval_bench = 10000;
  double min_acc = 0.90, min_f1 = 0.93, max_delta_i_ms = -1.0;
  auto* evaluate = app.add_subcommand("evaluate", "confusion matrices, metrics and inference timing");
  evaluate->add_option("--model", eval_model)->required()->check(CLI::ExistingFile);
  evaluate->add_option("--dataset", eval_dataset)->required()->check(CLI::ExistingFile);
  evaluate->add_option("--out", eval_out, "report directory");
  evaluate->add_option("--bench", eval_bench, "single-sample predictions to time, 0 to skip")
      ->capture_default_str();
  evaluate->add_option("--min-accuracy", min_acc)->capture_default_str();
  evaluate->add_option("--min-binary-f1", min_f1)->capture_default_str();
  evaluate->add_option("--max-delta-i-ms", max_delta_i_ms, "median inference bound (rf 10, dt 3 by default)");

  // closed-loop
  std::string loop_model, loop_out, loop_transport = "inproc";
  ScenarioArgs loop_sc;
  PolicyArgs loop_policy;
  bool no_mitigation = false;
  auto* loop = app.add_subcommand("closed-loop", "simulator, broker and xApp together");
  loop->add_option("--model", loop_model)->required()->check(CLI::ExistingFile);
  add_scenario_opts(loop, loop_sc, "closed-loop");
  add_policy_opts(loop, loop_policy);
  loop->add_flag("--no-mitigation", no_mitigation, "classify only, never command");
  loop->add_option("--transport", loop_transport, "inproc (virtual time) or loopback (TCP, real time)")
      ->check(CLI::IsMember({"inproc", "loopback"}))
      ->capture_default_str();
  loop->add_option("--out", loop_out, "report directory");

  // bench-latency
  std::string bench_model, bench_dataset, bench_out;
  std::size_t bench_n = 10000;
  std::int64_t bench_duration = 10000;
  double max_p99_ms = 50.0;
  auto* bench = app.add_subcommand("bench-latency", "inference timing plus a loopback control-loop run");
  bench->add_option("--model", bench_model)->required()->check(CLI::ExistingFile);
  bench->add_option("--dataset", bench_dataset, "samples for the inference benchmark")->check(CLI::ExistingFile);
  bench->add_option("--n", bench_n, "predictions to time")->capture_default_str();
  bench->add_option("--duration-ms", bench_duration, "loopback run length")->capture_default_str();
  bench->add_option("--max-p99-ms", max_p99_ms, "bound on p99 T_d")->capture_default_str();
  bench->add_option("--out", bench_out, "report directory");

  // broker
  std::string broker_listen;
  auto* broker = app.add_subcommand("broker", "run the databus broker over TCP");
  broker->add_option("--listen", broker_listen, "host:port (default 127.0.0.1:36421 or RANIDS_BROKER)");

  // sim
  std::string sim_broker;
  ScenarioArgs sim_sc;
  auto* sim = app.add_subcommand("sim", "run the base-station simulator in real time against a broker");
  add_scenario_opts(sim, sim_sc, "closed-loop");
  sim->add_option("--broker", sim_broker, "host:port");

  // xapp
  std::string xapp_model, xapp_broker, xapp_log;
  PolicyArgs xapp_policy;
  std::int64_t xapp_duration = 0;
  auto* xapp = app.add_subcommand("xapp", "run the classifier xApp against a broker");
  xapp->add_option("--model", xapp_model)->check(CLI::ExistingFile);
  xapp->add_option("--broker", xapp_broker, "host:port");
  add_policy_opts(xapp, xapp_policy);
  xapp->add_option("--log", xapp_log, "directory for predictions.csv and latency.csv");
  xapp->add_option("--duration-ms", xapp_duration, "stop after this long, 0 runs until interrupted");

  CLI11_PARSE(app, argc, argv);

  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);

  Assertions asserts;
  try {
    if (*collect) {
      auto s = make_scenario(collect_sc, g);
      std::size_t rows = 0, ues = 0;
      check(ranids_collect(s.get(), collect_out.c_str(), &rows, &ues), "collect");
      std::printf("wrote %zu rows from %zu UE(s) to %s\n", rows, ues, collect_out.c_str());
    } else if (*train) {
      ranids_model* raw = nullptr;
      check(ranids_train(train_dataset.c_str(), train_algo.c_str(), &tp, g.seed, &raw), "train");
      Model m(raw);
      check(ranids_model_save(m.get(), train_out.c_str()), "saving " + train_out);
      std::printf("trained %s model, saved to %s\n", ranids_model_algo(m.get()), train_out.c_str());
    } else if (*evaluate) {
      auto m = load_model(eval_model);
      ranids_eval_result r{};
      check(ranids_evaluate(m.get(), eval_dataset.c_str(), eval_out.empty() ? nullptr : eval_out.c_str(),
                            eval_bench, &r),
            "evaluate");
      const std::string algo = ranids_model_algo(m.get());
      std::printf("algorithm: %s\nsamples: %zu\naccuracy: %.4f\nmacro F1: %.4f\nbinary accuracy: %.4f\n"
                  "binary F1 (attack): %.4f\n",
                  algo.c_str(), r.samples, r.accuracy, r.macro_f1, r.binary_accuracy, r.binary_f1_attack);
      if (r.bench_n) std::printf("median delta_i: %.2f us over %zu predictions\n", r.delta_i_median_us, r.bench_n);
      if (g.assert_mode) {
        asserts.expect(r.accuracy >= min_acc, "5-class accuracy " + num(r.accuracy) + " >= " + num(min_acc));
        asserts.expect(r.binary_f1_attack >= min_f1,
                       "binary F1 " + num(r.binary_f1_attack) + " >= " + num(min_f1));
        double bound = max_delta_i_ms;
        if (bound < 0) bound = algo == "dt" ? 3.0 : 10.0;
        if (r.bench_n) {
          asserts.expect(r.delta_i_median_us <= bound * 1000.0,
                         "median delta_i " + num(r.delta_i_median_us / 1000.0) + " ms <= " + num(bound) + " ms");
        }
      }
    } else if (*loop) {
      auto m = load_model(loop_model);
      auto s = make_scenario(loop_sc, g);
      auto p = make_policy(loop_policy);
      ranids_loop_result r{};
      const auto st = ranids_closed_loop(s.get(), m.get(), p.get(), no_mitigation ? 0 : 1,
                                         loop_transport == "loopback" ? RANIDS_LOOPBACK : RANIDS_INPROCESS,
                                         loop_out.empty() ? nullptr : loop_out.c_str(), &r);
      check(st, "closed loop");
      std::printf("decisions: %zu\ncommands: %zu\nreleases: %zu\nattack episodes: %zu (terminated %zu, "
                  "preempted %zu)\nfalse mitigations: %zu\nper-interval accuracy: %.4f\nsmoothed accuracy: %.4f\n"
                  "correct by 500 ms: %.4f of %zu segments\nT_d median %.1f us, p99 %.1f us\n",
                  r.decisions, r.commands, r.releases, r.episodes, r.episodes_terminated, r.episodes_preempted,
                  r.false_mitigations, r.per_interval_accuracy, r.smoothed_accuracy, r.fraction_correct_500ms,
                  r.segments_covered, r.T_d_median_us, r.T_d_p99_us);
      if (g.assert_mode) {
        asserts.expect(r.identity_failures == 0, "T_d identity holds for every decision");
        asserts.expect(r.non_monotone == 0, "every trace is monotone");
        asserts.expect(r.over_budget == 0, "no decision over the 1 s budget");
        if (!no_mitigation) {
          asserts.expect(r.false_mitigations == 0, "no false mitigations");
          asserts.expect(r.episodes_terminated + r.episodes_preempted == r.episodes,
                         "every attack episode ends with exactly one release");
        }
      }
    } else if (*bench) {
      auto m = load_model(bench_model);
      if (!bench_dataset.empty()) {
        double median = 0.0;
        check(ranids_bench_inference(m.get(), bench_dataset.c_str(), bench_n, &median), "benchmark");
        std::printf("median delta_i: %.2f us over %zu predictions\n", median, bench_n);
        if (g.assert_mode) {
          const double bound = std::string(ranids_model_algo(m.get())) == "dt" ? 3000.0 : 10000.0;
          asserts.expect(median <= bound, "median delta_i " + num(median) + " us <= " + num(bound) + " us");
        }
      }
      ScenarioArgs a;
      a.preset = "closed-loop";
      a.duration_ms = bench_duration;
      auto s = make_scenario(a, g);
      Policy p = make_policy({});
      ranids_loop_result r{};
      check(ranids_closed_loop(s.get(), m.get(), p.get(), 1, RANIDS_LOOPBACK,
                               bench_out.empty() ? nullptr : bench_out.c_str(), &r),
            "loopback run");
      std::printf("loopback decisions: %zu\nT_d median %.1f us, p99 %.1f us\ndelta_i median %.1f us\n"
                  "budget margin at p99: %.1f us\n",
                  r.decisions, r.T_d_median_us, r.T_d_p99_us, r.delta_i_median_us, 1e6 - r.T_d_p99_us);
      if (g.assert_mode) {
        asserts.expect(r.identity_failures == 0, "T_d identity holds for every decision");
        asserts.expect(r.T_d_p99_us < max_p99_ms * 1000.0,
                       "p99 T_d " + num(r.T_d_p99_us / 1000.0) + " ms < " + num(max_p99_ms) + " ms");
      }
    } else if (*broker) {
      auto ready = [](std::uint16_t port, void*) {
        std::printf("broker listening on port %u\n", port);
        std::fflush(stdout);
      };
      check(ranids_serve_broker(broker_listen.c_str(), ready, nullptr), "broker");
    } else if (*sim) {
      auto s = make_scenario(sim_sc, g);
      std::uint64_t frames = 0;
      check(ranids_run_sim(s.get(), sim_broker.c_str(), &frames), "sim");
      std::printf("published %llu measurement frames\n", static_cast<unsigned long long>(frames));
    } else if (*xapp) {
      Model m;
      if (!xapp_model.empty()) m = load_model(xapp_model);
      auto p = make_policy(xapp_policy);
      std::uint64_t decisions = 0;
      check(ranids_run_xapp(m.get(), p.get(), xapp_broker.c_str(), xapp_log.empty() ? nullptr : xapp_log.c_str(),
                            xapp_duration, &decisions),
            "xapp");
      std::printf("decisions: %llu\n", static_cast<unsigned long long>(decisions));
    }
  } catch (const Failure& f) {
    std::fprintf(stderr, "error: %s: %s (%s)\n", f.context.c_str(), ranids_last_error(),
                 ranids_status_name(f.status));
    return kExitError;
  }

  if (g.assert_mode && !asserts.failed.empty()) return kExitAssert;
  return 0;
}
