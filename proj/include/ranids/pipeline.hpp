#pragma once

#include "ranids/ml.hpp"
#include "ranids/net.hpp"
#include "ranids/ran_sim.hpp"
#include "ranids/xapp.hpp"

#include <atomic>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace ranids::pipeline {

// one-ue: 1 UE, 10 min, all classes. two-ue: 2 UEs on different channels, 5 min.
// closed-loop: a benign UE next to one that turns malicious after 6 s.
// benign: one UE alternating web and voip.
sim::ScenarioConfig preset(std::string_view name, std::uint64_t seed);
const std::vector<std::string>& preset_names();

struct CollectResult {
  std::size_t rows = 0;
  std::vector<std::uint16_t> ue_ids;
};

// Runs the scenario in virtual time with a collector on `kpm.*` and writes the
// labeled dataset. The output file is removed if anything fails.
CollectResult collect(sim::ScenarioConfig scenario, const std::filesystem::path& out_csv);

struct TrainOptions {
  ml::Algorithm algo = ml::Algorithm::RandomForest;
  ml::ForestParams forest{};
  int knn_k = 5;
  int ada_rounds = 50;
  std::uint64_t seed = 42;
};

ml::Model train(const std::vector<LabeledSample>& data, const TrainOptions& opts);

struct EvalReport {
  ml::Algorithm algo = ml::Algorithm::RandomForest;
  ml::ConfusionMatrix five{kNumClasses};
  ml::ConfusionMatrix binary{2};
  std::size_t bench_n = 0;
  double delta_i_median_us = 0.0; // only meaningful when bench_n > 0
};

// Median wall time of `n` single-sample predictions cycling over `data`.
double bench_inference(const ml::Model& m, const std::vector<LabeledSample>& data, std::size_t n);

// bench_n = 0 skips the timing run.
EvalReport evaluate(const ml::Model& m, const std::vector<LabeledSample>& test, std::size_t bench_n);
std::string format_eval_summary(const EvalReport& r);
// confusion_5class.csv, confusion_binary.csv, metrics.csv, summary.txt. The
// timing goes to bench.txt so the rest stays reproducible.
void write_eval_report(const EvalReport& r, const std::filesystem::path& dir);

enum class Transport { InProcess, Loopback };

struct ClosedLoopConfig {
  sim::ScenarioConfig scenario;
  ml::Model model;
  xapp::PolicyMap policy{};
  bool mitigation = true;
  // InProcess runs in virtual time; Loopback runs in real time over TCP on 127.0.0.1.
  Transport transport = Transport::InProcess;
};

struct Episode {
  std::uint16_t ue_id = 0;
  TrafficClass cls = TrafficClass::Web;
  std::int64_t start_ms = 0;
  std::int64_t end_ms = 0;
  bool preempted = false; // UE was already released before the episode began
  std::size_t releases = 0;
  std::optional<std::int64_t> first_attack_ms;  // first full-window Attack verdict, from episode start
  std::optional<std::int64_t> applied_at_ms;    // release applied, absolute
  std::optional<double> detection_latency_ms;   // applied - start + T_d of the command

  bool terminated() const noexcept { return !preempted && releases == 1; }
};

struct ClosedLoopReport {
  bool aborted = false;
  std::string error;
  Transport transport = Transport::InProcess;
  std::int64_t period_ms = 100;
  xapp::PolicyMap policy{};
  std::vector<xapp::Decision> decisions;
  std::vector<CommandEvent> events;
  std::vector<Segment> segments;
  std::vector<Episode> episodes;
  // Releases not attributable to any attack episode of that UE.
  std::size_t false_mitigations = 0;
  std::map<std::uint16_t, RrcState> final_rrc;
  xapp::EngineStats xapp;
  bus::BrokerStats broker;
  std::optional<xapp::LatencyReport> latency;
  xapp::TimeToCorrect ttc;

  std::size_t releases() const;
};

ClosedLoopReport closed_loop(const ClosedLoopConfig& cfg);
std::string format_closed_loop_summary(const ClosedLoopReport& r);
// predictions.csv, latency.csv, events.csv, episodes.csv, ttc_cdf.csv, summary.txt.
void write_closed_loop_report(const ClosedLoopReport& r, const std::filesystem::path& dir);

// Stand-alone networked components, each blocking until `stop` is set (or the
// scenario ends, for the simulator).
void serve_broker(const net::Endpoint& listen, const std::atomic<bool>& stop,
                  const std::function<void(std::uint16_t port)>& on_ready = {});
sim::RunStats run_networked_sim(sim::ScenarioConfig scenario, const net::Endpoint& broker,
                                const std::atomic<bool>* stop = nullptr);
struct XappRunResult {
  xapp::EngineStats stats;
  std::vector<xapp::Decision> decisions;
};
XappRunResult run_networked_xapp(std::optional<ml::Model> model, const xapp::PolicyMap& policy,
                                 const net::Endpoint& broker, const std::atomic<bool>& stop,
                                 std::int64_t duration_ms = 0);

} // namespace ranids::pipeline
