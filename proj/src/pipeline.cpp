#include "ranids/pipeline.hpp"

#include "ranids/error.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <thread>

namespace ranids::pipeline {

namespace {

using namespace std::chrono_literals;

std::vector<TrafficClass> benign_classes() { return {TrafficClass::Web, TrafficClass::Voip}; }

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) fail(ErrorKind::Io, "cannot open '" + path.string() + "' for writing");
  return os;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  auto os = open_out(path);
  os << text;
  os.flush();
  if (!os) fail(ErrorKind::Io, "write to '" + path.string() + "' failed");
}

void ensure_dir(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec || !std::filesystem::is_directory(dir)) {
    fail(ErrorKind::Io, "cannot create directory '" + dir.string() + "'");
  }
}

std::string fmt(double v) { return format_real(v); }

} // namespace

const std::vector<std::string>& preset_names() {
  static const std::vector<std::string> names{"one-ue", "two-ue", "closed-loop", "benign"};
  return names;
}

sim::ScenarioConfig preset(std::string_view name, std::uint64_t seed) {
  sim::ScenarioConfig sc;
  sc.seed = seed;
  sc.ues.clear();
  if (name == "one-ue") {
    sc.duration_ms = 600'000;
    sim::UeSetup ue;
    ue.ue_id = 1;
    ue.sinr_base_db = 18.5;
    sc.ues.push_back(ue);
  } else if (name == "two-ue") {
    sc.duration_ms = 300'000;
    sim::UeSetup a;
    a.ue_id = 1;
    a.sinr_base_db = 16.5;
    sim::UeSetup b;
    b.ue_id = 2;
    b.sinr_base_db = 20.5;
    sc.ues = {a, b};
  } else if (name == "closed-loop") {
    sc.duration_ms = 30'000;
    sim::UeSetup benign;
    benign.ue_id = 1;
    benign.script = {{TrafficClass::Voip, 6'000}, {TrafficClass::Web, 24'000}};
    sim::UeSetup attacker;
    attacker.ue_id = 2;
    attacker.sinr_base_db = 17.0;
    static constexpr std::array<TrafficClass, 3> kAttacks{TrafficClass::DdosRipper, TrafficClass::DosHulk,
                                                          TrafficClass::Slowloris};
    attacker.script = {{TrafficClass::Web, 6'000}, {kAttacks[seed % kAttacks.size()], 24'000}};
    sc.ues = {benign, attacker};
  } else if (name == "benign") {
    sc.duration_ms = 60'000;
    sim::UeSetup ue;
    ue.ue_id = 1;
    ue.random_classes = benign_classes();
    sc.ues.push_back(ue);
  } else {
    fail(ErrorKind::InvalidArgument, "unknown preset '" + std::string(name) + "'");
  }
  sc.validate();
  return sc;
}

CollectResult collect(sim::ScenarioConfig scenario, const std::filesystem::path& out_csv) {
  scenario.time_mode = sim::TimeMode::Virtual;
  scenario.include_truth = true;
  scenario.validate();

  CollectResult result;
  try {
    VirtualClock clock;
    bus::Broker broker(clock);
    bus::InProcClient sim_client(broker);
    bus::InProcClient collector(broker);
    collector.subscribe("kpm.*");
    DatasetWriter writer(out_csv);

    auto drain = [&](std::int64_t) {
      while (auto f = collector.poll(0us)) {
        auto label = measurement_truth(*f);
        if (!label) fail(ErrorKind::Protocol, "measurement without a ground-truth label");
        LabeledSample ls{kpm_from_json(f->payload), *label};
        if (std::find(result.ue_ids.begin(), result.ue_ids.end(), ls.sample.ue_id) == result.ue_ids.end()) {
          result.ue_ids.push_back(ls.sample.ue_id);
        }
        writer.append(ls);
      }
    };
    sim::RunHooks hooks;
    hooks.after_tick = drain;
    sim::run_scenario(scenario, sim_client, &clock, hooks);
    drain(0);
    if (broker.stats().frames_dropped > 0) fail(ErrorKind::State, "collector queue overflowed");
    writer.close();
    result.rows = writer.rows();
  } catch (...) {
    std::error_code ec;
    std::filesystem::remove(out_csv, ec);
    throw;
  }
  std::sort(result.ue_ids.begin(), result.ue_ids.end());
  return result;
}

ml::Model train(const std::vector<LabeledSample>& data, const TrainOptions& opts) {
  if (data.empty()) fail(ErrorKind::InvalidArgument, "training set is empty");
  const ml::LabeledVectors v = ml::to_vectors(data);
  switch (opts.algo) {
  case ml::Algorithm::DecisionTree: return ml::train_tree(v, opts.forest.tree, {}, opts.seed);
  case ml::Algorithm::RandomForest: return ml::train_forest(v, opts.forest, opts.seed);
  case ml::Algorithm::Knn: return ml::KnnModel(v, opts.knn_k);
  case ml::Algorithm::AdaBoost: return ml::train_adaboost(v, opts.ada_rounds);
  }
  fail(ErrorKind::InvalidArgument, "unknown algorithm");
}

double bench_inference(const ml::Model& m, const std::vector<LabeledSample>& data, std::size_t n) {
  if (data.empty() || n == 0) fail(ErrorKind::InvalidArgument, "benchmark needs samples and n > 0");
  std::vector<FeatureVector> xs;
  xs.reserve(data.size());
  for (const auto& s : data) xs.push_back(feature_vector(s.sample));
  std::vector<double> times(n);
  volatile int sink = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& x = xs[i % xs.size()];
    const auto t0 = std::chrono::steady_clock::now();
    sink = sink + ml::predict(m, x);
    const auto t1 = std::chrono::steady_clock::now();
    times[i] = std::chrono::duration<double, std::micro>(t1 - t0).count();
  }
  return xapp::quantile(std::move(times), 0.5);
}

EvalReport evaluate(const ml::Model& m, const std::vector<LabeledSample>& test, std::size_t bench_n) {
  if (ml::model_features(m) != kNumFeatures) {
    fail(ErrorKind::Model, "model expects " + std::to_string(ml::model_features(m)) +
                               " features, dataset has " + std::to_string(kNumFeatures));
  }
  if (ml::model_classes(m) != kNumClasses) {
    fail(ErrorKind::Model, "model predicts " + std::to_string(ml::model_classes(m)) + " classes, expected " +
                               std::to_string(kNumClasses));
  }
  if (test.empty()) fail(ErrorKind::InvalidArgument, "test set is empty");
  EvalReport r;
  r.algo = ml::algorithm_of(m);
  for (const auto& s : test) {
    r.five.add(class_index(s.label), ml::predict(m, feature_vector(s.sample)));
  }
  r.binary = r.five.collapse_binary();
  if (bench_n > 0) {
    r.bench_n = bench_n;
    r.delta_i_median_us = bench_inference(m, test, bench_n);
  }
  return r;
}

std::string format_eval_summary(const EvalReport& r) {
  std::ostringstream os;
  os << "algorithm: " << ml::to_string(r.algo) << '\n'
     << "samples: " << r.five.total() << '\n'
     << "accuracy (5-class): " << fmt(r.five.accuracy()) << '\n'
     << "macro F1 (5-class): " << fmt(r.five.macro_f1()) << '\n'
     << "accuracy (benign/attack): " << fmt(r.binary.accuracy()) << '\n'
     << "F1 attack: " << fmt(r.binary.class_metrics(1).f1) << '\n';
  for (int c = 0; c < kNumClasses; ++c) {
    const auto m = r.five.class_metrics(c);
    os << "  " << to_string(class_from_index(c)) << ": precision " << fmt(m.precision) << ", recall "
       << fmt(m.recall) << ", F1 " << fmt(m.f1) << ", support " << m.support << '\n';
  }
  return os.str();
}

namespace {

void write_matrix(const ml::ConfusionMatrix& cm, const std::vector<std::string>& names,
                  const std::filesystem::path& path) {
  std::ostringstream os;
  os << "truth\\predicted";
  for (const auto& n : names) os << ',' << n;
  os << '\n';
  for (int t = 0; t < cm.n_classes(); ++t) {
    os << names[static_cast<std::size_t>(t)];
    for (int p = 0; p < cm.n_classes(); ++p) os << ',' << cm.at(t, p);
    os << '\n';
  }
  write_text(path, os.str());
}

std::vector<std::string> class_names() {
  std::vector<std::string> out;
  for (auto c : kAllClasses) out.emplace_back(to_string(c));
  return out;
}

std::vector<std::string> category_names() {
  return {std::string(to_string(TrafficCategory::Benign)), std::string(to_string(TrafficCategory::Attack))};
}

} // namespace

void write_eval_report(const EvalReport& r, const std::filesystem::path& dir) {
  ensure_dir(dir);
  write_matrix(r.five, class_names(), dir / "confusion_5class.csv");
  write_matrix(r.binary, category_names(), dir / "confusion_binary.csv");

  std::ostringstream os;
  os << "scope,class,precision,recall,f1,support\n";
  auto rows = [&](const ml::ConfusionMatrix& cm, const std::vector<std::string>& names, const char* scope) {
    for (int c = 0; c < cm.n_classes(); ++c) {
      const auto m = cm.class_metrics(c);
      os << scope << ',' << names[static_cast<std::size_t>(c)] << ',' << fmt(m.precision) << ','
         << fmt(m.recall) << ',' << fmt(m.f1) << ',' << m.support << '\n';
    }
    os << scope << ",accuracy,,," << fmt(cm.accuracy()) << ',' << cm.total() << '\n';
    os << scope << ",macro,,," << fmt(cm.macro_f1()) << ',' << cm.total() << '\n';
  };
  rows(r.five, class_names(), "5class");
  rows(r.binary, category_names(), "binary");
  write_text(dir / "metrics.csv", os.str());
  write_text(dir / "summary.txt", format_eval_summary(r));
  if (r.bench_n > 0) {
    write_text(dir / "bench.txt", "predictions: " + std::to_string(r.bench_n) +
                                      "\nmedian delta_i_us: " + fmt(r.delta_i_median_us) + '\n');
  }
}

std::size_t ClosedLoopReport::releases() const {
  return static_cast<std::size_t>(std::count_if(events.begin(), events.end(), [](const CommandEvent& e) {
    return e.ok && e.action == CommandAction::RrcRelease && e.rrc_before == RrcState::Connected;
  }));
}

namespace {

void analyze(ClosedLoopReport& r, const sim::ScenarioConfig& sc) {
  r.segments = sc.ground_truth_segments();
  r.ttc = xapp::time_to_correct(r.decisions, r.segments);
  if (!r.decisions.empty()) {
    std::vector<xapp::LatencyTrace> traces;
    traces.reserve(r.decisions.size());
    for (const auto& d : r.decisions) traces.push_back(d.trace);
    r.latency = xapp::latency_report(traces);
  }

  std::map<std::uint64_t, const xapp::Decision*> by_command;
  for (const auto& d : r.decisions) {
    if (d.command) by_command[d.command->command_id] = &d;
  }

  for (const auto& s : r.segments) {
    if (category_of(s.cls) != TrafficCategory::Attack) continue;
    Episode e;
    e.ue_id = s.ue_id;
    e.cls = s.cls;
    e.start_ms = s.start_ms;
    e.end_ms = s.end_ms;
    for (const auto& d : r.decisions) {
      if (d.ue_id == s.ue_id && d.timestamp_ms >= s.start_ms && d.timestamp_ms < s.end_ms && d.window_full &&
          category_of(d.smoothed) == TrafficCategory::Attack) {
        e.first_attack_ms = d.timestamp_ms - s.start_ms;
        break;
      }
    }
    r.episodes.push_back(e);
  }

  // A release belongs to the latest episode of that UE that started at or
  // before the triggering measurement and ended no more than one window plus
  // dwell earlier (the verdict lags the traffic).
  const std::int64_t slack = static_cast<std::int64_t>(r.policy.window + r.policy.dwell) * r.period_ms;
  for (const auto& ev : r.events) {
    if (!(ev.ok && ev.action == CommandAction::RrcRelease && ev.rrc_before == RrcState::Connected)) continue;
    auto it = by_command.find(ev.command_id);
    const std::int64_t decided = it != by_command.end() ? it->second->timestamp_ms : ev.applied_at_ms;
    Episode* owner = nullptr;
    for (auto& e : r.episodes) {
      if (e.ue_id == ev.ue_id && e.start_ms <= decided && decided < e.end_ms + slack) owner = &e;
    }
    for (auto& e : r.episodes) {
      if (e.ue_id == ev.ue_id && e.start_ms > ev.applied_at_ms) e.preempted = true;
    }
    if (!owner) {
      ++r.false_mitigations;
      continue;
    }
    ++owner->releases;
    if (!owner->applied_at_ms) {
      owner->applied_at_ms = ev.applied_at_ms;
      const double td_ms = it != by_command.end() ? static_cast<double>(it->second->trace.T_d_us()) / 1000.0 : 0.0;
      owner->detection_latency_ms = static_cast<double>(ev.applied_at_ms - owner->start_ms) + td_ms;
    }
  }
}

} // namespace

ClosedLoopReport closed_loop(const ClosedLoopConfig& cfg) {
  ClosedLoopReport r;
  r.transport = cfg.transport;
  r.period_ms = cfg.scenario.period_ms;
  r.policy = cfg.policy;
  sim::ScenarioConfig sc = cfg.scenario;
  sc.include_truth = true;

  try {
    if (cfg.transport == Transport::InProcess) {
      sc.time_mode = sim::TimeMode::Virtual;
      VirtualClock clock;
      bus::Broker broker(clock);
      bus::InProcClient sim_client(broker);
      bus::InProcClient xapp_client(broker);
      xapp::XappEngine engine(cfg.model, cfg.policy, clock);
      engine.set_mitigation(cfg.mitigation);
      xapp::XappService service(engine, xapp_client);
      sim::ScenarioRunner runner(sc, sim_client, &clock);
      sim::RunHooks hooks;
      hooks.after_tick = [&](std::int64_t) { service.pump(); };
      runner.run(hooks);
      service.pump();
      r.decisions = engine.decisions();
      r.events = engine.events();
      r.xapp = engine.stats();
      r.broker = broker.stats();
      for (auto id : runner.base_station().ue_ids()) r.final_rrc[id] = runner.base_station().ue(id)->rrc_state;
    } else {
      sc.time_mode = sim::TimeMode::RealTime;
      sc.drain_ms = std::max<std::int64_t>(sc.drain_ms, 200);
      bus::Broker broker(steady_clock());
      net::BrokerServer server(broker, net::Endpoint{"127.0.0.1", 0});
      const net::Endpoint ep{"127.0.0.1", server.port()};
      {
        auto xapp_client = net::TcpBusClient::connect_with_retry(ep);
        auto sim_client = net::TcpBusClient::connect_with_retry(ep);
        xapp::XappEngine engine(cfg.model, cfg.policy, steady_clock());
        engine.set_mitigation(cfg.mitigation);
        xapp::XappService service(engine, *xapp_client);
        sim::ScenarioRunner runner(sc, *sim_client, nullptr);

        std::atomic<bool> stop{false};
        std::exception_ptr xapp_error;
        std::thread worker([&] {
          try {
            service.run(stop, 5ms);
          } catch (...) {
            xapp_error = std::current_exception();
          }
        });
        std::exception_ptr sim_error;
        try {
          runner.run();
        } catch (...) {
          sim_error = std::current_exception();
        }
        std::this_thread::sleep_for(50ms);
        stop = true;
        worker.join();
        sim_client->close();
        xapp_client->close();
        if (sim_error) std::rethrow_exception(sim_error);
        if (xapp_error) std::rethrow_exception(xapp_error);

        r.decisions = engine.decisions();
        r.events = engine.events();
        r.xapp = engine.stats();
        for (auto id : runner.base_station().ue_ids()) r.final_rrc[id] = runner.base_station().ue(id)->rrc_state;
      }
      server.stop();
      r.broker = broker.stats();
    }
    analyze(r, sc);
  } catch (const std::exception& e) {
    r.aborted = true;
    r.error = e.what();
  }
  return r;
}

std::string format_closed_loop_summary(const ClosedLoopReport& r) {
  std::ostringstream os;
  os << "transport: " << (r.transport == Transport::InProcess ? "in-process (virtual time)" : "tcp loopback")
     << '\n';
  if (r.aborted) {
    os << "ABORTED: " << r.error << '\n';
    return os.str();
  }
  std::size_t raw_ok = 0, smooth_ok = 0, labelled = 0;
  for (const auto& d : r.decisions) {
    if (!d.truth) continue;
    ++labelled;
    raw_ok += d.predicted == *d.truth;
    smooth_ok += d.smoothed == *d.truth;
  }
  const auto ratio = [](std::size_t a, std::size_t b) { return b ? static_cast<double>(a) / static_cast<double>(b) : 0.0; };
  std::size_t terminated = 0, preempted = 0;
  for (const auto& e : r.episodes) {
    terminated += e.terminated();
    preempted += e.preempted;
  }
  os << "window: " << r.policy.window << ", dwell: " << r.policy.dwell << '\n'
     << "decisions: " << r.decisions.size() << '\n'
     << "per-interval accuracy: " << fmt(ratio(raw_ok, labelled)) << '\n'
     << "smoothed accuracy: " << fmt(ratio(smooth_ok, labelled)) << '\n'
     << "commands: " << r.xapp.commands << ", events: " << r.events.size() << ", releases: " << r.releases()
     << '\n'
     << "attack episodes: " << r.episodes.size() << ", terminated: " << terminated << ", preempted: " << preempted
     << '\n'
     << "false mitigations: " << r.false_mitigations << '\n';
  for (const auto& [ue, st] : r.final_rrc) os << "ue " << ue << " final state: " << to_string(st) << '\n';
  os << "segments covered: " << r.ttc.covered << ", never correct: " << r.ttc.never << '\n'
     << "correct by 500 ms: " << fmt(r.ttc.fraction_at(500)) << '\n'
     << "malformed frames: " << r.xapp.malformed << ", dropped (no model): " << r.xapp.dropped_no_model << '\n'
     << "broker frames in/out/dropped: " << r.broker.frames_in << '/' << r.broker.frames_out << '/'
     << r.broker.frames_dropped << '\n';
  if (r.latency) os << xapp::format_latency_report(*r.latency);
  return os.str();
}

void write_closed_loop_report(const ClosedLoopReport& r, const std::filesystem::path& dir) {
  ensure_dir(dir);
  write_text(dir / "summary.txt", format_closed_loop_summary(r));
  if (r.aborted) return;
  xapp::write_prediction_log(r.decisions, dir / "predictions.csv");
  xapp::write_latency_csv(r.decisions, dir / "latency.csv");
  xapp::write_cdf_csv(r.ttc, dir / "ttc_cdf.csv");

  std::ostringstream ev;
  ev << "command_id,ue_id,action,ok,rrc_before,rrc_after,policy_before,policy_after,applied_at_ms\n";
  for (const auto& e : r.events) {
    ev << e.command_id << ',' << e.ue_id << ',' << to_string(e.action) << ',' << (e.ok ? 1 : 0) << ','
       << to_string(e.rrc_before) << ',' << to_string(e.rrc_after) << ',' << to_string(e.policy_before) << ','
       << to_string(e.policy_after) << ',' << e.applied_at_ms << '\n';
  }
  write_text(dir / "events.csv", ev.str());

  std::ostringstream ep;
  ep << "ue_id,class,start_ms,end_ms,preempted,releases,first_attack_ms,applied_at_ms,detection_latency_ms\n";
  for (const auto& e : r.episodes) {
    ep << e.ue_id << ',' << to_string(e.cls) << ',' << e.start_ms << ',' << e.end_ms << ','
       << (e.preempted ? 1 : 0) << ',' << e.releases << ','
       << (e.first_attack_ms ? std::to_string(*e.first_attack_ms) : "") << ','
       << (e.applied_at_ms ? std::to_string(*e.applied_at_ms) : "") << ','
       << (e.detection_latency_ms ? fmt(*e.detection_latency_ms) : "") << '\n';
  }
  write_text(dir / "episodes.csv", ep.str());
}

void serve_broker(const net::Endpoint& listen, const std::atomic<bool>& stop,
                  const std::function<void(std::uint16_t)>& on_ready) {
  bus::Broker broker(steady_clock());
  net::BrokerServer server(broker, listen);
  if (on_ready) on_ready(server.port());
  while (!stop.load()) std::this_thread::sleep_for(50ms);
  server.stop();
}

sim::RunStats run_networked_sim(sim::ScenarioConfig scenario, const net::Endpoint& broker,
                                const std::atomic<bool>* stop) {
  scenario.time_mode = sim::TimeMode::RealTime;
  auto client = net::TcpBusClient::connect_with_retry(broker);
  sim::ScenarioRunner runner(scenario, *client, nullptr);
  sim::RunHooks hooks;
  hooks.stop = stop;
  auto stats = runner.run(hooks);
  client->close();
  return stats;
}

XappRunResult run_networked_xapp(std::optional<ml::Model> model, const xapp::PolicyMap& policy,
                                 const net::Endpoint& broker, const std::atomic<bool>& stop,
                                 std::int64_t duration_ms) {
  auto client = net::TcpBusClient::connect_with_retry(broker);
  xapp::XappEngine engine(std::move(model), policy, steady_clock());
  xapp::XappService service(engine, *client);
  const auto deadline = std::chrono::steady_clock::now() + std::chrono::milliseconds(duration_ms);
  while (!stop.load() && (duration_ms <= 0 || std::chrono::steady_clock::now() < deadline)) {
    service.pump(20ms);
  }
  client->close();
  return {engine.stats(), engine.decisions()};
}

} // namespace ranids::pipeline
