#include "ranids/xapp.hpp"

#include "ranids/error.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <sstream>

namespace ranids::xapp {

namespace {

std::int64_t diff(std::uint64_t later, std::uint64_t earlier) noexcept {
  return static_cast<std::int64_t>(later) - static_cast<std::int64_t>(earlier);
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) fail(ErrorKind::Io, "cannot open '" + path.string() + "' for writing");
  return os;
}

void finish(std::ofstream& os, const std::filesystem::path& path) {
  os.flush();
  if (!os) fail(ErrorKind::Io, "write to '" + path.string() + "' failed");
}

} // namespace

std::int64_t LatencyTrace::bd_up_us() const noexcept { return diff(t_bus_in_us, t_bs_send_us); }
std::int64_t LatencyTrace::d_up_us() const noexcept { return diff(t_bus_out_us, t_bus_in_us); }
std::int64_t LatencyTrace::dr_up_us() const noexcept { return diff(t_xapp_recv_us, t_bus_out_us); }

std::int64_t LatencyTrace::dr_down_us() const noexcept {
  return command_leg ? diff(t_cmd_bus_in_us, t_cmd_sent_us) : dr_up_us();
}
std::int64_t LatencyTrace::d_down_us() const noexcept {
  return command_leg ? diff(t_cmd_bus_out_us, t_cmd_bus_in_us) : d_up_us();
}
std::int64_t LatencyTrace::bd_down_us() const noexcept {
  return command_leg ? diff(t_cmd_applied_us, t_cmd_bus_out_us) : bd_up_us();
}

std::int64_t LatencyTrace::delta_i_us() const noexcept { return diff(t_infer_end_us, t_infer_start_us); }

double LatencyTrace::delta_d_us() const noexcept {
  return static_cast<double>(d_up_us() + d_down_us()) / 2.0;
}

std::int64_t LatencyTrace::t_n_us() const noexcept {
  return bd_up_us() + dr_up_us() + dr_down_us() + bd_down_us();
}

std::int64_t LatencyTrace::T_d_us() const noexcept {
  return t_n_us() + d_up_us() + d_down_us() + delta_i_us();
}

bool LatencyTrace::monotone() const noexcept {
  std::vector<std::uint64_t> seq{t_bs_send_us, t_bus_in_us,      t_bus_out_us,
                                 t_xapp_recv_us, t_infer_start_us, t_infer_end_us};
  if (has_command) seq.push_back(t_cmd_sent_us);
  if (has_command && command_leg) {
    seq.push_back(t_cmd_bus_in_us);
    seq.push_back(t_cmd_bus_out_us);
    seq.push_back(t_cmd_applied_us);
  }
  return std::is_sorted(seq.begin(), seq.end());
}

void PolicyMap::validate() const {
  if (window < 1) fail(ErrorKind::InvalidArgument, "window must be >= 1");
  if (dwell < 1) fail(ErrorKind::InvalidArgument, "dwell must be >= 1");
}

PolicyMap policy_from_config(const KeyValueConfig& cfg) {
  PolicyMap p;
  p.window = static_cast<int>(cfg.get_int("window", p.window));
  p.dwell = static_cast<int>(cfg.get_int("dwell", p.dwell));
  for (TrafficClass c : kAllClasses) {
    const std::string key(to_string(c));
    if (auto v = cfg.get(key)) {
      auto a = parse_action(*v);
      if (!a) fail(ErrorKind::Parse, cfg.origin() + ": unknown action '" + *v + "' for " + key);
      p.action[class_index(c)] = *a;
    }
  }
  cfg.reject_unused();
  p.validate();
  return p;
}

PolicyMap load_policy(const std::filesystem::path& path) {
  return policy_from_config(KeyValueConfig::load(path));
}

std::string policy_to_text(const PolicyMap& p) {
  std::ostringstream os;
  os << "window = " << p.window << "\ndwell = " << p.dwell << '\n';
  for (TrafficClass c : kAllClasses) os << to_string(c) << " = " << to_string(p[c]) << '\n';
  return os.str();
}

TrafficClass window_vote(const std::deque<TrafficClass>& window) {
  if (window.empty()) fail(ErrorKind::InvalidArgument, "empty vote window");
  std::array<int, kNumClasses> counts{};
  for (auto c : window) ++counts[class_index(c)];
  const int best = *std::max_element(counts.begin(), counts.end());
  for (auto it = window.rbegin(); it != window.rend(); ++it) {
    if (counts[class_index(*it)] == best) return *it;
  }
  return window.back();
}

void write_prediction_log(const std::vector<Decision>& log, const std::filesystem::path& path) {
  auto os = open_out(path);
  os << kPredictionLogHeader << '\n';
  for (const auto& d : log) {
    os << d.timestamp_ms << ',' << d.ue_id << ',' << (d.truth ? to_string(*d.truth) : "") << ','
       << to_string(d.predicted) << ',' << to_string(d.smoothed) << ','
       << (d.command ? to_string(d.command->action) : "") << ',' << d.trace.T_d_us() << '\n';
  }
  finish(os, path);
}

XappEngine::XappEngine(std::optional<ml::Model> model, PolicyMap policy, const Clock& clock)
    : policy_(policy), clock_(clock) {
  policy_.validate();
  if (model) set_model(std::move(*model));
}

void XappEngine::set_model(ml::Model model) {
  if (ml::model_features(model) != kNumFeatures) {
    fail(ErrorKind::Model, "model expects " + std::to_string(ml::model_features(model)) +
                               " features, measurements carry " + std::to_string(kNumFeatures));
  }
  auto p = std::make_shared<const ml::Model>(std::move(model));
  std::lock_guard lk(model_mu_);
  model_ = std::move(p);
}

bool XappEngine::has_model() const {
  std::lock_guard lk(model_mu_);
  return model_ != nullptr;
}

XappEngine::UeState& XappEngine::state_for(std::uint32_t key) {
  std::lock_guard lk(states_mu_);
  auto& slot = states_[key];
  if (!slot) slot = std::make_unique<UeState>();
  return *slot;
}

std::optional<Outgoing> XappEngine::on_measurement(const bus::Frame& f, std::optional<std::uint64_t> recv_us) {
  const std::uint64_t t_recv = recv_us.value_or(clock_.now_us());
  {
    std::lock_guard lk(log_mu_);
    ++stats_.frames;
  }

  KpmSample s;
  std::optional<TrafficClass> truth;
  try {
    if (f.kind != bus::FrameKind::Measurement) fail(ErrorKind::Protocol, "not a measurement frame");
    s = kpm_from_json(f.payload);
    truth = measurement_truth(f);
  } catch (const Error&) {
    std::lock_guard lk(log_mu_);
    ++stats_.malformed;
    return std::nullopt;
  }

  std::shared_ptr<const ml::Model> model;
  {
    std::lock_guard lk(model_mu_);
    model = model_;
  }
  if (!model) {
    std::lock_guard lk(log_mu_);
    ++stats_.dropped_no_model;
    if (!warned_no_model_) {
      std::cerr << "xapp: no model loaded, dropping measurements\n";
      warned_no_model_ = true;
    }
    return std::nullopt;
  }

  UeState& st = state_for((std::uint32_t{s.bs_id} << 16) | s.ue_id);
  std::lock_guard ue_lock(st.mu);

  Decision d;
  d.timestamp_ms = s.timestamp_ms;
  d.bs_id = s.bs_id;
  d.ue_id = s.ue_id;
  d.truth = truth;
  d.trace.t_bs_send_us = f.t_sent_us;
  d.trace.t_bus_in_us = f.t_bus_in_us.value_or(f.t_sent_us);
  d.trace.t_bus_out_us = f.t_bus_out_us.value_or(d.trace.t_bus_in_us);
  d.trace.t_xapp_recv_us = t_recv;

  const FeatureVector x = feature_vector(s);
  d.trace.t_infer_start_us = clock_.now_us();
  d.predicted = ml::predict_class(*model, x);
  d.trace.t_infer_end_us = clock_.now_us();

  st.window.push_back(d.predicted);
  while (st.window.size() > static_cast<std::size_t>(policy_.window)) st.window.pop_front();
  d.window_full = st.window.size() == static_cast<std::size_t>(policy_.window);
  d.smoothed = window_vote(st.window);

  std::optional<Outgoing> out;
  if (d.window_full) {
    const TrafficCategory cat = category_of(d.smoothed);
    if (cat == st.last_category) {
      ++st.category_streak;
    } else {
      st.last_category = cat;
      st.category_streak = 1;
    }
    if (st.category_streak >= policy_.dwell) {
      const CommandAction action = policy_[d.smoothed];
      bool emit = false;
      if (cat == TrafficCategory::Attack) {
        emit = st.armed && action != CommandAction::Forward;
      } else {
        st.armed = true;
        emit = action != CommandAction::Forward && action != st.current;
      }
      if (emit && mitigation_.load()) {
        if (cat == TrafficCategory::Attack) st.armed = false;
        st.current = action;
        RicCommand cmd;
        cmd.ue_id = s.ue_id;
        cmd.action = action;
        cmd.decision_ts_ms = s.timestamp_ms;
        cmd.issued_at_us = clock_.now_us();
        {
          std::lock_guard lk(log_mu_);
          cmd.command_id = next_command_id_++;
        }
        d.command = cmd;
        d.trace.has_command = true;
        d.trace.t_cmd_sent_us = cmd.issued_at_us;
        out = Outgoing{s.bs_id, cmd};
      }
    }
  }

  std::lock_guard lk(log_mu_);
  ++stats_.decisions;
  if (d.command) {
    ++stats_.commands;
    by_command_[d.command->command_id] = log_.size();
  }
  log_.push_back(std::move(d));
  return out;
}

void XappEngine::on_event(const bus::Frame& f) {
  CommandEvent ev;
  try {
    ev = event_from_json(f.payload);
  } catch (const Error&) {
    std::lock_guard lk(log_mu_);
    ++stats_.malformed;
    return;
  }
  std::lock_guard lk(log_mu_);
  ++stats_.events;
  events_.push_back(ev);
  auto it = by_command_.find(ev.command_id);
  if (it == by_command_.end()) {
    ++stats_.unmatched_events;
    return;
  }
  LatencyTrace& t = log_[it->second].trace;
  t.t_cmd_bus_in_us = ev.t_cmd_bus_in_us;
  t.t_cmd_bus_out_us = ev.t_cmd_bus_out_us;
  t.t_cmd_applied_us = ev.t_cmd_applied_us;
  t.command_leg = true;
}

std::vector<Decision> XappEngine::decisions() const {
  std::lock_guard lk(log_mu_);
  return log_;
}

std::vector<CommandEvent> XappEngine::events() const {
  std::lock_guard lk(log_mu_);
  return events_;
}

EngineStats XappEngine::stats() const {
  std::lock_guard lk(log_mu_);
  return stats_;
}

XappService::XappService(XappEngine& engine, bus::BusClient& client) : engine_(engine), client_(client) {
  client_.subscribe("kpm.*");
  client_.subscribe("event.*");
}

void XappService::handle(const bus::Frame& f) {
  switch (f.kind) {
  case bus::FrameKind::Measurement:
    if (auto out = engine_.on_measurement(f)) {
      client_.publish(make_command_frame(out->bs_id, out->command, out->command.issued_at_us));
    }
    break;
  case bus::FrameKind::Event: engine_.on_event(f); break;
  default: break;
  }
}

std::size_t XappService::pump(std::chrono::microseconds first_wait) {
  std::size_t n = 0;
  auto f = client_.poll(first_wait);
  while (f) {
    handle(*f);
    ++n;
    f = client_.poll(std::chrono::microseconds(0));
  }
  return n;
}

void XappService::run(const std::atomic<bool>& stop, std::chrono::milliseconds poll) {
  while (!stop.load()) {
    if (auto f = client_.poll(poll)) handle(*f);
  }
}

double quantile(std::vector<double> v, double q) {
  if (v.empty()) fail(ErrorKind::InvalidArgument, "quantile of an empty set");
  if (!(q >= 0.0 && q <= 1.0)) fail(ErrorKind::InvalidArgument, "quantile outside [0, 1]");
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return v[lo] + (v[hi] - v[lo]) * frac;
}

namespace {
Quantiles quantiles(const std::vector<double>& v) {
  return {quantile(v, 0.5), quantile(v, 0.99), *std::max_element(v.begin(), v.end())};
}
} // namespace

LatencyReport latency_report(const std::vector<LatencyTrace>& traces) {
  if (traces.empty()) fail(ErrorKind::InvalidArgument, "latency report needs at least one trace");
  LatencyReport r;
  r.n = traces.size();
  std::vector<double> di, dd, tn, td;
  for (const auto& t : traces) {
    const double T = static_cast<double>(t.T_d_us());
    di.push_back(static_cast<double>(t.delta_i_us()));
    dd.push_back(t.delta_d_us());
    tn.push_back(static_cast<double>(t.t_n_us()));
    td.push_back(T);
    const double recomputed = static_cast<double>(t.t_n_us()) + 2.0 * t.delta_d_us() +
                              static_cast<double>(t.delta_i_us());
    if (recomputed != T) ++r.identity_failures;
    if (!t.monotone()) ++r.non_monotone;
    if (T > static_cast<double>(kBudgetUs)) ++r.over_budget;
  }
  r.delta_i_us = quantiles(di);
  r.delta_d_us = quantiles(dd);
  r.t_n_us = quantiles(tn);
  r.T_d_us = quantiles(td);
  r.margin_median_us = static_cast<double>(kBudgetUs) - r.T_d_us.median;
  r.margin_p99_us = static_cast<double>(kBudgetUs) - r.T_d_us.p99;
  return r;
}

std::string format_latency_report(const LatencyReport& r) {
  std::ostringstream os;
  auto line = [&](const char* name, const Quantiles& q) {
    os << name << ": median " << format_real(q.median) << " us, p99 " << format_real(q.p99) << " us, max "
       << format_real(q.max) << " us\n";
  };
  os << "decisions: " << r.n << '\n';
  line("delta_i", r.delta_i_us);
  line("delta_d", r.delta_d_us);
  line("t_n", r.t_n_us);
  line("T_d", r.T_d_us);
  os << "budget margin: median " << format_real(r.margin_median_us) << " us, p99 "
     << format_real(r.margin_p99_us) << " us\n"
     << "over budget: " << r.over_budget << '\n'
     << "identity failures: " << r.identity_failures << '\n'
     << "non-monotone traces: " << r.non_monotone << '\n';
  return os.str();
}

void write_latency_csv(const std::vector<Decision>& log, const std::filesystem::path& path) {
  auto os = open_out(path);
  os << "timestamp_ms,ue_id,bd_up_us,d_up_us,dr_up_us,delta_i_us,dr_down_us,d_down_us,bd_down_us,"
        "t_n_us,T_d_us,command_leg\n";
  for (const auto& d : log) {
    const auto& t = d.trace;
    os << d.timestamp_ms << ',' << d.ue_id << ',' << t.bd_up_us() << ',' << t.d_up_us() << ','
       << t.dr_up_us() << ',' << t.delta_i_us() << ',' << t.dr_down_us() << ',' << t.d_down_us() << ','
       << t.bd_down_us() << ',' << t.t_n_us() << ',' << t.T_d_us() << ',' << (t.command_leg ? 1 : 0)
       << '\n';
  }
  finish(os, path);
}

double TimeToCorrect::fraction_at(std::int64_t time_ms) const {
  if (covered == 0) return 0.0;
  std::size_t n = 0;
  for (const auto& s : segments) {
    if (s.samples > 0 && s.time_ms && *s.time_ms <= time_ms) ++n;
  }
  return static_cast<double>(n) / static_cast<double>(covered);
}

TimeToCorrect time_to_correct(const std::vector<Decision>& log, const std::vector<Segment>& segments) {
  std::map<std::uint16_t, std::vector<std::pair<std::int64_t, TrafficClass>>> by_ue;
  for (const auto& d : log) by_ue[d.ue_id].emplace_back(d.timestamp_ms, d.smoothed);
  for (auto& [ue, v] : by_ue) {
    std::stable_sort(v.begin(), v.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  }

  TimeToCorrect out;
  std::vector<std::int64_t> times;
  for (const auto& seg : segments) {
    SegmentOutcome o{seg, 0, std::nullopt};
    auto it = by_ue.find(seg.ue_id);
    if (it != by_ue.end()) {
      const auto& v = it->second;
      auto lo = std::lower_bound(v.begin(), v.end(), seg.start_ms,
                                 [](const auto& p, std::int64_t t) { return p.first < t; });
      auto hi = std::lower_bound(lo, v.end(), seg.end_ms,
                                 [](const auto& p, std::int64_t t) { return p.first < t; });
      o.samples = static_cast<std::size_t>(hi - lo);
      if (o.samples > 0) {
        auto settle = hi;
        while (settle != lo && (settle - 1)->second == seg.cls) --settle;
        if (settle != hi) o.time_ms = settle->first - seg.start_ms;
      }
    }
    if (o.samples > 0) {
      ++out.covered;
      if (o.time_ms) {
        times.push_back(*o.time_ms);
      } else {
        ++out.never;
      }
    }
    out.segments.push_back(o);
  }

  std::sort(times.begin(), times.end());
  for (std::size_t i = 0; i < times.size(); ++i) {
    if (i + 1 < times.size() && times[i + 1] == times[i]) continue;
    out.cdf.emplace_back(times[i], static_cast<double>(i + 1) / static_cast<double>(out.covered));
  }
  return out;
}

void write_cdf_csv(const TimeToCorrect& t, const std::filesystem::path& path) {
  auto os = open_out(path);
  os << "time_ms,fraction\n";
  for (const auto& [ms, frac] : t.cdf) os << ms << ',' << format_real(frac) << '\n';
  finish(os, path);
}

std::vector<Segment> segments_from_log(const std::vector<Decision>& log, std::int64_t period_ms) {
  if (period_ms <= 0) fail(ErrorKind::InvalidArgument, "period_ms must be > 0");
  std::map<std::uint16_t, std::vector<std::pair<std::int64_t, TrafficClass>>> by_ue;
  for (const auto& d : log) {
    if (d.truth) by_ue[d.ue_id].emplace_back(d.timestamp_ms, *d.truth);
  }
  std::vector<Segment> out;
  for (auto& [ue, v] : by_ue) {
    std::stable_sort(v.begin(), v.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    for (std::size_t i = 0; i < v.size(); ++i) {
      const bool starts = i == 0 || v[i].second != v[i - 1].second || v[i].first - v[i - 1].first > period_ms;
      if (starts) out.push_back({ue, v[i].second, v[i].first, v[i].first + period_ms});
      else out.back().end_ms = v[i].first + period_ms;
    }
  }
  return out;
}

} // namespace ranids::xapp
