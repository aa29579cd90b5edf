#include "ranids/ran_sim.hpp"

#include "ranids/error.hpp"

#include <sstream>
#include <thread>

namespace ranids::sim {

std::string_view to_string(TimeMode m) noexcept {
  return m == TimeMode::Virtual ? "virtual" : "realtime";
}

TimeMode parse_time_mode(std::string_view s) {
  if (s == "virtual") return TimeMode::Virtual;
  if (s == "realtime" || s == "real" || s == "real-time") return TimeMode::RealTime;
  fail(ErrorKind::InvalidArgument, "unknown time mode '" + std::string(s) + "'");
}

void ScenarioConfig::validate() const {
  if (period_ms <= 0) fail(ErrorKind::InvalidArgument, "period_ms must be > 0");
  if (duration_ms < 0) fail(ErrorKind::InvalidArgument, "duration_ms must be >= 0");
  if (duration_ms % period_ms != 0) {
    fail(ErrorKind::InvalidArgument, "duration_ms must be a multiple of period_ms");
  }
  if (transient_ms < 0) fail(ErrorKind::InvalidArgument, "transient_ms must be >= 0");
  if (random_min_segment_ms <= 0 || random_min_segment_ms > random_max_segment_ms) {
    fail(ErrorKind::InvalidArgument, "invalid random segment range");
  }
  if (ues.empty()) fail(ErrorKind::InvalidArgument, "scenario has no UEs");
  for (std::size_t i = 0; i < ues.size(); ++i) {
    for (std::size_t j = i + 1; j < ues.size(); ++j) {
      if (ues[i].ue_id == ues[j].ue_id) {
        fail(ErrorKind::InvalidArgument, "duplicate ue_id " + std::to_string(ues[i].ue_id));
      }
    }
    if (ues[i].script.empty() && ues[i].random_classes.empty()) {
      fail(ErrorKind::InvalidArgument, "UE " + std::to_string(ues[i].ue_id) + " has no classes");
    }
  }
  params.validate();
}

std::vector<Script> ScenarioConfig::resolved_scripts() const {
  std::vector<Script> out;
  for (const auto& ue : ues) {
    if (!ue.script.empty()) {
      out.push_back(ue.script);
    } else {
      Script s = random_script(mix_seed(seed, 1000U + ue.ue_id), duration_ms, random_min_segment_ms,
                               random_max_segment_ms, period_ms, ue.random_classes);
      if (s.empty()) s.push_back({ue.random_classes.front(), 0});
      out.push_back(std::move(s));
    }
  }
  return out;
}

std::vector<Segment> ScenarioConfig::ground_truth_segments() const {
  std::vector<Segment> out;
  const auto scripts = resolved_scripts();
  for (std::size_t u = 0; u < ues.size(); ++u) {
    std::int64_t t = 0;
    bool progressed = true;
    while (t < duration_ms && progressed) {
      progressed = false;
      for (const auto& e : scripts[u]) {
        if (e.duration_ms == 0) continue;
        if (t >= duration_ms) break;
        out.push_back({ues[u].ue_id, e.cls, t, std::min(t + e.duration_ms, duration_ms)});
        t += e.duration_ms;
        progressed = true;
      }
      if (!ues[u].loop) break;
    }
  }
  return out;
}

ScenarioConfig scenario_from_config(const KeyValueConfig& cfg) {
  ScenarioConfig sc;
  sc.bs_id = static_cast<std::uint16_t>(cfg.get_uint("bs_id", sc.bs_id));
  sc.seed = cfg.get_uint("seed", sc.seed);
  sc.duration_ms = cfg.get_int("duration_ms", sc.duration_ms);
  sc.period_ms = cfg.get_int("period_ms", sc.period_ms);
  sc.transient_ms = cfg.get_int("transient_ms", sc.transient_ms);
  sc.random_min_segment_ms = cfg.get_int("random.min_segment_ms", sc.random_min_segment_ms);
  sc.random_max_segment_ms = cfg.get_int("random.max_segment_ms", sc.random_max_segment_ms);
  sc.time_mode = parse_time_mode(cfg.get_string("time_mode", "virtual"));
  sc.broker = cfg.get_string("broker", sc.broker);
  sc.drain_ms = cfg.get_int("drain_ms", sc.drain_ms);
  sc.include_truth = cfg.get_bool("include_truth", sc.include_truth);

  for (const auto& key : cfg.keys_with_prefix("gen.")) {
    sc.params.set(key.substr(4), cfg.get_double(key, 0.0));
  }

  std::vector<std::uint16_t> ids;
  if (auto list = cfg.get("ues")) {
    std::stringstream ss(*list);
    std::string item;
    while (std::getline(ss, item, ',')) {
      try {
        const auto v = std::stoul(item);
        if (v > 0xFFFF) throw std::out_of_range("ue id");
        ids.push_back(static_cast<std::uint16_t>(v));
      } catch (const std::exception&) {
        fail(ErrorKind::Parse, cfg.origin() + ": bad UE id '" + item + "' in 'ues'");
      }
    }
  } else {
    ids.push_back(1);
  }

  sc.ues.clear();
  for (auto id : ids) {
    UeSetup ue;
    ue.ue_id = id;
    const std::string p = "ue." + std::to_string(id) + ".";
    const std::string script = cfg.get_string(p + "script", "random");
    if (script != "random") ue.script = parse_script(script);
    ue.loop = cfg.get_bool(p + "loop", ue.loop);
    ue.sinr_base_db = cfg.get_double(p + "sinr_db", ue.sinr_base_db);
    ue.walk_cap_db = cfg.get_double(p + "walk_cap_db", ue.walk_cap_db);
    ue.walk_step_db = cfg.get_double(p + "walk_step_db", ue.walk_step_db);
    if (auto classes = cfg.get(p + "classes")) {
      ue.random_classes.clear();
      std::stringstream ss(*classes);
      std::string item;
      while (std::getline(ss, item, ',')) {
        auto c = parse_traffic_class(item);
        if (!c) fail(ErrorKind::Parse, cfg.origin() + ": unknown class '" + item + "'");
        ue.random_classes.push_back(*c);
      }
    }
    sc.ues.push_back(std::move(ue));
  }
  cfg.reject_unused();
  sc.validate();
  return sc;
}

ScenarioConfig load_scenario(const std::filesystem::path& path) {
  return scenario_from_config(KeyValueConfig::load(path));
}

std::string scenario_to_text(const ScenarioConfig& sc) {
  std::ostringstream os;
  os << "bs_id = " << sc.bs_id << '\n'
     << "seed = " << sc.seed << '\n'
     << "duration_ms = " << sc.duration_ms << '\n'
     << "period_ms = " << sc.period_ms << '\n'
     << "transient_ms = " << sc.transient_ms << '\n'
     << "time_mode = " << to_string(sc.time_mode) << '\n'
     << "random.min_segment_ms = " << sc.random_min_segment_ms << '\n'
     << "random.max_segment_ms = " << sc.random_max_segment_ms << '\n';
  if (!sc.broker.empty()) os << "broker = " << sc.broker << '\n';
  if (sc.drain_ms != 0) os << "drain_ms = " << sc.drain_ms << '\n';
  if (!sc.include_truth) os << "include_truth = false\n";
  os << "ues = ";
  for (std::size_t i = 0; i < sc.ues.size(); ++i) os << (i ? "," : "") << sc.ues[i].ue_id;
  os << '\n';
  for (const auto& ue : sc.ues) {
    const std::string p = "ue." + std::to_string(ue.ue_id) + ".";
    os << p << "script = " << (ue.script.empty() ? "random" : format_script(ue.script)) << '\n'
       << p << "loop = " << (ue.loop ? "true" : "false") << '\n'
       << p << "sinr_db = " << format_real(ue.sinr_base_db) << '\n'
       << p << "walk_cap_db = " << format_real(ue.walk_cap_db) << '\n'
       << p << "walk_step_db = " << format_real(ue.walk_step_db) << '\n'
       << p << "classes = ";
    for (std::size_t i = 0; i < ue.random_classes.size(); ++i) {
      os << (i ? "," : "") << to_string(ue.random_classes[i]);
    }
    os << '\n';
  }
  const GeneratorParams defaults;
  const auto base = defaults.entries();
  const auto cur = sc.params.entries();
  for (std::size_t i = 0; i < cur.size(); ++i) {
    if (cur[i].second != base[i].second) os << "gen." << cur[i].first << " = " << format_real(cur[i].second) << '\n';
  }
  return os.str();
}

BaseStation::BaseStation(const ScenarioConfig& cfg)
    : bs_id_(cfg.bs_id), period_ms_(cfg.period_ms), include_truth_(cfg.include_truth) {
  cfg.validate();
  const auto scripts = cfg.resolved_scripts();
  for (std::size_t u = 0; u < cfg.ues.size(); ++u) {
    const UeSetup& setup = cfg.ues[u];
    ExecutionOptions opts;
    opts.period_ms = cfg.period_ms;
    opts.transient_ms = cfg.transient_ms;
    opts.bs_id = cfg.bs_id;
    opts.ue_id = setup.ue_id;
    opts.sinr_base_db = setup.sinr_base_db;
    opts.walk_cap_db = setup.walk_cap_db;
    opts.walk_step_db = setup.walk_step_db;
    opts.params = cfg.params;
    ues_.emplace(setup.ue_id,
                 UeContext{setup.ue_id, RrcState::Connected, UePolicy::Forward,
                           ExecutionStream(scripts[u], mix_seed(cfg.seed, setup.ue_id), opts, setup.loop)});
  }
}

const UeContext* BaseStation::ue(std::uint16_t ue_id) const {
  auto it = ues_.find(ue_id);
  return it == ues_.end() ? nullptr : &it->second;
}

std::vector<std::uint16_t> BaseStation::ue_ids() const {
  std::vector<std::uint16_t> out;
  for (const auto& [id, ctx] : ues_) out.push_back(id);
  return out;
}

std::vector<bus::Frame> BaseStation::tick(std::int64_t now_ms, const Clock& clock) {
  if (now_ms < 0 || now_ms % period_ms_ != 0) {
    fail(ErrorKind::InvalidArgument, "tick time " + std::to_string(now_ms) + " is not aligned to the period");
  }
  if (now_ms <= last_tick_ms_) fail(ErrorKind::InvalidArgument, "tick time went backwards");
  last_tick_ms_ = now_ms;

  std::vector<bus::Frame> out;
  for (auto& [id, ue] : ues_) {
    // The generator keeps running regardless of RRC state or policy.
    while (!ue.stream.done() && ue.stream.now_ms() < now_ms) ue.stream.next();
    if (ue.stream.done() || ue.stream.now_ms() != now_ms) continue;
    LabeledSample ls = ue.stream.next();
    if (ue.rrc_state == RrcState::Idle) continue;
    if (ue.policy == UePolicy::Drop) {
      ls.sample.ul_brate_bps = 0.0;
      ls.sample.ul_pkts_ok = 0;
    }
    out.push_back(make_measurement_frame(
        ls.sample, include_truth_ ? std::optional<TrafficClass>(ls.label) : std::nullopt, clock.now_us()));
  }
  return out;
}

bus::Frame BaseStation::apply_command(const RicCommand& cmd, std::int64_t now_ms, const Clock& clock,
                                      const bus::Frame* carrier) {
  CommandEvent ev;
  ev.bs_id = bs_id_;
  ev.ue_id = cmd.ue_id;
  ev.command_id = cmd.command_id;
  ev.action = cmd.action;
  ev.applied_at_ms = now_ms;
  if (carrier) {
    ev.t_cmd_sent_us = carrier->t_sent_us;
    ev.t_cmd_bus_in_us = carrier->t_bus_in_us.value_or(carrier->t_sent_us);
    ev.t_cmd_bus_out_us = carrier->t_bus_out_us.value_or(ev.t_cmd_bus_in_us);
  }

  auto it = ues_.find(cmd.ue_id);
  if (it == ues_.end()) {
    ev.ok = false;
    ev.error = "unknown ue_id " + std::to_string(cmd.ue_id);
    ev.t_cmd_applied_us = clock.now_us();
    return make_event_frame(ev, ev.t_cmd_applied_us);
  }
  UeContext& ue = it->second;
  ev.rrc_before = ue.rrc_state;
  ev.policy_before = ue.policy;
  switch (cmd.action) {
  case CommandAction::Forward: ue.policy = UePolicy::Forward; break;
  case CommandAction::Prioritize: ue.policy = UePolicy::Prioritize; break;
  case CommandAction::Drop: ue.policy = UePolicy::Drop; break;
  case CommandAction::RrcRelease: ue.rrc_state = RrcState::Idle; break;
  }
  ev.rrc_after = ue.rrc_state;
  ev.policy_after = ue.policy;
  ev.t_cmd_applied_us = clock.now_us();
  return make_event_frame(ev, ev.t_cmd_applied_us);
}

ScenarioRunner::ScenarioRunner(const ScenarioConfig& cfg, bus::BusClient& client, VirtualClock* virtual_clock)
    : cfg_(cfg),
      client_(client),
      vclock_(virtual_clock),
      clock_(virtual_clock ? static_cast<const Clock&>(*virtual_clock) : steady_clock()),
      bs_(cfg) {
  if (cfg_.time_mode == TimeMode::Virtual && !vclock_) {
    fail(ErrorKind::InvalidArgument, "virtual time mode needs a virtual clock");
  }
  client_.subscribe(bus::topic_for("ctrl", cfg_.bs_id));
}

void ScenarioRunner::handle_frame(const bus::Frame& f, std::int64_t now_ms) {
  if (f.kind != bus::FrameKind::Command) return;
  RicCommand cmd;
  try {
    cmd = command_from_json(f.payload);
  } catch (const Error&) {
    ++stats_.command_errors;
    return;
  }
  bus::Frame ev = bs_.apply_command(cmd, now_ms, clock_, &f);
  const CommandEvent e = event_from_json(ev.payload);
  if (e.ok) {
    ++stats_.commands_applied;
  } else {
    ++stats_.command_errors;
  }
  stats_.events.push_back(e);
  client_.publish(ev);
}

void ScenarioRunner::drain_commands(std::int64_t now_ms, std::chrono::microseconds wait) {
  while (auto f = client_.poll(wait)) {
    handle_frame(*f, now_ms);
    wait = std::chrono::microseconds(0);
  }
}

RunStats ScenarioRunner::run(const RunHooks& hooks) {
  const bool virtual_time = cfg_.time_mode == TimeMode::Virtual;
  const auto start = std::chrono::steady_clock::now();
  auto elapsed_ms = [&] {
    return std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - start)
        .count();
  };

  for (std::int64_t t = 0; t < cfg_.duration_ms; t += cfg_.period_ms) {
    if (hooks.stop && hooks.stop->load()) break;
    if (virtual_time) {
      vclock_->set_ms(t);
      drain_commands(t, std::chrono::microseconds(0));
    } else {
      const auto deadline = start + std::chrono::milliseconds(t);
      while (true) {
        const auto now = std::chrono::steady_clock::now();
        if (now >= deadline) break;
        const auto wait = std::chrono::duration_cast<std::chrono::microseconds>(deadline - now);
        if (auto f = client_.poll(wait)) handle_frame(*f, elapsed_ms());
      }
    }

    for (auto& f : bs_.tick(t, clock_)) {
      client_.publish(f);
      ++stats_.frames_published;
    }
    ++stats_.ticks;

    if (virtual_time) {
      if (hooks.after_tick) hooks.after_tick(t);
      drain_commands(t, std::chrono::microseconds(0));
    } else {
      drain_commands(elapsed_ms(), std::chrono::microseconds(0));
    }
  }

  if (!virtual_time && cfg_.drain_ms > 0) {
    const auto deadline = std::chrono::steady_clock::now() + std::chrono::milliseconds(cfg_.drain_ms);
    while (std::chrono::steady_clock::now() < deadline) {
      const auto wait = std::chrono::duration_cast<std::chrono::microseconds>(
          deadline - std::chrono::steady_clock::now());
      if (wait.count() <= 0) break;
      if (auto f = client_.poll(wait)) handle_frame(*f, elapsed_ms());
    }
  }
  return stats_;
}

RunStats run_scenario(const ScenarioConfig& cfg, bus::BusClient& client, VirtualClock* virtual_clock,
                      const RunHooks& hooks) {
  ScenarioRunner runner(cfg, client, virtual_clock);
  return runner.run(hooks);
}

} // namespace ranids::sim
