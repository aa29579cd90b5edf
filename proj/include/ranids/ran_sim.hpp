#pragma once

#include "ranids/clock.hpp"
#include "ranids/config.hpp"
#include "ranids/databus.hpp"
#include "ranids/messages.hpp"
#include "ranids/traffic.hpp"

#include <atomic>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace ranids::sim {

enum class TimeMode { Virtual, RealTime };

std::string_view to_string(TimeMode m) noexcept;
TimeMode parse_time_mode(std::string_view s);

struct UeSetup {
  std::uint16_t ue_id = 1;
  // Explicit script, or empty to draw a random one covering the run.
  Script script;
  bool loop = false;
  double sinr_base_db = 18.0;
  double walk_cap_db = 4.0;
  double walk_step_db = 0.25;
  std::vector<TrafficClass> random_classes{kAllClasses.begin(), kAllClasses.end()};
};

struct ScenarioConfig {
  std::uint16_t bs_id = 1;
  std::uint64_t seed = 42;
  std::int64_t duration_ms = 60'000;
  std::int64_t period_ms = 100;
  std::int64_t transient_ms = 500;
  std::int64_t random_min_segment_ms = 3'000;
  std::int64_t random_max_segment_ms = 12'000;
  TimeMode time_mode = TimeMode::Virtual;
  std::string broker; // host:port, used by networked runs
  // Keep polling for commands this long after the last tick.
  std::int64_t drain_ms = 0;
  bool include_truth = true;
  GeneratorParams params;
  std::vector<UeSetup> ues{UeSetup{}};

  void validate() const;
  // Resolves random scripts into explicit ones (deterministic from seed).
  std::vector<Script> resolved_scripts() const;
  std::vector<Segment> ground_truth_segments() const;
};

// Keys: bs_id, seed, duration_ms, period_ms, transient_ms, time_mode,
// broker, drain_ms, include_truth, random.min_segment_ms,
// random.max_segment_ms, ues (comma-separated ids), ue.<id>.script,
// ue.<id>.loop, ue.<id>.sinr_db, ue.<id>.walk_cap_db, ue.<id>.walk_step_db,
// ue.<id>.classes, gen.<generator key>.
ScenarioConfig scenario_from_config(const KeyValueConfig& cfg);
ScenarioConfig load_scenario(const std::filesystem::path& path);
std::string scenario_to_text(const ScenarioConfig& cfg);

struct UeContext {
  std::uint16_t ue_id = 0;
  RrcState rrc_state = RrcState::Connected;
  UePolicy policy = UePolicy::Forward;
  ExecutionStream stream;
};

// Simulated base station: per-UE traffic generators plus the RIC agent that
// turns their KPMs into measurement frames and applies RIC commands.
class BaseStation {
public:
  BaseStation(const ScenarioConfig& cfg);

  // One measurement frame per Connected UE on `kpm.<bs_id>`. now_ms must be a
  // multiple of the period and not earlier than the previous tick.
  std::vector<bus::Frame> tick(std::int64_t now_ms, const Clock& clock);

  // Applies a command frame (or bare command) and returns the event frame
  // that records the transition.
  bus::Frame apply_command(const RicCommand& cmd, std::int64_t now_ms, const Clock& clock,
                           const bus::Frame* carrier = nullptr);

  std::uint16_t bs_id() const noexcept { return bs_id_; }
  std::int64_t period_ms() const noexcept { return period_ms_; }
  const UeContext* ue(std::uint16_t ue_id) const;
  std::vector<std::uint16_t> ue_ids() const;

private:
  std::uint16_t bs_id_;
  std::int64_t period_ms_;
  bool include_truth_;
  std::int64_t last_tick_ms_ = -1;
  std::map<std::uint16_t, UeContext> ues_;
};

struct RunStats {
  std::uint64_t ticks = 0;
  std::uint64_t frames_published = 0;
  std::uint64_t commands_applied = 0;
  std::uint64_t command_errors = 0;
  std::vector<CommandEvent> events;
};

struct RunHooks {
  // Virtual mode: called after each tick's frames are published, before the
  // commands they triggered are drained. In-process orchestrators pump the
  // xApp here.
  std::function<void(std::int64_t now_ms)> after_tick;
  const std::atomic<bool>* stop = nullptr;
};

// Drives a BaseStation against a bus client until duration_ms. In virtual mode
// `virtual_clock` must be given and is advanced to each tick; real-time mode
// paces ticks on the steady clock and applies commands as they arrive.
class ScenarioRunner {
public:
  ScenarioRunner(const ScenarioConfig& cfg, bus::BusClient& client, VirtualClock* virtual_clock = nullptr);

  RunStats run(const RunHooks& hooks = {});
  const BaseStation& base_station() const noexcept { return bs_; }

private:
  void drain_commands(std::int64_t now_ms, std::chrono::microseconds wait);
  void handle_frame(const bus::Frame& f, std::int64_t now_ms);

  ScenarioConfig cfg_;
  bus::BusClient& client_;
  VirtualClock* vclock_;
  const Clock& clock_;
  BaseStation bs_;
  RunStats stats_;
};

// Publishes a whole scenario on `client` (virtual or real time).
RunStats run_scenario(const ScenarioConfig& cfg, bus::BusClient& client,
                      VirtualClock* virtual_clock = nullptr, const RunHooks& hooks = {});

} // namespace ranids::sim
