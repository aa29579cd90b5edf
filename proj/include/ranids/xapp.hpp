#pragma once

#include "ranids/clock.hpp"
#include "ranids/config.hpp"
#include "ranids/databus.hpp"
#include "ranids/messages.hpp"
#include "ranids/ml.hpp"
#include "ranids/traffic.hpp"

#include <array>
#include <atomic>
#include <deque>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

namespace ranids::xapp {

inline constexpr std::uint64_t kBudgetUs = 1'000'000;

// Timestamps of one decision, in the order the frames travel. The command leg
// is only filled in once the base station reports the command as applied.
struct LatencyTrace {
  std::uint64_t t_bs_send_us = 0;
  std::uint64_t t_bus_in_us = 0;
  std::uint64_t t_bus_out_us = 0;
  std::uint64_t t_xapp_recv_us = 0;
  std::uint64_t t_infer_start_us = 0;
  std::uint64_t t_infer_end_us = 0;
  std::uint64_t t_cmd_sent_us = 0;
  std::uint64_t t_cmd_bus_in_us = 0;
  std::uint64_t t_cmd_bus_out_us = 0;
  std::uint64_t t_cmd_applied_us = 0;
  bool has_command = false;   // t_cmd_sent_us is meaningful
  bool command_leg = false;   // the three downlink stamps are meaningful

  // Uplink legs.
  std::int64_t bd_up_us() const noexcept;
  std::int64_t d_up_us() const noexcept;
  std::int64_t dr_up_us() const noexcept;
  // Downlink legs; a decision without a completed command leg reuses the
  // uplink values.
  std::int64_t dr_down_us() const noexcept;
  std::int64_t d_down_us() const noexcept;
  std::int64_t bd_down_us() const noexcept;

  std::int64_t delta_i_us() const noexcept;
  // Mean broker delay of the two directions.
  double delta_d_us() const noexcept;
  std::int64_t t_n_us() const noexcept;
  std::int64_t T_d_us() const noexcept;

  bool monotone() const noexcept;
  bool operator==(const LatencyTrace&) const = default;
};

struct PolicyMap {
  std::array<CommandAction, kNumClasses> action{CommandAction::Forward, CommandAction::Forward,
                                                CommandAction::RrcRelease, CommandAction::RrcRelease,
                                                CommandAction::RrcRelease};
  int window = 5;
  int dwell = 3;

  CommandAction operator[](TrafficClass c) const noexcept { return action[class_index(c)]; }
  void validate() const;
};

// Keys: window, dwell, and one `<class> = <action>` line per class to override.
PolicyMap policy_from_config(const KeyValueConfig& cfg);
PolicyMap load_policy(const std::filesystem::path& path);
std::string policy_to_text(const PolicyMap& p);

// Plurality over the window; ties go to the most recent of the tied classes.
TrafficClass window_vote(const std::deque<TrafficClass>& window);

struct Decision {
  std::int64_t timestamp_ms = 0;
  std::uint16_t bs_id = 0;
  std::uint16_t ue_id = 0;
  std::optional<TrafficClass> truth;
  TrafficClass predicted = TrafficClass::Web;
  TrafficClass smoothed = TrafficClass::Web;
  bool window_full = false;
  std::optional<RicCommand> command;
  LatencyTrace trace;
};

inline constexpr std::string_view kPredictionLogHeader =
    "timestamp_ms,ue_id,true_label,predicted,smoothed,command,T_d_us";

void write_prediction_log(const std::vector<Decision>& log, const std::filesystem::path& path);

struct EngineStats {
  std::uint64_t frames = 0;
  std::uint64_t decisions = 0;
  std::uint64_t commands = 0;
  std::uint64_t malformed = 0;
  std::uint64_t dropped_no_model = 0;
  std::uint64_t events = 0;
  std::uint64_t unmatched_events = 0;
};

struct Outgoing {
  std::uint16_t bs_id = 0;
  RicCommand command;
};

class XappEngine {
public:
  XappEngine(std::optional<ml::Model> model, PolicyMap policy, const Clock& clock);

  void set_model(ml::Model model);
  bool has_model() const;
  // With mitigation off the engine still classifies and logs, but never commands.
  void set_mitigation(bool on) { mitigation_.store(on); }

  // Safe to call concurrently for different UEs; one UE's frames must arrive
  // in order. `recv_us` defaults to the engine clock.
  std::optional<Outgoing> on_measurement(const bus::Frame& f, std::optional<std::uint64_t> recv_us = {});
  // Completes the command leg of the decision that issued the command.
  void on_event(const bus::Frame& f);

  std::vector<Decision> decisions() const;
  std::vector<CommandEvent> events() const;
  EngineStats stats() const;
  const PolicyMap& policy() const noexcept { return policy_; }

private:
  struct UeState {
    std::mutex mu;
    std::deque<TrafficClass> window;
    TrafficCategory last_category = TrafficCategory::Benign;
    int category_streak = 0;
    bool armed = true;
    CommandAction current = CommandAction::Forward;
  };

  UeState& state_for(std::uint32_t key);

  std::shared_ptr<const ml::Model> model_;
  mutable std::mutex model_mu_;
  PolicyMap policy_;
  const Clock& clock_;
  std::atomic<bool> mitigation_{true};

  std::mutex states_mu_;
  std::map<std::uint32_t, std::unique_ptr<UeState>> states_;

  mutable std::mutex log_mu_;
  std::vector<Decision> log_;
  std::map<std::uint64_t, std::size_t> by_command_;
  std::vector<CommandEvent> events_;
  EngineStats stats_;
  std::uint64_t next_command_id_ = 1;
  bool warned_no_model_ = false;
};

// Drives an engine from a bus client subscribed to `kpm.*` and `event.*`.
class XappService {
public:
  XappService(XappEngine& engine, bus::BusClient& client);

  // Handles every frame already queued, waiting at most `first_wait` for the
  // first one. Returns the number of frames handled.
  std::size_t pump(std::chrono::microseconds first_wait = std::chrono::microseconds(0));
  void run(const std::atomic<bool>& stop, std::chrono::milliseconds poll = std::chrono::milliseconds(20));

private:
  void handle(const bus::Frame& f);

  XappEngine& engine_;
  bus::BusClient& client_;
};

struct Quantiles {
  double median = 0.0;
  double p99 = 0.0;
  double max = 0.0;
};

struct LatencyReport {
  std::size_t n = 0;
  Quantiles delta_i_us;
  Quantiles delta_d_us;
  Quantiles t_n_us;
  Quantiles T_d_us;
  double margin_median_us = 0.0;
  double margin_p99_us = 0.0;
  std::size_t over_budget = 0;
  std::size_t identity_failures = 0; // T_d != t_n + 2 delta_d + delta_i
  std::size_t non_monotone = 0;
};

// Linear interpolation between closest ranks; `v` need not be sorted.
double quantile(std::vector<double> v, double q);

// Throws on an empty input.
LatencyReport latency_report(const std::vector<LatencyTrace>& traces);
std::string format_latency_report(const LatencyReport& r);
void write_latency_csv(const std::vector<Decision>& log, const std::filesystem::path& path);

struct SegmentOutcome {
  Segment segment;
  std::size_t samples = 0;
  std::optional<std::int64_t> time_ms; // nullopt: never settled on the right class
};

struct TimeToCorrect {
  std::vector<SegmentOutcome> segments;
  std::size_t covered = 0;    // segments with at least one decision
  std::size_t never = 0;      // covered but never correct to the end
  std::vector<std::pair<std::int64_t, double>> cdf; // (time_ms, fraction of covered)

  double fraction_at(std::int64_t time_ms) const;
};

// Time from segment start to the first decision from which the smoothed label
// stays equal to the segment class until the segment ends.
TimeToCorrect time_to_correct(const std::vector<Decision>& log, const std::vector<Segment>& segments);
void write_cdf_csv(const TimeToCorrect& t, const std::filesystem::path& path);

// Segments recovered from the ground-truth labels in a log.
std::vector<Segment> segments_from_log(const std::vector<Decision>& log, std::int64_t period_ms);

} // namespace ranids::xapp
