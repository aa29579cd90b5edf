#pragma once

#include "ranids/kpm.hpp"

#include <cstdint>
#include <memory>
#include <random>
#include <string>
#include <utility>
#include <vector>

namespace ranids {

using Rng = std::mt19937_64;

// SplitMix64 finalizer; used to derive independent child seeds.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) noexcept;

struct ChannelState {
  double sinr_base_db = 18.0;
  double sinr_walk_db = 0.0;
  double walk_cap_db = 4.0;
  double walk_step_db = 0.25;
  int cqi = 0;

  bool operator==(const ChannelState&) const = default;
};

// Affine SINR->CQI map: clamp(round((sinr_db + 6) / 1.9), 0, 15).
int cqi_from_sinr(double sinr_db) noexcept;

// MCS chosen from CQI and the offered load as a fraction of the nominal
// reference rate (clamped to [0,1]). Lightly loaded links are scheduled with
// a lower MCS, so the same CQI maps to several MCS values.
int mcs_map(int cqi, double load_fraction) noexcept;

// Achievable link rate for an MCS index, bits/second.
double link_capacity_bps(int mcs) noexcept;

ChannelState make_channel(double sinr_base_db, double walk_cap_db, double walk_step_db);

// Bounded random walk: the deviation moves by at most walk_step_db per step and
// reflects at +-walk_cap_db. Re-derives cqi.
ChannelState step_channel(ChannelState state, Rng& rng);

// Calibration knobs for the five class models. All rates are steady-state
// values per 100 ms interval unless the name says otherwise.
struct GeneratorParams {
  // Web browsing: Poisson page arrivals, lognormal page sizes.
  double web_page_rate_hz = 0.5;
  double web_page_median_bytes = 600e3;
  double web_page_sigma = 0.8;
  double web_flow_rate_min_bps = 4e6;
  double web_flow_rate_max_bps = 12e6;
  double web_idle_dl_min_bps = 40e3;
  double web_idle_dl_max_bps = 120e3;
  double web_ul_fraction = 0.08;

  // VoIP: CBR per call.
  double voip_rate_min_bps = 20e3;
  double voip_rate_max_bps = 170e3;
  double voip_pkts_per_s = 50.0;

  // DDoS Ripper: sustained junk-header flood.
  double ripper_pkts_mean = 450.0;
  double ripper_pkt_bytes_mean = 250.0;
  double ripper_pkt_bytes_sd = 30.0;
  double ripper_dl_fraction = 0.02;

  // DoS Hulk: highest-volume request flood.
  double hulk_pkts_mean = 900.0;
  double hulk_pkt_bytes_mean = 420.0;
  double hulk_pkt_bytes_sd = 40.0;
  double hulk_dl_fraction = 0.3;

  // Slowloris: periodic partial-header trickle.
  int slowloris_pkts_min = 2;
  int slowloris_pkts_max = 3;
  double slowloris_jitter_prob = 0.2;
  double slowloris_pkt_bytes_min = 60.0;
  double slowloris_pkt_bytes_max = 90.0;
  double slowloris_ack_bytes = 40.0;

  // Uplink loss: drop probability rises linearly once utilisation of the
  // MCS-derived capacity passes loss_knee, reaching loss_max at 1 + loss_span.
  double loss_knee = 0.7;
  double loss_span = 0.6;
  double loss_max = 0.5;

  // Measurement noise on reported SINRs, dB (standard deviation).
  double sinr_noise_db = 0.5;
  double pucch_offset_db = 1.5;

  // Applies `key = value` overrides, e.g. "web.page_rate_hz". Throws on an
  // unknown key or a negative value.
  void set(const std::string& key, double value);
  // Every settable key with its current value.
  std::vector<std::pair<std::string, double>> entries() const;
  void validate() const;
};

struct TrafficProfile {
  TrafficClass cls = TrafficClass::Web;
  GeneratorParams params;
  std::int64_t transient_ms = 500;
  std::uint64_t seed = 0;
};

// Per-segment traffic source. Holds the class-specific state (web backlog,
// call rate, slowloris connection count) for one execution of one class.
class TrafficGenerator {
public:
  explicit TrafficGenerator(const TrafficProfile& profile);

  // elapsed_ms is the time since the segment started; rates ramp linearly
  // from zero over [0, transient_ms). Identity fields and timestamp are left
  // for the caller to fill.
  KpmSample next_sample(const ChannelState& channel, std::int64_t elapsed_ms,
                        std::int64_t period_ms);

  const TrafficProfile& profile() const noexcept { return profile_; }

private:
  struct Offered {
    double ul_pkts = 0;
    double ul_bytes_per_pkt = 0;
    double dl_bps = 0;
  };
  Offered offered(double period_s);

  TrafficProfile profile_;
  Rng rng_;
  double web_backlog_bytes_ = 0.0;
  double web_flow_rate_bps_ = 0.0;
  double web_idle_dl_bps_ = 0.0;
  double voip_rate_bps_ = 0.0;
  int slowloris_conns_ = 0;
};

struct ScriptEntry {
  TrafficClass cls = TrafficClass::Web;
  std::int64_t duration_ms = 0;

  bool operator==(const ScriptEntry&) const = default;
};
using Script = std::vector<ScriptEntry>;

// Parses "web:5000,voip:3000,...".
Script parse_script(const std::string& text);
std::string format_script(const Script& script);

// Random switching between classes: no class repeats back to back, segment
// durations drawn uniformly from [min_ms, max_ms] in whole periods, the last
// segment truncated so the total equals total_ms.
Script random_script(std::uint64_t seed, std::int64_t total_ms, std::int64_t min_ms,
                     std::int64_t max_ms, std::int64_t period_ms,
                     const std::vector<TrafficClass>& classes = {kAllClasses.begin(),
                                                                 kAllClasses.end()});

struct ExecutionOptions {
  std::int64_t period_ms = 100;
  std::int64_t transient_ms = 500;
  std::int64_t start_ms = 0;
  std::uint16_t bs_id = 1;
  std::uint16_t ue_id = 1;
  double sinr_base_db = 18.0;
  double walk_cap_db = 4.0;
  double walk_step_db = 0.25;
  GeneratorParams params;
};

// One segment of a UE's execution, in absolute timestamps [start_ms, end_ms).
struct Segment {
  std::uint16_t ue_id = 0;
  TrafficClass cls = TrafficClass::Web;
  std::int64_t start_ms = 0;
  std::int64_t end_ms = 0;

  bool operator==(const Segment&) const = default;
};

// Lazily walks a script for one UE, restarting the transient at each segment.
// The channel persists across segments. When loop is set the script repeats.
class ExecutionStream {
public:
  ExecutionStream(Script script, std::uint64_t seed, ExecutionOptions opts, bool loop = false);

  bool done() const noexcept;
  LabeledSample next();

  const ChannelState& channel() const noexcept { return channel_; }
  std::int64_t now_ms() const noexcept { return now_ms_; }
  const ExecutionOptions& options() const noexcept { return opts_; }
  const Script& script() const noexcept { return script_; }

private:
  void start_segment();

  Script script_;
  std::uint64_t seed_;
  ExecutionOptions opts_;
  bool loop_;
  Rng channel_rng_;
  ChannelState channel_;
  std::size_t seg_index_ = 0;
  std::uint64_t seg_counter_ = 0;
  std::int64_t seg_elapsed_ms_ = 0;
  std::int64_t now_ms_ = 0;
  std::unique_ptr<TrafficGenerator> gen_;
};

std::vector<LabeledSample> schedule_execution(const Script& script, std::uint64_t seed,
                                              const ExecutionOptions& opts = {});

// Absolute segment boundaries of a (non-looping) script.
std::vector<Segment> script_segments(const Script& script, std::uint16_t ue_id,
                                     std::int64_t start_ms = 0);

} // namespace ranids
