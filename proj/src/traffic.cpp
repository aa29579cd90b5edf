#include "ranids/traffic.hpp"

#include "ranids/error.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace ranids {

namespace {

constexpr double kLoadReferenceBps = 1e6;
constexpr double kBandwidthHz = 10e6;
constexpr int kMaxLoadMcsOffset = 6;
constexpr double kMtuBytes = 1400.0;

} // namespace

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) noexcept {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

int cqi_from_sinr(double sinr_db) noexcept {
  const double x = (sinr_db + 6.0) / 1.9;
  if (!(x > 0.0)) return 0;
  if (x >= kMaxCqi) return kMaxCqi;
  return std::clamp(static_cast<int>(std::lround(x)), 0, kMaxCqi);
}

int mcs_map(int cqi, double load_fraction) noexcept {
  const double load = std::isfinite(load_fraction) ? std::clamp(load_fraction, 0.0, 1.0) : 1.0;
  const int base = static_cast<int>(std::lround(std::clamp(cqi, 0, kMaxCqi) * 28.0 / 15.0));
  const int offset = static_cast<int>(std::lround(kMaxLoadMcsOffset * (1.0 - load)));
  return std::clamp(base - offset, 0, kMaxMcs);
}

double link_capacity_bps(int mcs) noexcept {
  const double efficiency = 0.2 + 0.15 * std::clamp(mcs, 0, kMaxMcs);
  return kBandwidthHz * efficiency;
}

ChannelState make_channel(double sinr_base_db, double walk_cap_db, double walk_step_db) {
  if (walk_cap_db < 0.0 || walk_step_db < 0.0) {
    fail(ErrorKind::InvalidArgument, "channel walk cap and step must be >= 0");
  }
  ChannelState ch;
  ch.sinr_base_db = sinr_base_db;
  ch.walk_cap_db = walk_cap_db;
  ch.walk_step_db = walk_step_db;
  ch.cqi = cqi_from_sinr(sinr_base_db);
  return ch;
}

ChannelState step_channel(ChannelState state, Rng& rng) {
  if (state.walk_cap_db > 0.0 && state.walk_step_db > 0.0) {
    std::uniform_real_distribution<double> step(-state.walk_step_db, state.walk_step_db);
    double w = state.sinr_walk_db + step(rng);
    // reflect at the cap
    if (w > state.walk_cap_db) w = 2.0 * state.walk_cap_db - w;
    if (w < -state.walk_cap_db) w = -2.0 * state.walk_cap_db - w;
    state.sinr_walk_db = std::clamp(w, -state.walk_cap_db, state.walk_cap_db);
  } else {
    state.sinr_walk_db = std::clamp(state.sinr_walk_db, -state.walk_cap_db, state.walk_cap_db);
  }
  state.cqi = cqi_from_sinr(state.sinr_base_db + state.sinr_walk_db);
  return state;
}

namespace {

struct Entry {
  const char* key;
  double GeneratorParams::*field;
};
const Entry kEntries[] = {
    {"web.page_rate_hz", &GeneratorParams::web_page_rate_hz},
    {"web.page_median_bytes", &GeneratorParams::web_page_median_bytes},
    {"web.page_sigma", &GeneratorParams::web_page_sigma},
    {"web.flow_rate_min_bps", &GeneratorParams::web_flow_rate_min_bps},
    {"web.flow_rate_max_bps", &GeneratorParams::web_flow_rate_max_bps},
    {"web.idle_dl_min_bps", &GeneratorParams::web_idle_dl_min_bps},
    {"web.idle_dl_max_bps", &GeneratorParams::web_idle_dl_max_bps},
    {"web.ul_fraction", &GeneratorParams::web_ul_fraction},
    {"voip.rate_min_bps", &GeneratorParams::voip_rate_min_bps},
    {"voip.rate_max_bps", &GeneratorParams::voip_rate_max_bps},
    {"voip.pkts_per_s", &GeneratorParams::voip_pkts_per_s},
    {"ddos_ripper.pkts_mean", &GeneratorParams::ripper_pkts_mean},
    {"ddos_ripper.pkt_bytes_mean", &GeneratorParams::ripper_pkt_bytes_mean},
    {"ddos_ripper.pkt_bytes_sd", &GeneratorParams::ripper_pkt_bytes_sd},
    {"ddos_ripper.dl_fraction", &GeneratorParams::ripper_dl_fraction},
    {"dos_hulk.pkts_mean", &GeneratorParams::hulk_pkts_mean},
    {"dos_hulk.pkt_bytes_mean", &GeneratorParams::hulk_pkt_bytes_mean},
    {"dos_hulk.pkt_bytes_sd", &GeneratorParams::hulk_pkt_bytes_sd},
    {"dos_hulk.dl_fraction", &GeneratorParams::hulk_dl_fraction},
    {"slowloris.jitter_prob", &GeneratorParams::slowloris_jitter_prob},
    {"slowloris.pkt_bytes_min", &GeneratorParams::slowloris_pkt_bytes_min},
    {"slowloris.pkt_bytes_max", &GeneratorParams::slowloris_pkt_bytes_max},
    {"slowloris.ack_bytes", &GeneratorParams::slowloris_ack_bytes},
    {"loss.knee", &GeneratorParams::loss_knee},
    {"loss.span", &GeneratorParams::loss_span},
    {"loss.max", &GeneratorParams::loss_max},
    {"channel.sinr_noise_db", &GeneratorParams::sinr_noise_db},
    {"channel.pucch_offset_db", &GeneratorParams::pucch_offset_db},
};

} // namespace

void GeneratorParams::set(const std::string& key, double value) {
  if (!std::isfinite(value) || value < 0.0) {
    fail(ErrorKind::InvalidArgument, "generator parameter '" + key + "' must be finite and >= 0");
  }
  for (const auto& e : kEntries) {
    if (key == e.key) {
      this->*e.field = value;
      return;
    }
  }
  if (key == "slowloris.pkts_min") {
    slowloris_pkts_min = static_cast<int>(value);
  } else if (key == "slowloris.pkts_max") {
    slowloris_pkts_max = static_cast<int>(value);
  } else {
    fail(ErrorKind::InvalidArgument, "unknown generator parameter '" + key + "'");
  }
}

std::vector<std::pair<std::string, double>> GeneratorParams::entries() const {
  std::vector<std::pair<std::string, double>> out;
  for (const auto& e : kEntries) out.emplace_back(e.key, this->*e.field);
  out.emplace_back("slowloris.pkts_min", slowloris_pkts_min);
  out.emplace_back("slowloris.pkts_max", slowloris_pkts_max);
  return out;
}

void GeneratorParams::validate() const {
  auto require = [](bool ok, const char* what) {
    if (!ok) fail(ErrorKind::InvalidArgument, std::string("invalid generator parameters: ") + what);
  };
  require(web_flow_rate_min_bps <= web_flow_rate_max_bps, "web flow rate min > max");
  require(web_idle_dl_min_bps <= web_idle_dl_max_bps, "web idle rate min > max");
  require(voip_rate_min_bps <= voip_rate_max_bps, "voip rate min > max");
  require(voip_pkts_per_s > 0.0, "voip packet rate must be > 0");
  require(slowloris_pkts_min >= 0 && slowloris_pkts_min <= slowloris_pkts_max,
          "slowloris packet range");
  require(slowloris_pkt_bytes_min <= slowloris_pkt_bytes_max, "slowloris size range");
  require(slowloris_jitter_prob <= 1.0, "slowloris jitter probability > 1");
  require(loss_max <= 1.0, "loss.max > 1");
  require(loss_span > 0.0, "loss.span must be > 0");
}

TrafficGenerator::TrafficGenerator(const TrafficProfile& profile)
    : profile_(profile), rng_(profile.seed) {
  if (profile_.transient_ms < 0) fail(ErrorKind::InvalidArgument, "transient_ms must be >= 0");
  const GeneratorParams& p = profile_.params;
  p.validate();
  switch (profile_.cls) {
  case TrafficClass::Web: {
    std::uniform_real_distribution<double> idle(p.web_idle_dl_min_bps, p.web_idle_dl_max_bps);
    web_idle_dl_bps_ = idle(rng_);
    break;
  }
  case TrafficClass::Voip: {
    std::uniform_real_distribution<double> rate(p.voip_rate_min_bps, p.voip_rate_max_bps);
    voip_rate_bps_ = rate(rng_);
    break;
  }
  case TrafficClass::Slowloris: {
    std::uniform_int_distribution<int> conns(p.slowloris_pkts_min, p.slowloris_pkts_max);
    slowloris_conns_ = conns(rng_);
    break;
  }
  case TrafficClass::DdosRipper:
  case TrafficClass::DosHulk:
    break;
  }
}

TrafficGenerator::Offered TrafficGenerator::offered(double period_s) {
  const GeneratorParams& p = profile_.params;
  const double per_interval = period_s / 0.1;
  Offered o;

  auto flood = [&](double pkts_mean, double bytes_mean, double bytes_sd, double dl_fraction) {
    std::poisson_distribution<long> pkts(std::max(pkts_mean * per_interval, 1e-9));
    std::normal_distribution<double> size(bytes_mean, std::max(bytes_sd, 1e-9));
    o.ul_pkts = static_cast<double>(pkts(rng_));
    o.ul_bytes_per_pkt = std::max(40.0, size(rng_));
    o.dl_bps = dl_fraction * o.ul_pkts * o.ul_bytes_per_pkt * 8.0 / period_s;
  };

  switch (profile_.cls) {
  case TrafficClass::Web: {
    std::poisson_distribution<int> pages(std::max(p.web_page_rate_hz * period_s, 1e-12));
    const int n_new = p.web_page_rate_hz > 0.0 ? pages(rng_) : 0;
    std::lognormal_distribution<double> page_size(std::log(std::max(p.web_page_median_bytes, 1.0)),
                                                  std::max(p.web_page_sigma, 1e-9));
    for (int i = 0; i < n_new; ++i) web_backlog_bytes_ += page_size(rng_);

    std::uniform_real_distribution<double> jitter(0.7, 1.3);
    double dl_bytes = web_idle_dl_bps_ * jitter(rng_) * period_s / 8.0;
    if (web_backlog_bytes_ > 0.0) {
      if (web_flow_rate_bps_ <= 0.0) {
        std::uniform_real_distribution<double> rate(p.web_flow_rate_min_bps, p.web_flow_rate_max_bps);
        web_flow_rate_bps_ = rate(rng_);
      }
      const double delivered = std::min(web_backlog_bytes_, web_flow_rate_bps_ * period_s / 8.0);
      web_backlog_bytes_ -= delivered;
      dl_bytes += delivered;
      if (web_backlog_bytes_ <= 0.0) {
        web_backlog_bytes_ = 0.0;
        web_flow_rate_bps_ = 0.0;
      }
    }
    const double dl_pkts = std::ceil(dl_bytes / kMtuBytes);
    o.dl_bps = dl_bytes * 8.0 / period_s;
    o.ul_pkts = std::max(1.0, std::ceil(dl_pkts / 2.0));
    o.ul_bytes_per_pkt = std::max(40.0, dl_bytes * p.web_ul_fraction / o.ul_pkts);
    break;
  }
  case TrafficClass::Voip:
    o.ul_pkts = std::round(p.voip_pkts_per_s * period_s);
    o.ul_bytes_per_pkt = o.ul_pkts > 0 ? voip_rate_bps_ * period_s / 8.0 / o.ul_pkts : 0.0;
    o.dl_bps = voip_rate_bps_;
    break;
  case TrafficClass::DdosRipper:
    flood(p.ripper_pkts_mean, p.ripper_pkt_bytes_mean, p.ripper_pkt_bytes_sd, p.ripper_dl_fraction);
    break;
  case TrafficClass::DosHulk:
    flood(p.hulk_pkts_mean, p.hulk_pkt_bytes_mean, p.hulk_pkt_bytes_sd, p.hulk_dl_fraction);
    break;
  case TrafficClass::Slowloris: {
    std::bernoulli_distribution extra(p.slowloris_jitter_prob);
    std::uniform_real_distribution<double> size(p.slowloris_pkt_bytes_min, p.slowloris_pkt_bytes_max);
    o.ul_pkts = std::round(slowloris_conns_ * per_interval) + (extra(rng_) ? 1.0 : 0.0);
    o.ul_bytes_per_pkt = size(rng_);
    o.dl_bps = o.ul_pkts * p.slowloris_ack_bytes * 8.0 / period_s;
    break;
  }
  }
  return o;
}

KpmSample TrafficGenerator::next_sample(const ChannelState& channel, std::int64_t elapsed_ms,
                                        std::int64_t period_ms) {
  if (period_ms <= 0) fail(ErrorKind::InvalidArgument, "period_ms must be > 0");
  const GeneratorParams& p = profile_.params;
  const double period_s = static_cast<double>(period_ms) / 1000.0;

  Offered o = offered(period_s);

  double scale = 1.0;
  if (profile_.transient_ms > 0 && elapsed_ms < profile_.transient_ms) {
    scale = std::max<double>(0.0, static_cast<double>(elapsed_ms)) /
            static_cast<double>(profile_.transient_ms);
  }
  const auto ul_pkts = static_cast<std::int64_t>(std::llround(o.ul_pkts * scale));
  const double dl_bps = o.dl_bps * scale;

  const double ul_offered_bps = static_cast<double>(ul_pkts) * o.ul_bytes_per_pkt * 8.0 / period_s;
  const int cqi = channel.cqi;
  const double capacity = link_capacity_bps(mcs_map(cqi, 1.0));

  const double utilisation = ul_offered_bps / capacity;
  const double drop_p =
      std::clamp(p.loss_max * (utilisation - p.loss_knee) / p.loss_span, 0.0, p.loss_max);
  std::int64_t nok = 0;
  if (drop_p > 0.0 && ul_pkts > 0) {
    std::binomial_distribution<std::int64_t> drops(ul_pkts, drop_p);
    nok = drops(rng_);
  }
  const std::int64_t ok = ul_pkts - nok;

  std::normal_distribution<double> noise(0.0, std::max(p.sinr_noise_db, 1e-12));
  const double sinr = channel.sinr_base_db + channel.sinr_walk_db;

  KpmSample s;
  s.cqi = cqi;
  s.ul_mcs = mcs_map(cqi, ul_offered_bps / kLoadReferenceBps);
  s.dl_mcs = mcs_map(cqi, dl_bps / kLoadReferenceBps);
  s.pusch_sinr_db = sinr + (p.sinr_noise_db > 0.0 ? noise(rng_) : 0.0);
  s.pucch_sinr_db = sinr + p.pucch_offset_db + (p.sinr_noise_db > 0.0 ? noise(rng_) : 0.0);
  s.dl_brate_bps = std::min(dl_bps, capacity);
  s.ul_brate_bps = static_cast<double>(ok) * o.ul_bytes_per_pkt * 8.0 / period_s;
  s.ul_pkts_ok = ok;
  s.ul_pkts_nok = nok;
  return s;
}

Script parse_script(const std::string& text) {
  Script out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item.erase(0, item.find_first_not_of(" \t"));
    item.erase(item.find_last_not_of(" \t") + 1);
    if (item.empty()) continue;
    const auto colon = item.find(':');
    if (colon == std::string::npos) {
      fail(ErrorKind::Parse, "script entry '" + item + "' is not <class>:<duration_ms>");
    }
    auto cls = parse_traffic_class(item.substr(0, colon));
    if (!cls) fail(ErrorKind::Parse, "unknown traffic class in script entry '" + item + "'");
    std::int64_t duration = 0;
    try {
      std::size_t used = 0;
      duration = std::stoll(item.substr(colon + 1), &used);
      if (used != item.size() - colon - 1) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      fail(ErrorKind::Parse, "bad duration in script entry '" + item + "'");
    }
    if (duration < 0) fail(ErrorKind::Parse, "negative duration in script entry '" + item + "'");
    out.push_back({*cls, duration});
  }
  return out;
}

std::string format_script(const Script& script) {
  std::string out;
  for (const auto& e : script) {
    if (!out.empty()) out += ',';
    out += to_string(e.cls);
    out += ':';
    out += std::to_string(e.duration_ms);
  }
  return out;
}

Script random_script(std::uint64_t seed, std::int64_t total_ms, std::int64_t min_ms,
                     std::int64_t max_ms, std::int64_t period_ms,
                     const std::vector<TrafficClass>& classes) {
  if (period_ms <= 0 || min_ms <= 0 || min_ms > max_ms || total_ms < 0 || classes.empty()) {
    fail(ErrorKind::InvalidArgument, "invalid random script parameters");
  }
  Rng rng(mix_seed(seed, 0x5C219));
  const std::int64_t min_periods = std::max<std::int64_t>(1, min_ms / period_ms);
  const std::int64_t max_periods = std::max(min_periods, max_ms / period_ms);
  std::uniform_int_distribution<std::int64_t> periods(min_periods, max_periods);

  Script out;
  std::int64_t used = 0;
  std::int64_t last = -1;
  const std::int64_t total = (total_ms / period_ms) * period_ms;
  while (used < total) {
    std::int64_t pick = 0;
    if (classes.size() == 1) {
      pick = 0;
    } else {
      std::uniform_int_distribution<std::int64_t> choose(0, static_cast<std::int64_t>(classes.size()) - 1);
      do {
        pick = choose(rng);
      } while (pick == last);
    }
    last = pick;
    const std::int64_t d = std::min(periods(rng) * period_ms, total - used);
    out.push_back({classes[static_cast<std::size_t>(pick)], d});
    used += d;
  }
  return out;
}

ExecutionStream::ExecutionStream(Script script, std::uint64_t seed, ExecutionOptions opts, bool loop)
    : script_(std::move(script)),
      seed_(seed),
      opts_(std::move(opts)),
      loop_(loop),
      channel_rng_(mix_seed(seed, 0xC4A77E1)) {
  if (script_.empty()) fail(ErrorKind::InvalidArgument, "execution script is empty");
  if (opts_.period_ms <= 0) fail(ErrorKind::InvalidArgument, "period_ms must be > 0");
  std::int64_t total = 0;
  for (const auto& e : script_) {
    if (e.duration_ms < 0 || e.duration_ms % opts_.period_ms != 0) {
      fail(ErrorKind::InvalidArgument, "script duration " + std::to_string(e.duration_ms) +
                                           " is not a multiple of the period");
    }
    total += e.duration_ms;
  }
  if (loop_ && total == 0) fail(ErrorKind::InvalidArgument, "looping script has zero length");
  opts_.params.validate();
  channel_ = make_channel(opts_.sinr_base_db, opts_.walk_cap_db, opts_.walk_step_db);
  now_ms_ = opts_.start_ms;
  start_segment();
}

bool ExecutionStream::done() const noexcept { return seg_index_ >= script_.size(); }

void ExecutionStream::start_segment() {
  while (seg_index_ < script_.size() && script_[seg_index_].duration_ms == 0) {
    ++seg_index_;
    if (seg_index_ == script_.size() && loop_) seg_index_ = 0;
  }
  if (done()) {
    gen_.reset();
    return;
  }
  TrafficProfile profile;
  profile.cls = script_[seg_index_].cls;
  profile.params = opts_.params;
  profile.transient_ms = opts_.transient_ms;
  profile.seed = mix_seed(seed_, 1 + seg_counter_++);
  gen_ = std::make_unique<TrafficGenerator>(profile);
  seg_elapsed_ms_ = 0;
}

LabeledSample ExecutionStream::next() {
  if (done()) fail(ErrorKind::State, "execution stream exhausted");
  channel_ = step_channel(channel_, channel_rng_);

  LabeledSample out;
  out.sample = gen_->next_sample(channel_, seg_elapsed_ms_, opts_.period_ms);
  out.sample.timestamp_ms = now_ms_;
  out.sample.bs_id = opts_.bs_id;
  out.sample.ue_id = opts_.ue_id;
  out.label = script_[seg_index_].cls;

  now_ms_ += opts_.period_ms;
  seg_elapsed_ms_ += opts_.period_ms;
  if (seg_elapsed_ms_ >= script_[seg_index_].duration_ms) {
    ++seg_index_;
    if (seg_index_ == script_.size() && loop_) seg_index_ = 0;
    start_segment();
  }
  return out;
}

std::vector<LabeledSample> schedule_execution(const Script& script, std::uint64_t seed,
                                              const ExecutionOptions& opts) {
  ExecutionStream stream(script, seed, opts);
  std::vector<LabeledSample> out;
  while (!stream.done()) out.push_back(stream.next());
  return out;
}

std::vector<Segment> script_segments(const Script& script, std::uint16_t ue_id, std::int64_t start_ms) {
  std::vector<Segment> out;
  std::int64_t t = start_ms;
  for (const auto& e : script) {
    if (e.duration_ms == 0) continue;
    out.push_back({ue_id, e.cls, t, t + e.duration_ms});
    t += e.duration_ms;
  }
  return out;
}

} // namespace ranids
