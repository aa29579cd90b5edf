#include "ranids/databus.hpp"

#include "ranids/error.hpp"
#include "ranids/messages.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>

namespace ranids::bus {

using nlohmann::json;

namespace {

constexpr std::string_view kPrefixes[] = {"kpm", "ctrl", "event"};

bool valid_prefix(std::string_view p) noexcept {
  return std::find(std::begin(kPrefixes), std::end(kPrefixes), p) != std::end(kPrefixes);
}

bool valid_id(std::string_view s) noexcept {
  if (s.empty() || s.size() > 5) return false;
  unsigned v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  return ec == std::errc{} && ptr == s.data() + s.size() && v <= 0xFFFF;
}

[[noreturn]] void protocol_error(const std::string& what) {
  fail(ErrorKind::Protocol, "databus frame: " + what);
}

std::string_view expected_prefix(FrameKind k) noexcept {
  switch (k) {
  case FrameKind::Measurement: return "kpm";
  case FrameKind::Command: return "ctrl";
  case FrameKind::Event: return "event";
  default: return {};
  }
}

} // namespace

std::string_view to_string(FrameKind k) noexcept {
  switch (k) {
  case FrameKind::Measurement: return "measurement";
  case FrameKind::Command: return "command";
  case FrameKind::Event: return "event";
  case FrameKind::Subscribe: return "subscribe";
  case FrameKind::Ack: return "ack";
  }
  return "?";
}

std::optional<FrameKind> parse_frame_kind(std::string_view s) noexcept {
  for (auto k : {FrameKind::Measurement, FrameKind::Command, FrameKind::Event, FrameKind::Subscribe,
                 FrameKind::Ack}) {
    if (to_string(k) == s) return k;
  }
  return std::nullopt;
}

bool valid_topic(std::string_view topic) noexcept {
  const auto dot = topic.find('.');
  if (dot == std::string_view::npos) return false;
  return valid_prefix(topic.substr(0, dot)) && valid_id(topic.substr(dot + 1));
}

bool valid_pattern(std::string_view pattern) noexcept {
  const auto dot = pattern.find('.');
  if (dot == std::string_view::npos) return false;
  const auto last = pattern.substr(dot + 1);
  return valid_prefix(pattern.substr(0, dot)) && (last == "*" || valid_id(last));
}

bool topic_matches(std::string_view pattern, std::string_view topic) noexcept {
  if (pattern.size() >= 2 && pattern.substr(pattern.size() - 2) == ".*") {
    const auto prefix = pattern.substr(0, pattern.size() - 1); // keeps the dot
    return topic.size() > prefix.size() && topic.substr(0, prefix.size()) == prefix;
  }
  return pattern == topic;
}

std::string topic_for(std::string_view prefix, std::uint16_t bs_id) {
  return std::string(prefix) + "." + std::to_string(bs_id);
}

std::optional<std::uint16_t> topic_bs_id(std::string_view topic) noexcept {
  if (!valid_topic(topic)) return std::nullopt;
  const auto id = topic.substr(topic.find('.') + 1);
  unsigned v = 0;
  std::from_chars(id.data(), id.data() + id.size(), v);
  return static_cast<std::uint16_t>(v);
}

std::string encode_body(const Frame& f) {
  json j = {{"version", f.version},
            {"kind", std::string(to_string(f.kind))},
            {"topic", f.topic},
            {"t_sent_us", f.t_sent_us},
            {"payload", f.payload}};
  if (f.t_bus_in_us) j["t_bus_in_us"] = *f.t_bus_in_us;
  if (f.t_bus_out_us) j["t_bus_out_us"] = *f.t_bus_out_us;
  return j.dump();
}

std::string encode(const Frame& f) {
  const std::string body = encode_body(f);
  if (body.size() > kMaxFrameBytes) protocol_error("frame exceeds maximum size");
  const auto n = static_cast<std::uint32_t>(body.size());
  std::string out;
  out.reserve(4 + body.size());
  out.push_back(static_cast<char>((n >> 24) & 0xFF));
  out.push_back(static_cast<char>((n >> 16) & 0xFF));
  out.push_back(static_cast<char>((n >> 8) & 0xFF));
  out.push_back(static_cast<char>(n & 0xFF));
  out += body;
  return out;
}

Frame decode_body(std::string_view body) {
  json j = json::parse(body.begin(), body.end(), nullptr, false);
  if (j.is_discarded()) protocol_error("body is not valid JSON");
  if (!j.is_object()) protocol_error("body is not a JSON object");

  auto field = [&](const char* name) -> const json& {
    auto it = j.find(name);
    if (it == j.end()) protocol_error(std::string("missing field '") + name + "'");
    return *it;
  };

  const json& version = field("version");
  if (!version.is_number_unsigned() || version.get<std::uint64_t>() != kWireVersion) {
    protocol_error("unsupported version " + version.dump());
  }
  const json& topic = field("topic");
  if (!topic.is_string()) protocol_error("topic is not a string");
  const json& kind = field("kind");
  if (!kind.is_string()) protocol_error("kind is not a string");
  const json& sent = field("t_sent_us");
  if (!sent.is_number_unsigned()) protocol_error("t_sent_us is not an unsigned integer");
  const json& payload = field("payload");
  if (!payload.is_object()) protocol_error("payload is not a JSON object");

  Frame f;
  f.version = kWireVersion;
  f.topic = topic.get<std::string>();
  f.t_sent_us = sent.get<std::uint64_t>();
  f.payload = payload;
  for (const char* stamp : {"t_bus_in_us", "t_bus_out_us"}) {
    auto it = j.find(stamp);
    if (it == j.end()) continue;
    if (!it->is_number_unsigned()) protocol_error(std::string(stamp) + " is not an unsigned integer");
    (std::string_view(stamp) == "t_bus_in_us" ? f.t_bus_in_us : f.t_bus_out_us) =
        it->get<std::uint64_t>();
  }
  auto k = parse_frame_kind(kind.get<std::string>());
  if (!k) throw UnknownKindError(kind.get<std::string>(), f.topic);
  f.kind = *k;
  return f;
}

Frame decode(std::string_view wire) {
  if (wire.size() < 4) protocol_error("truncated length prefix");
  const auto* p = reinterpret_cast<const unsigned char*>(wire.data());
  const std::uint32_t n = (std::uint32_t{p[0]} << 24) | (std::uint32_t{p[1]} << 16) |
                          (std::uint32_t{p[2]} << 8) | std::uint32_t{p[3]};
  if (n > kMaxFrameBytes) protocol_error("declared length exceeds maximum");
  if (wire.size() - 4 != n) protocol_error("length prefix does not match body size");
  return decode_body(wire.substr(4));
}

Frame make_ack(std::string topic, bool ok, std::string error) {
  Frame f;
  f.kind = FrameKind::Ack;
  f.topic = std::move(topic);
  f.payload = {{"ok", ok}};
  if (!error.empty()) f.payload["error"] = std::move(error);
  return f;
}

LatencyHistogram::LatencyHistogram() : buckets_(1024 + 54 * 16, 0) {}

std::size_t LatencyHistogram::bucket_of(std::uint64_t us) {
  if (us < 1024) return static_cast<std::size_t>(us);
  const int octave = std::bit_width(us) - 1; // >= 10
  const auto sub = static_cast<std::size_t>((us >> (octave - 4)) & 15U);
  return 1024 + static_cast<std::size_t>(octave - 10) * 16 + sub;
}

std::uint64_t LatencyHistogram::bucket_upper(std::size_t b) {
  if (b < 1024) return b;
  const int octave = 10 + static_cast<int>((b - 1024) / 16);
  const std::uint64_t sub = (b - 1024) % 16;
  const std::uint64_t lower = (16 + sub) << (octave - 4);
  return lower + (std::uint64_t{1} << (octave - 4)) - 1;
}

void LatencyHistogram::record(std::uint64_t us) {
  ++buckets_[bucket_of(us)];
  if (count_ == 0 || us < min_) min_ = us;
  max_ = std::max(max_, us);
  sum_ += us;
  ++count_;
}

std::uint64_t LatencyHistogram::quantile(double q) const {
  if (count_ == 0) return 0;
  q = std::clamp(q, 0.0, 1.0);
  const auto rank = std::max<std::uint64_t>(1, static_cast<std::uint64_t>(std::ceil(q * count_)));
  std::uint64_t seen = 0;
  for (std::size_t b = 0; b < buckets_.size(); ++b) {
    seen += buckets_[b];
    if (seen >= rank) return std::min(bucket_upper(b), max_);
  }
  return max_;
}

Subscription::Subscription(Broker& broker, std::uint64_t id, std::size_t capacity)
    : broker_(broker), id_(id), capacity_(std::max<std::size_t>(1, capacity)) {}

void Subscription::add_pattern(const std::string& pattern) {
  if (!valid_pattern(pattern)) fail(ErrorKind::InvalidArgument, "invalid topic pattern '" + pattern + "'");
  std::lock_guard lock(mu_);
  if (std::find(patterns_.begin(), patterns_.end(), pattern) == patterns_.end()) {
    patterns_.push_back(pattern);
  }
}

bool Subscription::matches(std::string_view topic) const {
  std::lock_guard lock(mu_);
  return std::any_of(patterns_.begin(), patterns_.end(),
                     [&](const std::string& p) { return topic_matches(p, topic); });
}

void Subscription::push(const Frame& f) {
  {
    std::lock_guard lock(mu_);
    if (closed_) return;
    if (queue_.size() >= capacity_) {
      queue_.pop_front();
      ++dropped_;
      broker_.record_drop();
    }
    queue_.push_back(f);
  }
  cv_.notify_one();
}

std::optional<Frame> Subscription::take_locked(std::unique_lock<std::mutex>&) {
  if (queue_.empty()) return std::nullopt;
  Frame f = std::move(queue_.front());
  queue_.pop_front();
  const std::uint64_t out = broker_.clock().now_us();
  f.t_bus_out_us = out;
  const std::uint64_t in = f.t_bus_in_us.value_or(out);
  broker_.record_forward(out >= in ? out - in : 0);
  return f;
}

std::optional<Frame> Subscription::pop(std::chrono::microseconds timeout) {
  std::unique_lock lock(mu_);
  cv_.wait_for(lock, timeout, [&] { return !queue_.empty() || closed_; });
  return take_locked(lock);
}

std::optional<Frame> Subscription::try_pop() {
  std::unique_lock lock(mu_);
  return take_locked(lock);
}

void Subscription::close() {
  {
    std::lock_guard lock(mu_);
    closed_ = true;
  }
  cv_.notify_all();
}

bool Subscription::closed() const {
  std::lock_guard lock(mu_);
  return closed_;
}

std::uint64_t Subscription::dropped() const {
  std::lock_guard lock(mu_);
  return dropped_;
}

std::size_t Subscription::depth() const {
  std::lock_guard lock(mu_);
  return queue_.size();
}

Broker::Broker(const Clock& clock, BrokerOptions opts) : clock_(clock), opts_(opts) {}

std::shared_ptr<Subscription> Broker::subscribe(const std::string& pattern) {
  if (!valid_pattern(pattern)) fail(ErrorKind::InvalidArgument, "invalid topic pattern '" + pattern + "'");
  std::lock_guard lock(mu_);
  auto sub = std::make_shared<Subscription>(*this, next_id_++, opts_.queue_capacity);
  sub->add_pattern(pattern);
  subs_.emplace(sub->id(), sub);
  return sub;
}

void Broker::unsubscribe(const std::shared_ptr<Subscription>& sub) {
  if (!sub) return;
  sub->close();
  std::lock_guard lock(mu_);
  subs_.erase(sub->id());
}

void Broker::publish(Frame f) {
  if (f.version != kWireVersion) fail(ErrorKind::Protocol, "unsupported frame version");
  if (f.kind == FrameKind::Subscribe || f.kind == FrameKind::Ack) {
    fail(ErrorKind::InvalidArgument, "frame kind '" + std::string(to_string(f.kind)) + "' cannot be published");
  }
  if (!valid_topic(f.topic)) fail(ErrorKind::InvalidArgument, "invalid topic '" + f.topic + "'");
  const auto prefix = std::string_view(f.topic).substr(0, f.topic.find('.'));
  if (prefix != expected_prefix(f.kind)) {
    fail(ErrorKind::InvalidArgument, "topic '" + f.topic + "' does not carry " +
                                         std::string(to_string(f.kind)) + " frames");
  }
  if (f.kind == FrameKind::Measurement) (void)kpm_from_json(f.payload);

  if (!f.t_bus_in_us) f.t_bus_in_us = clock_.now_us();
  f.t_bus_out_us.reset();

  std::lock_guard lock(mu_);
  {
    std::lock_guard s(stats_mu_);
    ++stats_.frames_in;
  }
  for (auto& [id, sub] : subs_) {
    if (sub->matches(f.topic)) sub->push(f);
  }
}

BrokerStats Broker::stats() const {
  BrokerStats out;
  {
    std::lock_guard s(stats_mu_);
    out = stats_;
  }
  std::lock_guard lock(mu_);
  out.subscriptions = subs_.size();
  return out;
}

void Broker::note_rejected() {
  std::lock_guard s(stats_mu_);
  ++stats_.rejected;
}

void Broker::record_forward(std::uint64_t delta_us) {
  std::lock_guard s(stats_mu_);
  ++stats_.frames_out;
  stats_.delta_d_us.record(delta_us);
}

void Broker::record_drop() {
  std::lock_guard s(stats_mu_);
  ++stats_.frames_dropped;
}

InProcClient::~InProcClient() {
  if (sub_) broker_.unsubscribe(sub_);
}

void InProcClient::publish(const Frame& f) { broker_.publish(f); }

std::uint64_t InProcClient::subscribe(const std::string& pattern) {
  if (!sub_) {
    sub_ = broker_.subscribe(pattern);
  } else {
    sub_->add_pattern(pattern);
  }
  return sub_->id();
}

std::optional<Frame> InProcClient::poll(std::chrono::microseconds timeout) {
  if (!sub_) fail(ErrorKind::State, "poll before subscribe");
  if (timeout.count() <= 0) return sub_->try_pop();
  return sub_->pop(timeout);
}

} // namespace ranids::bus
