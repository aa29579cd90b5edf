#pragma once

#include "ranids/clock.hpp"

#include <json.hpp>

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace ranids::bus {

inline constexpr std::uint8_t kWireVersion = 1;
inline constexpr std::uint16_t kDefaultPort = 36421;
inline constexpr std::size_t kMaxFrameBytes = 1U << 20;
inline constexpr std::size_t kDefaultQueueCapacity = 1024;

enum class FrameKind : std::uint8_t { Measurement, Command, Event, Subscribe, Ack };

std::string_view to_string(FrameKind k) noexcept;
std::optional<FrameKind> parse_frame_kind(std::string_view s) noexcept;

struct Frame {
  std::uint8_t version = kWireVersion;
  FrameKind kind = FrameKind::Measurement;
  std::string topic;
  std::uint64_t t_sent_us = 0;
  nlohmann::json payload = nlohmann::json::object();
  // Stamped by the broker: frame accepted / frame handed to the subscriber.
  std::optional<std::uint64_t> t_bus_in_us;
  std::optional<std::uint64_t> t_bus_out_us;

  bool operator==(const Frame&) const = default;
};

// `kpm.<bs_id>`, `ctrl.<bs_id>`, `event.<bs_id>` with a decimal u16 id.
bool valid_topic(std::string_view topic) noexcept;
// A concrete topic, or `<prefix>.*` with the wildcard on the last segment.
bool valid_pattern(std::string_view pattern) noexcept;
bool topic_matches(std::string_view pattern, std::string_view topic) noexcept;

std::string topic_for(std::string_view prefix, std::uint16_t bs_id);
std::optional<std::uint16_t> topic_bs_id(std::string_view topic) noexcept;

// Frame body: the UTF-8 JSON object without the length prefix.
std::string encode_body(const Frame& f);
// Wire form: 4-byte big-endian length followed by the body.
std::string encode(const Frame& f);

// Thrown for a well-formed frame whose kind is not recognised; the broker
// answers these with Ack(error) instead of dropping the connection.
class UnknownKindError : public std::runtime_error {
public:
  UnknownKindError(std::string kind, std::string topic)
      : std::runtime_error("unknown frame kind '" + kind + "'"), topic_(std::move(topic)) {}
  const std::string& topic() const noexcept { return topic_; }

private:
  std::string topic_;
};

// Throws Error(Protocol) on malformed input, UnknownKindError on a bad kind.
Frame decode_body(std::string_view body);
// Decodes exactly one length-prefixed frame occupying all of `wire`.
Frame decode(std::string_view wire);

Frame make_ack(std::string topic, bool ok, std::string error = {});

// Fixed-bucket latency histogram: 1 us buckets below 1024 us, then 16
// log-spaced buckets per octave.
class LatencyHistogram {
public:
  LatencyHistogram();
  void record(std::uint64_t us);
  std::uint64_t count() const noexcept { return count_; }
  std::uint64_t min() const noexcept { return count_ ? min_ : 0; }
  std::uint64_t max() const noexcept { return max_; }
  double mean() const noexcept { return count_ ? static_cast<double>(sum_) / count_ : 0.0; }
  // Upper edge of the bucket holding quantile q, clamped to max().
  std::uint64_t quantile(double q) const;

private:
  static std::size_t bucket_of(std::uint64_t us);
  static std::uint64_t bucket_upper(std::size_t b);
  std::vector<std::uint64_t> buckets_;
  std::uint64_t count_ = 0;
  std::uint64_t sum_ = 0;
  std::uint64_t min_ = 0;
  std::uint64_t max_ = 0;
};

struct BrokerStats {
  std::uint64_t frames_in = 0;
  std::uint64_t frames_out = 0;
  std::uint64_t frames_dropped = 0;
  std::uint64_t rejected = 0;
  std::size_t subscriptions = 0;
  LatencyHistogram delta_d_us;
};

class Broker;

// One subscriber's bounded FIFO. A frame matching several of its patterns is
// queued once.
class Subscription {
public:
  Subscription(Broker& broker, std::uint64_t id, std::size_t capacity);

  void add_pattern(const std::string& pattern);
  bool matches(std::string_view topic) const;

  // Pops the oldest frame, stamping t_bus_out_us and recording the broker
  // delay. Returns nullopt on timeout or once closed and drained.
  std::optional<Frame> pop(std::chrono::microseconds timeout);
  std::optional<Frame> try_pop();
  void close();
  bool closed() const;
  std::uint64_t id() const noexcept { return id_; }
  std::uint64_t dropped() const;
  std::size_t depth() const;

private:
  friend class Broker;
  void push(const Frame& f);
  std::optional<Frame> take_locked(std::unique_lock<std::mutex>& lock);

  Broker& broker_;
  std::uint64_t id_;
  std::size_t capacity_;
  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::vector<std::string> patterns_;
  std::deque<Frame> queue_;
  std::uint64_t dropped_ = 0;
  bool closed_ = false;
};

struct BrokerOptions {
  std::size_t queue_capacity = kDefaultQueueCapacity;
};

// Topic router with per-subscriber queues. At-most-once, no persistence;
// publishers never wait on subscribers (overflow drops the oldest frame).
class Broker {
public:
  explicit Broker(const Clock& clock = steady_clock(), BrokerOptions opts = {});

  std::shared_ptr<Subscription> subscribe(const std::string& pattern);
  void unsubscribe(const std::shared_ptr<Subscription>& sub);

  // Validates and routes. Stamps t_bus_in_us unless already set.
  void publish(Frame f);

  BrokerStats stats() const;
  void note_rejected();
  const Clock& clock() const noexcept { return clock_; }

private:
  friend class Subscription;
  void record_forward(std::uint64_t delta_us);
  void record_drop();

  const Clock& clock_;
  BrokerOptions opts_;
  mutable std::mutex mu_;
  std::map<std::uint64_t, std::shared_ptr<Subscription>> subs_;
  std::uint64_t next_id_ = 1;
  mutable std::mutex stats_mu_;
  BrokerStats stats_;
};

// Transport-neutral client interface used by the simulator, the xApp and the
// collector.
class BusClient {
public:
  virtual ~BusClient() = default;
  virtual void publish(const Frame& f) = 0;
  // Returns the subscription handle (one queue per client).
  virtual std::uint64_t subscribe(const std::string& pattern) = 0;
  // nullopt means timeout; a closed connection throws Error(Network).
  virtual std::optional<Frame> poll(std::chrono::microseconds timeout) = 0;
};

class InProcClient final : public BusClient {
public:
  explicit InProcClient(Broker& broker) : broker_(broker) {}
  ~InProcClient() override;

  void publish(const Frame& f) override;
  std::uint64_t subscribe(const std::string& pattern) override;
  std::optional<Frame> poll(std::chrono::microseconds timeout) override;

private:
  Broker& broker_;
  std::shared_ptr<Subscription> sub_;
};

} // namespace ranids::bus
