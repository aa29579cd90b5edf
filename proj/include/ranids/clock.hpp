#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>

namespace ranids {

// Microsecond timestamps for latency accounting.
class Clock {
public:
  virtual ~Clock() = default;
  virtual std::uint64_t now_us() const = 0;
};

// CLOCK_MONOTONIC; comparable across processes on the same host.
class SteadyClock final : public Clock {
public:
  std::uint64_t now_us() const override {
    return static_cast<std::uint64_t>(std::chrono::duration_cast<std::chrono::microseconds>(
                                          std::chrono::steady_clock::now().time_since_epoch())
                                          .count());
  }
};

// Deterministic clock driven by the scenario loop.
class VirtualClock final : public Clock {
public:
  std::uint64_t now_us() const override { return now_.load(std::memory_order_relaxed); }
  void set_us(std::uint64_t t) { now_.store(t, std::memory_order_relaxed); }
  void set_ms(std::int64_t t) { set_us(static_cast<std::uint64_t>(t) * 1000U); }

private:
  std::atomic<std::uint64_t> now_{0};
};

const Clock& steady_clock();

} // namespace ranids
