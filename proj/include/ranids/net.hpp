#pragma once

#include "ranids/databus.hpp"

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <list>
#include <memory>
#include <mutex>
#include <string>
#include <thread>

namespace ranids::net {

struct Endpoint {
  std::string host = "127.0.0.1";
  std::uint16_t port = bus::kDefaultPort;
};

// "host:port", "host" or ":port". An empty string yields the default, with
// RANIDS_BROKER consulted first.
Endpoint parse_endpoint(const std::string& text);
std::string to_string(const Endpoint& e);

// Owns a connected or listening socket descriptor.
class Socket {
public:
  Socket() = default;
  explicit Socket(int fd) : fd_(fd) {}
  ~Socket();
  Socket(Socket&& o) noexcept : fd_(o.fd_) { o.fd_ = -1; }
  Socket& operator=(Socket&& o) noexcept;
  Socket(const Socket&) = delete;
  Socket& operator=(const Socket&) = delete;

  int fd() const noexcept { return fd_; }
  bool valid() const noexcept { return fd_ >= 0; }
  void shutdown() noexcept;
  void close() noexcept;

private:
  int fd_ = -1;
};

// Blocking frame I/O on a stream socket. read_frame returns nullopt on a clean
// EOF at a frame boundary and throws Error(Protocol|Network) otherwise.
void write_frame(int fd, const bus::Frame& f);
void write_raw(int fd, std::string_view bytes);
std::optional<std::string> read_frame_bytes(int fd);

// TCP front-end for a Broker. Each connection gets a reader thread; a
// connection that subscribes also gets a writer thread draining its queue.
class BrokerServer {
public:
  BrokerServer(bus::Broker& broker, Endpoint listen);
  ~BrokerServer();
  BrokerServer(const BrokerServer&) = delete;
  BrokerServer& operator=(const BrokerServer&) = delete;

  // Actual bound port (useful when listening on port 0).
  std::uint16_t port() const noexcept { return port_; }
  void stop();

private:
  struct Connection;
  void accept_loop();
  void serve(std::shared_ptr<Connection> conn);
  void reap();

  bus::Broker& broker_;
  Socket listener_;
  std::uint16_t port_ = 0;
  std::atomic<bool> stopping_{false};
  std::thread acceptor_;
  std::mutex mu_;
  std::list<std::shared_ptr<Connection>> conns_;
};

// Client side of the wire protocol. A background thread reads frames into a
// local queue; subscribe() waits for the broker's Ack.
class TcpBusClient final : public bus::BusClient {
public:
  explicit TcpBusClient(const Endpoint& ep);
  ~TcpBusClient() override;

  // Retries with exponential backoff; throws Error(Network) after `attempts`.
  static std::unique_ptr<TcpBusClient> connect_with_retry(const Endpoint& ep, int attempts = 8,
                                                          std::chrono::milliseconds backoff =
                                                              std::chrono::milliseconds(50));

  void publish(const bus::Frame& f) override;
  std::uint64_t subscribe(const std::string& pattern) override;
  std::optional<bus::Frame> poll(std::chrono::microseconds timeout) override;
  void close();

  // Ack(error) frames received for published frames.
  std::uint64_t rejected() const noexcept { return rejected_.load(); }

private:
  void read_loop();

  Socket sock_;
  std::mutex write_mu_;
  std::mutex mu_;
  std::condition_variable cv_;
  std::deque<bus::Frame> inbox_;
  std::deque<bus::Frame> acks_;
  bool disconnected_ = false;
  std::string disconnect_reason_;
  std::atomic<std::uint64_t> rejected_{0};
  std::uint64_t handle_ = 0;
  std::thread reader_;
};

} // namespace ranids::net
