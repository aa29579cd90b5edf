#include "ranids/net.hpp"

#include "ranids/error.hpp"

#include <algorithm>

#include <arpa/inet.h>
#include <cerrno>
#include <cstdlib>
#include <cstring>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <unistd.h>

namespace ranids::net {

namespace {

[[noreturn]] void sys_error(const std::string& what) {
  fail(ErrorKind::Network, what + ": " + std::strerror(errno));
}

void set_nodelay(int fd) {
  int one = 1;
  ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
}

bool read_exact(int fd, char* buf, std::size_t n, bool allow_eof_at_start) {
  std::size_t got = 0;
  while (got < n) {
    const ssize_t r = ::recv(fd, buf + got, n - got, 0);
    if (r == 0) {
      if (got == 0 && allow_eof_at_start) return false;
      fail(ErrorKind::Protocol, "connection closed mid-frame");
    }
    if (r < 0) {
      if (errno == EINTR) continue;
      sys_error("recv");
    }
    got += static_cast<std::size_t>(r);
  }
  return true;
}

sockaddr_in resolve(const Endpoint& ep) {
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(ep.port);
  const std::string host = ep.host.empty() ? "127.0.0.1" : ep.host;
  if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) == 1) return addr;
  addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  if (::getaddrinfo(host.c_str(), nullptr, &hints, &res) != 0 || !res) {
    fail(ErrorKind::Network, "cannot resolve host '" + host + "'");
  }
  addr.sin_addr = reinterpret_cast<sockaddr_in*>(res->ai_addr)->sin_addr;
  ::freeaddrinfo(res);
  return addr;
}

} // namespace

Endpoint parse_endpoint(const std::string& text) {
  std::string t = text;
  if (t.empty()) {
    if (const char* env = std::getenv("RANIDS_BROKER"); env && *env) t = env;
  }
  Endpoint ep;
  if (t.empty()) return ep;
  const auto colon = t.rfind(':');
  if (colon == std::string::npos) {
    ep.host = t;
    return ep;
  }
  if (colon > 0) ep.host = t.substr(0, colon);
  const std::string port = t.substr(colon + 1);
  try {
    std::size_t used = 0;
    const long p = std::stol(port, &used);
    if (used != port.size() || p < 0 || p > 65535) throw std::out_of_range("port");
    ep.port = static_cast<std::uint16_t>(p);
  } catch (const std::exception&) {
    fail(ErrorKind::InvalidArgument, "invalid broker address '" + text + "'");
  }
  return ep;
}

std::string to_string(const Endpoint& e) { return e.host + ":" + std::to_string(e.port); }

Socket::~Socket() { close(); }

Socket& Socket::operator=(Socket&& o) noexcept {
  if (this != &o) {
    close();
    fd_ = o.fd_;
    o.fd_ = -1;
  }
  return *this;
}

void Socket::shutdown() noexcept {
  if (fd_ >= 0) ::shutdown(fd_, SHUT_RDWR);
}

void Socket::close() noexcept {
  if (fd_ >= 0) {
    ::close(fd_);
    fd_ = -1;
  }
}

void write_raw(int fd, std::string_view bytes) {
  std::size_t sent = 0;
  while (sent < bytes.size()) {
    const ssize_t w = ::send(fd, bytes.data() + sent, bytes.size() - sent, MSG_NOSIGNAL);
    if (w < 0) {
      if (errno == EINTR) continue;
      sys_error("send");
    }
    sent += static_cast<std::size_t>(w);
  }
}

void write_frame(int fd, const bus::Frame& f) { write_raw(fd, bus::encode(f)); }

std::optional<std::string> read_frame_bytes(int fd) {
  unsigned char len[4];
  if (!read_exact(fd, reinterpret_cast<char*>(len), 4, true)) return std::nullopt;
  const std::uint32_t n = (std::uint32_t{len[0]} << 24) | (std::uint32_t{len[1]} << 16) |
                          (std::uint32_t{len[2]} << 8) | std::uint32_t{len[3]};
  if (n > bus::kMaxFrameBytes) fail(ErrorKind::Protocol, "frame length " + std::to_string(n) + " exceeds limit");
  std::string body(n, '\0');
  read_exact(fd, body.data(), n, false);
  return body;
}

struct BrokerServer::Connection {
  Socket sock;
  std::mutex write_mu;
  std::shared_ptr<bus::Subscription> sub;
  std::thread reader;
  std::thread writer;
  std::atomic<bool> done{false};

  void send(const bus::Frame& f) {
    std::lock_guard lock(write_mu);
    write_frame(sock.fd(), f);
  }
};

BrokerServer::BrokerServer(bus::Broker& broker, Endpoint listen) : broker_(broker) {
  Socket s(::socket(AF_INET, SOCK_STREAM, 0));
  if (!s.valid()) sys_error("socket");
  int one = 1;
  ::setsockopt(s.fd(), SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
  sockaddr_in addr = resolve(listen);
  if (::bind(s.fd(), reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) < 0) {
    sys_error("bind " + to_string(listen));
  }
  if (::listen(s.fd(), 64) < 0) sys_error("listen");
  socklen_t len = sizeof(addr);
  ::getsockname(s.fd(), reinterpret_cast<sockaddr*>(&addr), &len);
  port_ = ntohs(addr.sin_port);
  listener_ = std::move(s);
  acceptor_ = std::thread([this] { accept_loop(); });
}

BrokerServer::~BrokerServer() { stop(); }

void BrokerServer::stop() {
  if (stopping_.exchange(true)) return;
  listener_.shutdown();
  if (acceptor_.joinable()) acceptor_.join();
  listener_.close();

  std::list<std::shared_ptr<Connection>> conns;
  {
    std::lock_guard lock(mu_);
    conns.swap(conns_);
  }
  for (auto& c : conns) {
    c->sock.shutdown();
    if (c->sub) broker_.unsubscribe(c->sub);
  }
  for (auto& c : conns) {
    if (c->reader.joinable()) c->reader.join();
    if (c->writer.joinable()) c->writer.join();
  }
}

void BrokerServer::accept_loop() {
  while (!stopping_) {
    const int fd = ::accept(listener_.fd(), nullptr, nullptr);
    if (fd < 0) {
      if (errno == EINTR) continue;
      break;
    }
    if (stopping_) {
      ::close(fd);
      break;
    }
    set_nodelay(fd);
    auto conn = std::make_shared<Connection>();
    conn->sock = Socket(fd);
    {
      std::lock_guard lock(mu_);
      reap();
      conns_.push_back(conn);
    }
    conn->reader = std::thread([this, conn] { serve(conn); });
  }
}

void BrokerServer::reap() {
  for (auto it = conns_.begin(); it != conns_.end();) {
    auto& c = *it;
    if (c->done) {
      if (c->reader.joinable()) c->reader.join();
      if (c->writer.joinable()) c->writer.join();
      it = conns_.erase(it);
    } else {
      ++it;
    }
  }
}

void BrokerServer::serve(std::shared_ptr<Connection> conn) {
  try {
    while (!stopping_) {
      auto body = read_frame_bytes(conn->sock.fd());
      if (!body) break;
      bus::Frame f;
      try {
        f = bus::decode_body(*body);
      } catch (const bus::UnknownKindError& e) {
        broker_.note_rejected();
        conn->send(bus::make_ack(e.topic(), false, e.what()));
        continue;
      }
      if (f.kind == bus::FrameKind::Subscribe) {
        try {
          if (!conn->sub) {
            conn->sub = broker_.subscribe(f.topic);
            conn->writer = std::thread([conn] {
              try {
                while (true) {
                  auto out = conn->sub->pop(std::chrono::milliseconds(200));
                  if (!out) {
                    if (conn->sub->closed()) break;
                    continue;
                  }
                  conn->send(*out);
                }
              } catch (const std::exception&) {
              }
              conn->sock.shutdown();
            });
          } else {
            conn->sub->add_pattern(f.topic);
          }
          conn->send(bus::make_ack(f.topic, true));
        } catch (const Error& e) {
          broker_.note_rejected();
          conn->send(bus::make_ack(f.topic, false, e.what()));
        }
        continue;
      }
      if (f.kind == bus::FrameKind::Ack) continue;
      std::string topic = f.topic;
      try {
        broker_.publish(std::move(f));
      } catch (const Error& e) {
        broker_.note_rejected();
        conn->send(bus::make_ack(std::move(topic), false, e.what()));
      }
    }
  } catch (const std::exception&) {
    // protocol violation or socket failure: drop the connection
  }
  if (conn->sub) broker_.unsubscribe(conn->sub);
  conn->sock.shutdown();
  conn->done = true;
}

TcpBusClient::TcpBusClient(const Endpoint& ep) {
  Socket s(::socket(AF_INET, SOCK_STREAM, 0));
  if (!s.valid()) sys_error("socket");
  sockaddr_in addr = resolve(ep);
  if (::connect(s.fd(), reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) < 0) {
    sys_error("connect " + to_string(ep));
  }
  set_nodelay(s.fd());
  sock_ = std::move(s);
  reader_ = std::thread([this] { read_loop(); });
}

TcpBusClient::~TcpBusClient() { close(); }

std::unique_ptr<TcpBusClient> TcpBusClient::connect_with_retry(const Endpoint& ep, int attempts,
                                                               std::chrono::milliseconds backoff) {
  std::string last;
  for (int i = 0; i < std::max(1, attempts); ++i) {
    try {
      return std::make_unique<TcpBusClient>(ep);
    } catch (const Error& e) {
      last = e.what();
    }
    std::this_thread::sleep_for(backoff);
    backoff *= 2;
  }
  fail(ErrorKind::Network, "broker unreachable after " + std::to_string(attempts) + " attempts: " + last);
}

void TcpBusClient::close() {
  sock_.shutdown();
  if (reader_.joinable()) reader_.join();
  sock_.close();
}

void TcpBusClient::read_loop() {
  std::string reason = "connection closed by broker";
  try {
    while (true) {
      auto body = read_frame_bytes(sock_.fd());
      if (!body) break;
      bus::Frame f = bus::decode_body(*body);
      std::lock_guard lock(mu_);
      if (f.kind == bus::FrameKind::Ack) {
        if (!f.payload.value("ok", false)) ++rejected_;
        acks_.push_back(std::move(f));
        if (acks_.size() > 64) acks_.pop_front();
      } else {
        inbox_.push_back(std::move(f));
      }
      cv_.notify_all();
    }
  } catch (const std::exception& e) {
    reason = e.what();
  }
  std::lock_guard lock(mu_);
  disconnected_ = true;
  disconnect_reason_ = reason;
  cv_.notify_all();
}

void TcpBusClient::publish(const bus::Frame& f) {
  std::lock_guard lock(write_mu_);
  if (!sock_.valid()) fail(ErrorKind::Network, "publish on a closed connection");
  write_frame(sock_.fd(), f);
}

std::uint64_t TcpBusClient::subscribe(const std::string& pattern) {
  if (!bus::valid_pattern(pattern)) fail(ErrorKind::InvalidArgument, "invalid topic pattern '" + pattern + "'");
  bus::Frame f;
  f.kind = bus::FrameKind::Subscribe;
  f.topic = pattern;
  publish(f);
  std::unique_lock lock(mu_);
  auto find_ack = [&] {
    return std::find_if(acks_.begin(), acks_.end(),
                        [&](const bus::Frame& a) { return a.topic == pattern; });
  };
  if (!cv_.wait_for(lock, std::chrono::seconds(5),
                    [&] { return find_ack() != acks_.end() || disconnected_; })) {
    fail(ErrorKind::Network, "no subscribe acknowledgement from broker");
  }
  auto it = find_ack();
  if (it == acks_.end()) fail(ErrorKind::Network, "disconnected: " + disconnect_reason_);
  bus::Frame ack = std::move(*it);
  acks_.erase(it);
  if (!ack.payload.value("ok", false)) {
    fail(ErrorKind::InvalidArgument, "subscribe rejected: " + ack.payload.value("error", std::string{}));
  }
  handle_ = 1;
  return handle_;
}

std::optional<bus::Frame> TcpBusClient::poll(std::chrono::microseconds timeout) {
  std::unique_lock lock(mu_);
  cv_.wait_for(lock, timeout, [&] { return !inbox_.empty() || disconnected_; });
  if (!inbox_.empty()) {
    bus::Frame f = std::move(inbox_.front());
    inbox_.pop_front();
    return f;
  }
  if (disconnected_) fail(ErrorKind::Network, "disconnected: " + disconnect_reason_);
  return std::nullopt;
}

} // namespace ranids::net
