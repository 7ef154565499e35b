#include "neurostream/bus/tcp.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cstring>

namespace neurostream::bus {
namespace {

void close_fd(int& fd) {
  if (fd >= 0) ::close(fd);
  fd = -1;
}

// Returns false on a broken connection.
bool send_all(int fd, const std::uint8_t* data, std::size_t len) {
  while (len > 0) {
    const ssize_t n = ::send(fd, data, len, MSG_NOSIGNAL);
    if (n < 0) {
      if (errno == EINTR) continue;
      return false;
    }
    data += n;
    len -= static_cast<std::size_t>(n);
  }
  return true;
}

std::vector<std::uint8_t> with_length_prefix(const std::vector<std::uint8_t>& payload) {
  const auto size = static_cast<std::uint32_t>(payload.size());
  std::vector<std::uint8_t> framed(4 + payload.size());
  framed[0] = static_cast<std::uint8_t>(size);
  framed[1] = static_cast<std::uint8_t>(size >> 8);
  framed[2] = static_cast<std::uint8_t>(size >> 16);
  framed[3] = static_cast<std::uint8_t>(size >> 24);
  std::memcpy(framed.data() + 4, payload.data(), payload.size());
  return framed;
}

void set_recv_timeout(int fd, std::chrono::milliseconds timeout) {
  timeval tv{};
  tv.tv_sec = static_cast<time_t>(timeout.count() / 1000);
  tv.tv_usec = static_cast<suseconds_t>((timeout.count() % 1000) * 1000);
  ::setsockopt(fd, SOL_SOCKET, SO_RCVTIMEO, &tv, sizeof(tv));
}

}  // namespace

// --- TcpSink ----------------------------------------------------------------

TcpSink::TcpSink(Broker& broker, const std::string& topic, io::Schema schema,
                 std::uint16_t port, std::size_t queue_depth) {
  sub_ = broker.subscribe(topic, schema, queue_depth);

  listen_fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
  if (listen_fd_ < 0) throw TcpError("socket: " + std::string(std::strerror(errno)));
  const int one = 1;
  ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));

  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
  addr.sin_port = htons(port);
  if (::bind(listen_fd_, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) < 0) {
    const std::string why = std::strerror(errno);
    close_fd(listen_fd_);
    throw TcpError("bind to port " + std::to_string(port) + ": " + why);
  }
  if (::listen(listen_fd_, 8) < 0) {
    const std::string why = std::strerror(errno);
    close_fd(listen_fd_);
    throw TcpError("listen: " + why);
  }
  socklen_t len = sizeof(addr);
  ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&addr), &len);
  port_ = ntohs(addr.sin_port);
}

TcpSink::~TcpSink() {
  stop();
  join();
  for (int fd : clients_) ::close(fd);
  close_fd(listen_fd_);
}

void TcpSink::start() {
  if (thread_.joinable()) return;
  thread_ = std::thread(&TcpSink::run, this);
}

void TcpSink::join() {
  if (thread_.joinable()) thread_.join();
}

void TcpSink::accept_pending() {
  pollfd pfd{listen_fd_, POLLIN, 0};
  while (::poll(&pfd, 1, 0) > 0 && (pfd.revents & POLLIN)) {
    const int fd = ::accept(listen_fd_, nullptr, nullptr);
    if (fd < 0) break;
    const int one = 1;
    ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
    clients_.push_back(fd);
    clients_seen_.fetch_add(1, std::memory_order_relaxed);
  }
}

void TcpSink::broadcast(const std::vector<std::uint8_t>& payload) {
  const auto framed = with_length_prefix(payload);
  std::size_t live = 0;
  for (int fd : clients_) {
    if (send_all(fd, framed.data(), framed.size()))
      clients_[live++] = fd;
    else
      ::close(fd);  // drop broken clients, keep serving the rest
  }
  clients_.resize(live);
}

void TcpSink::run() {
  using clock = std::chrono::steady_clock;
  auto last_traffic = clock::now();
  try {
    while (true) {
      accept_pending();
      if (auto m = sub_->pop(std::chrono::milliseconds(50))) {
        broadcast(io::message_encode(**m));
        messages_sent_.fetch_add(1, std::memory_order_relaxed);
        last_traffic = clock::now();
        continue;
      }
      if (stop_.load(std::memory_order_relaxed) || sub_->closed()) break;
      if (clock::now() - last_traffic >= kHeartbeatPeriod) {
        broadcast(io::heartbeat_encode());
        last_traffic = clock::now();
      }
    }
  } catch (const std::exception& e) {
    error_ = e.what();
  }
}

// --- TcpFeed ----------------------------------------------------------------

TcpFeed::TcpFeed(Broker& broker, std::string topic, const std::string& host, std::uint16_t port)
    : broker_(broker), topic_(std::move(topic)) {
  fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
  if (fd_ < 0) throw TcpError("socket: " + std::string(std::strerror(errno)));

  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(port);
  if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1) {
    close_fd(fd_);
    throw TcpError("bad IPv4 address: " + host);
  }
  if (::connect(fd_, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) < 0) {
    const std::string why = std::strerror(errno);
    close_fd(fd_);
    throw TcpError("connect to " + host + ":" + std::to_string(port) + ": " + why);
  }
  set_recv_timeout(fd_, std::chrono::milliseconds(100));
}

TcpFeed::~TcpFeed() {
  stop();
  join();
  close_fd(fd_);
}

void TcpFeed::start() {
  if (thread_.joinable()) return;
  thread_ = std::thread(&TcpFeed::run, this);
}

void TcpFeed::join() {
  if (thread_.joinable()) thread_.join();
}

void TcpFeed::run() {
  // Blocks until len bytes arrive, stop is requested, or the peer goes away.
  // The 100 ms receive timeout turns recv into a tick that re-checks stop_.
  const auto fill = [this](std::uint8_t* data, std::size_t len) {
    std::size_t got = 0;
    while (got < len) {
      if (stop_.load(std::memory_order_relaxed)) return false;
      const ssize_t n = ::recv(fd_, data + got, len - got, 0);
      if (n == 0) {  // orderly shutdown
        disconnected_.store(true);
        return false;
      }
      if (n < 0) {
        if (errno == EINTR || errno == EAGAIN || errno == EWOULDBLOCK) continue;
        disconnected_.store(true);  // reset or similar
        return false;
      }
      got += static_cast<std::size_t>(n);
    }
    return true;
  };

  std::vector<std::uint8_t> payload;
  try {
    while (!stop_.load(std::memory_order_relaxed)) {
      std::uint8_t prefix[4];
      if (!fill(prefix, 4)) break;
      const std::uint32_t size = static_cast<std::uint32_t>(prefix[0]) |
                                 (static_cast<std::uint32_t>(prefix[1]) << 8) |
                                 (static_cast<std::uint32_t>(prefix[2]) << 16) |
                                 (static_cast<std::uint32_t>(prefix[3]) << 24);
      if (size > kMaxTcpPayload)
        throw TcpError("frame length " + std::to_string(size) + " exceeds limit");
      payload.resize(size);
      if (!fill(payload.data(), size)) break;
      if (io::is_heartbeat(payload)) {
        heartbeats_received_.fetch_add(1, std::memory_order_relaxed);
        continue;
      }
      broker_.publish(topic_, io::message_decode(payload));
      messages_received_.fetch_add(1, std::memory_order_relaxed);
    }
  } catch (const std::exception& e) {
    error_ = e.what();
  }
}

}  // namespace neurostream::bus
