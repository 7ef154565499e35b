#pragma once

#include <atomic>
#include <cstdint>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "neurostream/bus/broker.hpp"

namespace neurostream::bus {

struct TcpError : Error {
  using Error::Error;
};

// Stream framing: a 4-byte little-endian payload length, then the payload in
// wire format. Idle connections carry a heartbeat message every second so a
// silent peer is distinguishable from a dead one.
inline constexpr std::uint32_t kMaxTcpPayload = 1u << 28;
inline constexpr std::chrono::milliseconds kHeartbeatPeriod{1000};

// Forwards every message published on one topic to all connected clients.
class TcpSink {
 public:
  // port 0 binds an ephemeral port; see port() for the actual one.
  TcpSink(Broker& broker, const std::string& topic, io::Schema schema, std::uint16_t port,
          std::size_t queue_depth = kDefaultQueueDepth);
  ~TcpSink();

  TcpSink(const TcpSink&) = delete;
  TcpSink& operator=(const TcpSink&) = delete;

  void start();
  void stop() { stop_.store(true); }
  void join();

  std::uint16_t port() const { return port_; }
  std::size_t messages_sent() const { return messages_sent_.load(); }
  std::size_t clients_seen() const { return clients_seen_.load(); }
  const std::optional<std::string>& error() const { return error_; }

 private:
  void run();
  void accept_pending();
  void broadcast(const std::vector<std::uint8_t>& payload);

  std::shared_ptr<Subscription> sub_;
  int listen_fd_ = -1;
  std::uint16_t port_ = 0;
  std::vector<int> clients_;
  std::thread thread_;
  std::atomic<bool> stop_{false};
  std::atomic<std::size_t> messages_sent_{0};
  std::atomic<std::size_t> clients_seen_{0};
  std::optional<std::string> error_;
};

// Connects to a TcpSink and republishes everything it receives onto a local
// topic. Heartbeats are consumed silently. A closed connection ends the node.
class TcpFeed {
 public:
  TcpFeed(Broker& broker, std::string topic, const std::string& host, std::uint16_t port);
  ~TcpFeed();

  TcpFeed(const TcpFeed&) = delete;
  TcpFeed& operator=(const TcpFeed&) = delete;

  void start();
  void stop() { stop_.store(true); }
  void join();

  std::size_t messages_received() const { return messages_received_.load(); }
  std::size_t heartbeats_received() const { return heartbeats_received_.load(); }
  bool disconnected() const { return disconnected_.load(); }
  const std::optional<std::string>& error() const { return error_; }

 private:
  void run();

  Broker& broker_;
  std::string topic_;
  int fd_ = -1;
  std::thread thread_;
  std::atomic<bool> stop_{false};
  std::atomic<std::size_t> messages_received_{0};
  std::atomic<std::size_t> heartbeats_received_{0};
  std::atomic<bool> disconnected_{false};
  std::optional<std::string> error_;
};

}  // namespace neurostream::bus
