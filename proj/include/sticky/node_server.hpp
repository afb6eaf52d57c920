#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <list>
#include <memory>
#include <mutex>
#include <string>
#include <thread>

#include "sticky/cache.hpp"
#include "sticky/net.hpp"
#include "sticky/scenario.hpp"

namespace sticky {

// Stub inference node. Serves "turn" and "ping" frames over TCP with the
// same cache and latency model the simulator uses, sleeping the modelled
// prefill, first-token and decode times in wall-clock time.
class NodeServer {
 public:
  // Binds immediately; port 0 picks an ephemeral port. Throws
  // PortInUseError, ConfigError for an id absent from the scenario.
  NodeServer(const Scenario& scenario, NodeId id, const std::string& host, std::uint16_t port);
  ~NodeServer();
  NodeServer(const NodeServer&) = delete;
  NodeServer& operator=(const NodeServer&) = delete;

  void start();
  // Closes the listener and every open connection. Idempotent.
  void stop();

  const NodeId& id() const { return id_; }
  std::uint16_t port() const { return listener_.port(); }
  CacheCounters counters() const;

 private:
  struct Conn {
    Socket sock;
    std::thread thread;
    std::atomic<bool> done{false};
  };

  void accept_loop();
  void serve(Conn* conn);
  void handle_turn(Socket& sock, const std::string& payload, std::chrono::steady_clock::time_point recv);
  std::int64_t now_us() const;

  NodeId id_;
  NodeSpec spec_;
  std::uint64_t seed_;
  Listener listener_;
  std::chrono::steady_clock::time_point epoch_;
  std::chrono::microseconds admit_gap_;

  mutable std::mutex mu_;
  NodeCache cache_;
  std::chrono::steady_clock::time_point next_admit_;

  std::mutex conns_mu_;
  std::list<std::unique_ptr<Conn>> conns_;
  std::thread accept_thread_;
  std::atomic<bool> stopping_{false};
};

}  // namespace sticky
