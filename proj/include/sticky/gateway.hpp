#pragma once

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <list>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "sticky/cache.hpp"
#include "sticky/health.hpp"
#include "sticky/net.hpp"
#include "sticky/ring.hpp"
#include "sticky/scenario.hpp"

namespace httplib {
class Server;
}

namespace sticky {

using HostPort = std::pair<std::string, std::uint16_t>;

struct LiveAddresses {
  HostPort gateway;
  HostPort admin;
  std::map<NodeId, HostPort> nodes;
};

// Addresses from the scenario's "live" block, overridden by the environment:
// STICKYSERVE_GATEWAY_ADDR, STICKYSERVE_ADMIN_ADDR and
// STICKYSERVE_NODE_<ID>_ADDR (id upper-cased, non-alphanumerics as '_').
// Nodes without an address get gateway port + 10 + their index.
LiveAddresses resolve_live_addresses(const Scenario& scenario);

struct DispatchRecord {
  std::int64_t at_us = 0;  // since gateway start
  NodeId node;
  SessionId session;
  int turn_index = 0;
};

// Session-sticky front door. Routes each "turn" frame over the effective
// ring, relays the node's first_token and done frames, and runs a health
// monitor thread that pings nodes every probe_interval_ms.
class Gateway {
 public:
  // Binds both ports immediately (0 = ephemeral). Throws PortInUseError.
  Gateway(const Scenario& scenario, std::map<NodeId, HostPort> nodes, const HostPort& listen,
          const HostPort& admin);
  ~Gateway();
  Gateway(const Gateway&) = delete;
  Gateway& operator=(const Gateway&) = delete;

  void start();
  void stop();

  std::uint16_t port() const { return listener_.port(); }
  std::uint16_t admin_port() const { return admin_port_; }

  // One synchronous probe round over every node, regardless of schedule.
  void probe_now();

  std::vector<NodeHealth> health() const;
  std::vector<DispatchRecord> dispatches() const;
  // JSON served at GET /snapshot.
  std::string admin_snapshot() const;

 private:
  struct Conn {
    Socket sock;
    std::thread thread;
    std::atomic<bool> done{false};
  };

  void accept_loop();
  void monitor_loop();
  void serve(Conn* conn);
  void handle_turn(Socket& client, const std::string& payload);
  void apply_probe(const NodeId& node, ProbeResult result);
  void rebuild_ring_locked();
  ProbeResult ping(const NodeId& node) const;
  std::int64_t now_us() const;

  Scenario scenario_;
  std::map<NodeId, HostPort> nodes_;
  Listener listener_;
  std::unique_ptr<httplib::Server> admin_;
  std::uint16_t admin_port_ = 0;
  std::thread admin_thread_;
  std::chrono::steady_clock::time_point epoch_;

  mutable std::mutex mu_;
  Ring full_ring_;
  std::shared_ptr<const Ring> ring_;
  std::vector<NodeHealth> cluster_;
  std::map<SessionId, NodeId> last_node_;
  std::vector<DispatchRecord> dispatches_;
  std::vector<double> ttft_ms_;
  std::map<NodeId, CacheCounters> node_counters_;
  std::int64_t requests_ = 0;
  std::size_t rr_counter_ = 0;

  std::mutex conns_mu_;
  std::list<std::unique_ptr<Conn>> conns_;
  std::thread accept_thread_;
  std::thread monitor_thread_;
  std::mutex stop_mu_;
  std::condition_variable stop_cv_;
  std::atomic<bool> stopping_{false};
};

}  // namespace sticky
