#include "sticky/gateway.hpp"

#include <httplib.h>

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <json.hpp>

#include "sticky/errors.hpp"
#include "sticky/report.hpp"
#include "sticky/wire.hpp"

namespace sticky {

using Clock = std::chrono::steady_clock;
using json = nlohmann::json;

namespace {

std::string env_key(const NodeId& id) {
  std::string key = "STICKYSERVE_NODE_";
  for (char c : id.value)
    key += std::isalnum(static_cast<unsigned char>(c)) ? static_cast<char>(std::toupper(c)) : '_';
  return key + "_ADDR";
}

std::string env_or(const std::string& key, const std::string& fallback) {
  const char* v = std::getenv(key.c_str());
  return v && *v ? std::string(v) : fallback;
}

// Failure attributable to the node rather than to the client connection.
struct NodeFailure {
  std::string what;
};

}  // namespace

LiveAddresses resolve_live_addresses(const Scenario& scenario) {
  LiveAddresses a;
  a.gateway = split_address(env_or("STICKYSERVE_GATEWAY_ADDR", scenario.live.gateway));
  a.admin = split_address(env_or("STICKYSERVE_ADMIN_ADDR", scenario.live.admin));
  for (std::size_t i = 0; i < scenario.nodes.size(); ++i) {
    const NodeId& id = scenario.nodes[i].id;
    auto it = scenario.live.nodes.find(id);
    const std::string fallback =
        it != scenario.live.nodes.end()
            ? it->second
            : a.gateway.first + ":" + std::to_string(a.gateway.second + 10 + i);
    a.nodes[id] = split_address(env_or(env_key(id), fallback));
  }
  return a;
}

Gateway::Gateway(const Scenario& scenario, std::map<NodeId, HostPort> nodes, const HostPort& listen,
                 const HostPort& admin)
    : scenario_(scenario),
      nodes_(std::move(nodes)),
      listener_(listen.first, listen.second),
      admin_(std::make_unique<httplib::Server>()),
      epoch_(Clock::now()),
      full_ring_(scenario.build_ring()),
      ring_(std::make_shared<const Ring>(full_ring_)) {
  for (const auto& n : scenario_.nodes) {
    if (!nodes_.count(n.id)) throw ConfigError("gateway: no address for node '" + n.id.value + "'");
    cluster_.push_back(NodeHealth{n.id});
  }
  std::sort(cluster_.begin(), cluster_.end(),
            [](const NodeHealth& a, const NodeHealth& b) { return a.node < b.node; });

  admin_->Get("/snapshot", [this](const httplib::Request&, httplib::Response& res) {
    res.set_content(admin_snapshot(), "application/json");
  });
  admin_->Get("/healthz", [](const httplib::Request&, httplib::Response& res) {
    res.set_content("ok\n", "text/plain");
  });
  // httplib's default adds SO_REUSEPORT, which lets a second server share the port.
  admin_->set_socket_options([](socket_t sock) {
    int yes = 1;
    setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, &yes, sizeof(yes));
  });
  if (admin.second == 0) {
    const int p = admin_->bind_to_any_port(admin.first);
    if (p < 0) throw Error("admin: cannot bind " + admin.first);
    admin_port_ = static_cast<std::uint16_t>(p);
  } else {
    if (!admin_->bind_to_port(admin.first, admin.second))
      throw PortInUseError("address " + admin.first + ":" + std::to_string(admin.second) +
                           " is already in use");
    admin_port_ = admin.second;
  }
}

Gateway::~Gateway() { stop(); }

void Gateway::start() {
  accept_thread_ = std::thread([this] { accept_loop(); });
  admin_thread_ = std::thread([this] { admin_->listen_after_bind(); });
  if (scenario_.health.enabled) monitor_thread_ = std::thread([this] { monitor_loop(); });
}

void Gateway::stop() {
  if (stopping_.exchange(true)) return;
  stop_cv_.notify_all();
  if (monitor_thread_.joinable()) monitor_thread_.join();
  if (accept_thread_.joinable()) accept_thread_.join();
  admin_->stop();
  if (admin_thread_.joinable()) admin_thread_.join();
  listener_.close();
  std::list<std::unique_ptr<Conn>> conns;
  {
    std::lock_guard lock(conns_mu_);
    for (auto& c : conns_) c->sock.shutdown();
    conns.swap(conns_);
  }
  for (auto& c : conns)
    if (c->thread.joinable()) c->thread.join();
}

std::int64_t Gateway::now_us() const {
  return std::chrono::duration_cast<std::chrono::microseconds>(Clock::now() - epoch_).count();
}

void Gateway::accept_loop() {
  while (!stopping_) {
    auto sock = listener_.accept_for(50);
    if (!sock) continue;
    std::lock_guard lock(conns_mu_);
    if (stopping_) break;
    for (auto it = conns_.begin(); it != conns_.end();) {
      if ((*it)->done) {
        (*it)->thread.join();
        it = conns_.erase(it);
      } else {
        ++it;
      }
    }
    auto conn = std::make_unique<Conn>();
    conn->sock = std::move(*sock);
    Conn* raw = conn.get();
    conns_.push_back(std::move(conn));
    raw->thread = std::thread([this, raw] { serve(raw); });
  }
}

void Gateway::monitor_loop() {
  const auto interval = std::chrono::milliseconds(scenario_.health.probe_interval_ms);
  auto next = Clock::now();
  while (!stopping_) {
    probe_now();
    next += interval;
    std::unique_lock lock(stop_mu_);
    stop_cv_.wait_until(lock, next, [this] { return stopping_.load(); });
  }
}

void Gateway::probe_now() {
  for (const auto& [id, addr] : nodes_) apply_probe(id, ping(id));
}

ProbeResult Gateway::ping(const NodeId& node) const {
  const auto& [host, port] = nodes_.at(node);
  const int timeout = static_cast<int>(scenario_.health.probe_timeout_ms);
  const auto t0 = Clock::now();
  try {
    Socket s = connect_to(host, port, timeout);
    s.set_read_timeout_ms(timeout);
    write_frame(s, encode_ping());
    auto reply = read_frame(s);
    if (!reply || message_type(*reply) != "pong") return {false, static_cast<double>(timeout)};
  } catch (const Error&) {
    return {false, static_cast<double>(timeout)};
  }
  const double ms = std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
  return {true, ms};
}

void Gateway::apply_probe(const NodeId& node, ProbeResult result) {
  if (!scenario_.health.enabled) return;
  std::lock_guard lock(mu_);
  for (auto& h : cluster_) {
    if (h.node != node) continue;
    const HealthState before = h.state;
    h = record_probe_result(h, result, now_us() / 1000, scenario_.health);
    if (h.state != before) rebuild_ring_locked();
  }
}

void Gateway::rebuild_ring_locked() {
  try {
    ring_ = std::make_shared<const Ring>(effective_ring(full_ring_, cluster_));
  } catch (const NoCapacityError&) {
    ring_ = std::make_shared<const Ring>();
  }
}

void Gateway::serve(Conn* conn) {
  Socket& sock = conn->sock;
  try {
    while (!stopping_) {
      auto frame = read_frame(sock);
      if (!frame) break;
      try {
        const std::string type = message_type(*frame);
        if (type == "turn") {
          handle_turn(sock, *frame);
        } else if (type == "ping") {
          write_frame(sock, encode_pong(NodeId("gateway")));
        } else {
          write_frame(sock, encode_error("bad_request", "unsupported message type '" + type + "'"));
        }
      } catch (const ProtocolError& e) {
        write_frame(sock, encode_error("bad_request", e.what()));
      }
    }
  } catch (const Error&) {
    // Client went away or the gateway is stopping.
  }
  conn->done = true;
}

void Gateway::handle_turn(Socket& client, const std::string& payload) {
  const TurnWire t = decode_turn(payload);
  std::shared_ptr<const Ring> ring;
  std::optional<NodeId> target;
  {
    std::lock_guard lock(mu_);
    ++requests_;
    ring = ring_;
    if (!ring->empty()) {
      if (scenario_.routing_policy == RoutingPolicy::StickyConsistentHash) {
        target = ring->route(t.session);
      } else {
        target = ring->members()[rr_counter_++ % ring->members().size()].id;
      }
      dispatches_.push_back({now_us(), *target, t.session, t.turn_index});
    }
  }
  DoneWire failed;
  if (!target) {
    failed.status = TurnStatus::NoCapacity;
    write_frame(client, encode_done(failed));
    return;
  }
  failed.node = *target;
  failed.status = TurnStatus::NodeError;

  const auto t0 = Clock::now();
  const auto& [host, port] = nodes_.at(*target);
  std::optional<DoneWire> done;
  try {
    Socket node;
    try {
      node = connect_to(host, port, static_cast<int>(scenario_.health.probe_timeout_ms));
      node.set_read_timeout_ms(static_cast<int>(scenario_.request_timeout_ms));
      write_frame(node, encode_turn(t));
    } catch (const Error& e) {
      throw NodeFailure{e.what()};
    }
    while (!done) {
      std::optional<std::string> frame;
      std::string type;
      try {
        frame = read_frame(node);
        if (!frame) throw Error("node closed the connection");
        type = message_type(*frame);
      } catch (const Error& e) {
        throw NodeFailure{e.what()};
      }
      if (type == "first_token") {
        {
          std::lock_guard lock(mu_);
          ttft_ms_.push_back(std::chrono::duration<double, std::milli>(Clock::now() - t0).count());
        }
        write_frame(client, *frame);
      } else if (type == "done") {
        done = decode_done(*frame);
      } else {
        throw NodeFailure{"unexpected '" + type + "' frame from node"};
      }
    }
  } catch (const NodeFailure&) {
    apply_probe(*target, {false, static_cast<double>(scenario_.health.probe_timeout_ms)});
    write_frame(client, encode_done(failed));
    return;
  }

  {
    std::lock_guard lock(mu_);
    auto it = last_node_.find(t.session);
    if (it != last_node_.end() && it->second != done->node && done->cold_start)
      done->status = TurnStatus::ReroutedCold;
    last_node_.insert_or_assign(t.session, done->node);
    CacheCounters& c = node_counters_[done->node];
    ++c.lookups;
    if (done->cold_start) {
      ++c.cold_lookups;
      c.cold_miss_tokens += done->miss_tokens;
    }
    c.hit_tokens += done->hit_tokens;
    c.miss_tokens += done->miss_tokens;
    c.committed_tokens += done->committed_tokens;
  }
  write_frame(client, encode_done(*done));
}

std::vector<NodeHealth> Gateway::health() const {
  std::lock_guard lock(mu_);
  return cluster_;
}

std::vector<DispatchRecord> Gateway::dispatches() const {
  std::lock_guard lock(mu_);
  return dispatches_;
}

std::string Gateway::admin_snapshot() const {
  std::lock_guard lock(mu_);
  json members = json::array();
  for (const auto& h : cluster_) {
    members.push_back({{"id", h.node.value},
                       {"state", std::string(to_string(h.state))},
                       {"routable", ring_->contains(h.node)},
                       {"consecutive_failures", h.consecutive_failures},
                       {"consecutive_successes", h.consecutive_successes}});
  }
  json caches = json::object();
  for (const auto& [id, c] : node_counters_) {
    const std::int64_t total = c.hit_tokens + c.miss_tokens;
    caches[id.value] = {{"lookups", c.lookups},
                        {"cold_lookups", c.cold_lookups},
                        {"hit_tokens", c.hit_tokens},
                        {"miss_tokens", c.miss_tokens},
                        {"committed_tokens", c.committed_tokens},
                        {"chr", total > 0 ? json(static_cast<double>(c.hit_tokens) / total) : json(nullptr)}};
  }
  json latency = json::object();
  if (!ttft_ms_.empty()) {
    const LatencySummary s = summarize({"ttft", ttft_ms_});
    latency["ttft"] = {{"count", s.count}, {"p50", s.p50}, {"p95", s.p95}, {"p99", s.p99}};
  }
  return json{{"members", members},
              {"caches", caches},
              {"latency_ms", latency},
              {"requests", requests_},
              {"health_checks", scenario_.health.enabled}}
      .dump();
}

}  // namespace sticky
