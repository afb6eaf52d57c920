#include <doctest.h>

#include <httplib.h>

#include <chrono>
#include <json.hpp>
#include <memory>
#include <thread>

#include "sticky/driver.hpp"
#include "sticky/errors.hpp"
#include "sticky/gateway.hpp"
#include "sticky/node_server.hpp"
#include "sticky/wire.hpp"

using namespace sticky;
using Clock = std::chrono::steady_clock;

namespace {

const std::string kCluster = R"({
  "name": "live-test",
  "seed": 4,
  "nodes": [{"id": "n0"}, {"id": "n1"}, {"id": "n2"}],
  "cost": {"tpot": 5},
  "health": {"enabled": true, "probe_interval_ms": 200, "probe_timeout_ms": 200},
  "workload": {"builtin": "care_gap"}
})";

// Monitor probes once at start, then not again during a test.
std::string quiet_cluster() {
  std::string s = kCluster;
  s.replace(s.find("\"probe_interval_ms\": 200"), 24, "\"probe_interval_ms\": 60000");
  return s;
}

struct Cluster {
  Scenario sc;
  std::map<NodeId, std::unique_ptr<NodeServer>> nodes;
  std::unique_ptr<Gateway> gw;

  explicit Cluster(const std::string& text = kCluster) : sc(parse_scenario(text)) {
    std::map<NodeId, HostPort> addrs;
    for (const auto& n : sc.nodes) {
      auto srv = std::make_unique<NodeServer>(sc, n.id, "127.0.0.1", 0);
      srv->start();
      addrs[n.id] = {"127.0.0.1", srv->port()};
      nodes[n.id] = std::move(srv);
    }
    gw = std::make_unique<Gateway>(sc, addrs, HostPort{"127.0.0.1", 0}, HostPort{"127.0.0.1", 0});
    gw->start();
  }
};

struct Reply {
  DoneWire done;
  double first_ms = 0;
  double total_ms = 0;
};

Reply send_turn(Socket& s, const TurnWire& t) {
  const auto t0 = Clock::now();
  write_frame(s, encode_turn(t));
  Reply r;
  for (;;) {
    auto f = read_frame(s);
    REQUIRE(f);
    const std::string type = message_type(*f);
    const double ms = std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
    if (type == "first_token") r.first_ms = ms;
    if (type == "done") {
      r.done = decode_done(*f);
      r.total_ms = ms;
      return r;
    }
    REQUIRE(type != "error");
  }
}

Socket client(const Cluster& c) { return connect_to("127.0.0.1", c.gw->port(), 1000); }

nlohmann::json snapshot(const Cluster& c) {
  httplib::Client http("127.0.0.1", c.gw->admin_port());
  auto res = http.Get("/snapshot");
  REQUIRE(res);
  REQUIRE(res->status == 200);
  return nlohmann::json::parse(res->body);
}

}  // namespace

TEST_CASE("sticky replies and the cache law") {
  Cluster c;
  Socket s = client(c);
  const Reply r0 = send_turn(s, {SessionId("alpha"), 0, 2450, 2450, 2});
  const Reply r1 = send_turn(s, {SessionId("alpha"), 1, 2578, 128, 2});
  CHECK(r0.done.node == r1.done.node);
  CHECK(r0.done.node == c.gw->dispatches().front().node);
  CHECK(r0.done.cold_start);
  CHECK(r0.done.miss_tokens == 2450);
  CHECK(r1.done.hit_tokens == 2450);
  CHECK(r1.done.miss_tokens == 128);
  CHECK(r0.done.status == TurnStatus::Ok);
  // Modelled prefill plus the 380 ms floor, within loopback jitter.
  CHECK(r0.done.prefill_us == 450065);
  CHECK(std::abs(r0.first_ms - (450.065 + 380.0)) <= 15.0);
  CHECK(std::abs(r1.first_ms - (23.5136 + 380.0)) <= 15.0);
}

TEST_CASE("empty request costs only the floor") {
  Cluster c;
  Socket s = client(c);
  const Reply r = send_turn(s, {SessionId("empty"), 0, 0, 0, 0});
  CHECK_FALSE(r.done.cold_start);
  CHECK(r.done.tpot_us.empty());
  CHECK(std::abs(r.total_ms - 380.0) <= 15.0);
}

TEST_CASE("killing the target node reroutes cold") {
  Cluster c(quiet_cluster());
  Socket s = client(c);
  const Reply r0 = send_turn(s, {SessionId("beta"), 0, 1000, 1000, 1});
  c.nodes.at(r0.done.node)->stop();
  const Reply failed = send_turn(s, {SessionId("beta"), 1, 1100, 100, 1});
  CHECK(failed.done.status == TurnStatus::NodeError);
  const Reply retry = send_turn(s, {SessionId("beta"), 1, 1100, 100, 1});
  CHECK(retry.done.status == TurnStatus::ReroutedCold);
  CHECK(retry.done.node != r0.done.node);
  CHECK(retry.done.cold_start);
  CHECK(retry.done.miss_tokens == 1100);

  const auto snap = snapshot(c);
  bool seen = false;
  for (const auto& m : snap.at("members")) {
    if (m.at("id") == r0.done.node.value) {
      seen = true;
      CHECK(m.at("state") == "Removed");
      CHECK(m.at("routable") == false);
    }
  }
  CHECK(seen);
  int to_dead = 0;
  for (const auto& d : c.gw->dispatches()) to_dead += d.node == r0.done.node && d.turn_index == 1;
  CHECK(to_dead == 1);
}

TEST_CASE("monitor removes a silent node between dispatches") {
  Cluster c;
  c.nodes.at(NodeId("n1"))->stop();
  const auto deadline = Clock::now() + std::chrono::seconds(3);
  bool removed = false;
  while (Clock::now() < deadline && !removed) {
    for (const auto& h : c.gw->health()) removed |= h.node == NodeId("n1") && h.state == HealthState::Removed;
    std::this_thread::sleep_for(std::chrono::milliseconds(20));
  }
  REQUIRE(removed);
  Socket s = client(c);
  for (int i = 0; i < 10; ++i)
    CHECK(send_turn(s, {SessionId("g" + std::to_string(i)), 0, 0, 0, 0}).done.node != NodeId("n1"));
}

TEST_CASE("admin counters") {
  Cluster c;
  auto snap = snapshot(c);
  CHECK(snap.at("requests") == 0);
  CHECK(snap.at("caches").empty());
  Socket s = client(c);
  for (int i = 0; i < 5; ++i) send_turn(s, {SessionId("s" + std::to_string(i)), 0, 100, 100, 0});
  snap = snapshot(c);
  CHECK(snap.at("requests") == 5);
  CHECK(c.gw->dispatches().size() == 5);
  CHECK(snap.at("latency_ms").at("ttft").at("count") == 5);
  std::int64_t lookups = 0;
  for (const auto& [id, m] : snap.at("caches").items()) lookups += m.at("lookups").get<std::int64_t>();
  CHECK(lookups == 5);
}

TEST_CASE("malformed frames get an error and the connection survives") {
  Cluster c;
  Socket s = client(c);
  write_frame(s, "{broken");
  auto f = read_frame(s);
  REQUIRE(f);
  CHECK(message_type(*f) == "error");
  write_frame(s, R"({"type":"launch"})");
  f = read_frame(s);
  REQUIRE(f);
  CHECK(decode_error(*f).first == "bad_request");
  CHECK(send_turn(s, {SessionId("after"), 0, 10, 10, 0}).done.status == TurnStatus::Ok);
}

TEST_CASE("no routable node answers no_capacity") {
  Cluster c;
  for (auto& [id, n] : c.nodes) n->stop();
  c.gw->probe_now();
  Socket s = client(c);
  CHECK(send_turn(s, {SessionId("x"), 0, 10, 10, 0}).done.status == TurnStatus::NoCapacity);
}

TEST_CASE("ports in use are reported") {
  Cluster c;
  std::map<NodeId, HostPort> addrs;
  for (const auto& n : c.sc.nodes) addrs[n.id] = {"127.0.0.1", c.nodes.at(n.id)->port()};
  CHECK_THROWS_AS(NodeServer(c.sc, NodeId("n0"), "127.0.0.1", c.nodes.at(NodeId("n0"))->port()), PortInUseError);
  CHECK_THROWS_AS(Gateway(c.sc, addrs, {"127.0.0.1", c.gw->port()}, {"127.0.0.1", 0}), PortInUseError);
  CHECK_THROWS_AS(Gateway(c.sc, addrs, {"127.0.0.1", 0}, {"127.0.0.1", c.gw->admin_port()}), PortInUseError);
  CHECK_THROWS_AS(NodeServer(c.sc, NodeId("zz"), "127.0.0.1", 0), ConfigError);
}

TEST_CASE("address resolution honours the environment") {
  Scenario sc = parse_scenario(kCluster);
  auto a = resolve_live_addresses(sc);
  CHECK(a.gateway == HostPort{"127.0.0.1", 7400});
  CHECK(a.nodes.at(NodeId("n2")) == HostPort{"127.0.0.1", 7412});
  setenv("STICKYSERVE_NODE_N2_ADDR", "127.0.0.1:9002", 1);
  setenv("STICKYSERVE_GATEWAY_ADDR", "127.0.0.1:9000", 1);
  a = resolve_live_addresses(sc);
  CHECK(a.nodes.at(NodeId("n2")) == HostPort{"127.0.0.1", 9002});
  CHECK(a.gateway == HostPort{"127.0.0.1", 9000});
  CHECK(a.nodes.at(NodeId("n0")) == HostPort{"127.0.0.1", 9010});
  unsetenv("STICKYSERVE_NODE_N2_ADDR");
  unsetenv("STICKYSERVE_GATEWAY_ADDR");
}

TEST_CASE("short drive agrees with the simulator on tokens") {
  Cluster c;
  const auto trace = [] {
    std::vector<TurnRequest> t;
    for (int s = 0; s < 4; ++s) {
      std::int64_t ctx = 0;
      for (int k = 0; k < 3; ++k) {
        const std::int64_t add = k == 0 ? 1500 + 100 * s : 64;
        ctx += add;
        t.push_back({SessionId("d" + std::to_string(s)), k, s * 150000 + k * 100000, ctx, add, 2});
      }
    }
    return t;
  }();
  std::vector<TurnRequest> sorted = trace;
  std::sort(sorted.begin(), sorted.end(), [](const TurnRequest& a, const TurnRequest& b) {
    return std::tie(a.arrival_us, a.session) < std::tie(b.arrival_us, b.session);
  });
  const SimResult live = drive(sorted, c.sc, {"127.0.0.1", c.gw->port()});
  const SimResult sim = replay(sorted, c.sc);
  CHECK(live.report.turns == 12);
  for (auto b : {&RunReport::cold, &RunReport::steady, &RunReport::overall}) {
    CHECK((live.report.*b).hit_tokens == (sim.report.*b).hit_tokens);
    CHECK((live.report.*b).miss_tokens == (sim.report.*b).miss_tokens);
    CHECK((live.report.*b).lookups == (sim.report.*b).lookups);
  }
  CHECK(std::abs(live.report.latency.at("ttft").p50 - sim.report.latency.at("ttft").p50) <= 15.0);
  CHECK_THROWS_AS(drive(sorted, c.sc, {"127.0.0.1", 1}), Error);
}
