#include <doctest.h>

#include <random>

#include "sticky/errors.hpp"
#include "sticky/health.hpp"

using namespace sticky;

namespace {

const ProbeResult kOk{true, 1.0};
const ProbeResult kFail{false, 1000.0};

std::vector<NodeHealth> cluster_of(std::initializer_list<const char*> ids) {
  std::vector<NodeHealth> c;
  for (const char* id : ids) c.push_back(NodeHealth{NodeId(id)});
  return c;
}

}  // namespace

TEST_CASE("healthy node stays healthy on ok probes") {
  HealthConfig cfg;
  NodeHealth h{NodeId("a")};
  h = record_probe_result(h, kOk, 0, cfg);
  CHECK(h.state == HealthState::Healthy);
  CHECK(h.consecutive_failures == 0);
  CHECK(h.last_probe_at_ms == 0);
}

TEST_CASE("fail_threshold 2 removes on the second failure") {
  HealthConfig cfg;
  cfg.fail_threshold = 2;
  NodeHealth h{NodeId("a")};
  h = record_probe_result(h, kFail, 0, cfg);
  CHECK(h.state == HealthState::Healthy);
  CHECK(h.consecutive_failures == 1);
  h = record_probe_result(h, kFail, 5000, cfg);
  CHECK(h.state == HealthState::Removed);
  // A success in between resets the count.
  NodeHealth g{NodeId("b")};
  g = record_probe_result(g, kFail, 0, cfg);
  g = record_probe_result(g, kOk, 1, cfg);
  g = record_probe_result(g, kFail, 2, cfg);
  CHECK(g.state == HealthState::Healthy);
}

TEST_CASE("recovery needs recover_threshold consecutive successes") {
  HealthConfig cfg;
  cfg.recover_threshold = 3;
  NodeHealth h = record_probe_result(NodeHealth{NodeId("a")}, kFail, 0, cfg);
  REQUIRE(h.state == HealthState::Removed);
  h = record_probe_result(h, kOk, 1, cfg);
  h = record_probe_result(h, kOk, 2, cfg);
  CHECK(h.state == HealthState::Removed);
  h = record_probe_result(h, kFail, 3, cfg);
  h = record_probe_result(h, kOk, 4, cfg);
  h = record_probe_result(h, kOk, 5, cfg);
  CHECK(h.state == HealthState::Removed);
  h = record_probe_result(h, kOk, 6, cfg);
  CHECK(h.state == HealthState::Healthy);
  CHECK(administrative_reset(record_probe_result(h, kFail, 7, cfg)).state == HealthState::Healthy);
}

TEST_CASE("slow probes degrade, timeouts fail") {
  HealthConfig cfg;
  NodeHealth h{NodeId("a")};
  h = record_probe_result(h, {true, 300.0}, 0, cfg);
  CHECK(h.state == HealthState::Degraded);
  h = record_probe_result(h, {true, 5.0}, 1, cfg);
  CHECK(h.state == HealthState::Healthy);
  h = record_probe_result(h, {true, 1000.0}, 2, cfg);  // reached the timeout
  CHECK(h.state == HealthState::Removed);
}

TEST_CASE("config validation") {
  HealthConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  cfg.fail_threshold = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = {};
  cfg.probe_interval_ms = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = {};
  cfg.probe_timeout_ms = -1;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("probe_cycle with all ok probes makes no transitions") {
  HealthConfig cfg;
  const auto res = probe_cycle(cluster_of({"c", "a", "b"}), 0, [](const NodeId&) { return kOk; }, cfg);
  CHECK(res.transitions.empty());
  REQUIRE(res.probed.size() == 3);
  CHECK(res.probed[0] == NodeId("a"));
  CHECK(res.cluster[2].node == NodeId("c"));
}

TEST_CASE("probe_cycle respects the interval and caps latency") {
  HealthConfig cfg;
  auto cluster = cluster_of({"a", "b"});
  int calls = 0;
  auto probe = [&](const NodeId&) {
    ++calls;
    return ProbeResult{true, 5000.0};
  };
  auto res = probe_cycle(cluster, 0, probe, cfg);
  CHECK(calls == 2);
  CHECK(res.max_latency_ms == doctest::Approx(1000.0));
  res = probe_cycle(res.cluster, 4999, probe, cfg);
  CHECK(calls == 2);
  res = probe_cycle(res.cluster, 5000, probe, cfg);
  CHECK(calls == 4);
}

TEST_CASE("unreachable node is Removed within interval + timeout") {
  HealthConfig cfg;  // interval 5000, timeout 1000, fail_threshold 1
  auto cluster = cluster_of({"a", "b", "c", "d"});
  std::optional<std::int64_t> removed_at;
  for (std::int64_t t = 0; t <= 20000 && !removed_at; t += cfg.probe_interval_ms) {
    auto res = probe_cycle(cluster, t, [](const NodeId& n) { return n == NodeId("b") ? kFail : kOk; },
                           cfg);
    cluster = res.cluster;
    for (const auto& tr : res.transitions)
      if (tr.to == HealthState::Removed) removed_at = tr.at_ms + static_cast<std::int64_t>(res.max_latency_ms);
  }
  REQUIRE(removed_at);
  CHECK(*removed_at <= 6000);
}

TEST_CASE("effective_ring") {
  const Ring full = Ring::build({{NodeId("a"), 1}, {NodeId("b"), 1}, {NodeId("c"), 1}, {NodeId("d"), 1}});
  auto cluster = cluster_of({"a", "b", "c", "d"});
  std::vector<SessionId> ids;
  for (int i = 0; i < 10000; ++i) ids.emplace_back("s" + std::to_string(i));

  const Ring same = effective_ring(full, cluster);
  for (const auto& id : ids) CHECK(same.route(id) == full.route(id));

  cluster[1].state = HealthState::Removed;
  cluster[2].state = HealthState::Degraded;
  const Ring eff = effective_ring(full, cluster);
  CHECK_FALSE(eff.contains(NodeId("b")));
  CHECK(eff.contains(NodeId("c")));
  const Ring oracle = remove_node(full, NodeId("b"), ids).first;
  for (const auto& id : ids) {
    CHECK(eff.route(id) == oracle.route(id));
    if (full.route(id) != NodeId("b")) CHECK(eff.route(id) == full.route(id));
  }

  for (auto& h : cluster) h.state = HealthState::Removed;
  CHECK_THROWS_AS(effective_ring(full, cluster), NoCapacityError);
  auto stranger = cluster_of({"zz"});
  CHECK_THROWS_AS(effective_ring(full, stranger), ConfigError);
}

TEST_CASE("property: state machine matches a counter model") {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    HealthConfig cfg;
    cfg.fail_threshold = 1 + static_cast<int>(rng() % 3);
    cfg.recover_threshold = 1 + static_cast<int>(rng() % 3);
    NodeHealth h{NodeId("x")};
    bool removed = false;
    int fails = 0, oks = 0;
    for (int step = 0; step < 40; ++step) {
      const bool ok = rng() % 3 != 0;
      h = record_probe_result(h, ok ? kOk : kFail, step, cfg);
      if (ok) {
        fails = 0;
        ++oks;
        if (removed && oks >= cfg.recover_threshold) removed = false;
      } else {
        oks = 0;
        ++fails;
        if (fails >= cfg.fail_threshold) removed = true;
      }
      CHECK((h.state == HealthState::Removed) == removed);
    }
  }
}
