#include <doctest.h>

#include <algorithm>
#include <map>
#include <sstream>

#include "sticky/errors.hpp"
#include "sticky/sim.hpp"

using namespace sticky;

namespace {

std::string dir() { return STICKY_SCENARIO_DIR; }

// One node with deterministic stage costs, so every latency is hand-computable.
const std::string kExact = R"({
  "name": "exact",
  "nodes": [{"id": "n0"}],
  "cost": {"ttft_floor": 380, "tpot": 10, "endpoint_asr": 200, "tts": 100, "playout": 50,
           "service_rate_reqs": 1000},
  "health": {"enabled": false},
  "workload": {"builtin": "care_gap"}
})";

std::vector<TurnRequest> parse_trace(const std::string& text) {
  std::istringstream in(text);
  return read_trace(in);
}

std::vector<TurnRecord> records(const EventLog& log) {
  std::vector<TurnRecord> out;
  for (const auto& e : log.events)
    if (e.kind == EventKind::TurnDone) out.push_back(*e.record);
  return out;
}

const TurnRecord& find(const std::vector<TurnRecord>& rs, const char* s, int turn) {
  for (const auto& r : rs)
    if (r.session.value == s && r.turn_index == turn) return r;
  FAIL("missing record");
  return rs.front();
}

Scenario small(const std::string& name, double duration_s) {
  Scenario s = load_scenario(dir() + "/" + name);
  s.duration_s = duration_s;
  return s;
}

}  // namespace

TEST_CASE("five-line trace matches a manual computation") {
  const Scenario sc = parse_scenario(kExact);
  const auto trace = parse_trace(
      "a 0 0 1000 1000 2\n"
      "b 0 0 2000 2000 1\n"
      "a 1 5000000 1100 100 2\n"
      "b 1 6000000 2200 200 1\n"
      "a 2 9000000 1150 50 2\n");
  const SimResult res = replay(trace, sc);
  const auto rs = records(res.log);
  REQUIRE(rs.size() == 5);

  // a#0 starts at 0; b#0 waits one admission slot (1 ms at 1000 req/s).
  CHECK(find(rs, "a", 0).queue_us == 0);
  CHECK(find(rs, "b", 0).queue_us == 1000);
  CHECK(find(rs, "a", 0).prefill_us == 183700);
  CHECK(find(rs, "a", 0).ttft_us == 563700);
  CHECK(find(rs, "b", 0).ttft_us == 748400);
  CHECK(find(rs, "a", 1).ttft_us == 398370);
  CHECK(find(rs, "b", 1).ttft_us == 416740);
  CHECK(find(rs, "a", 2).ttft_us == 389185);
  CHECK(find(rs, "a", 2).total_us == 409185);
  CHECK(find(rs, "a", 1).ttfa_us == 398370 + 350000);
  CHECK(find(rs, "b", 1).hit_tokens == 2000);
  CHECK(find(rs, "b", 1).miss_tokens == 200);
  for (const auto& r : rs) CHECK(r.node == NodeId("n0"));

  const RunReport& rep = res.report;
  CHECK(rep.cold.lookups == 2);
  CHECK(rep.steady.lookups == 3);
  CHECK(rep.cold.chr.value() == 0.0);
  CHECK(rep.cold.avg_recomputed_tokens.value() == doctest::Approx(1500.0));
  CHECK(rep.steady.chr.value() == doctest::Approx(4100.0 / 4450.0));
  CHECK(rep.steady.reuse_factor.value() == doctest::Approx(4100.0 / 350.0));
  CHECK(rep.steady.avg_recomputed_tokens.value() == doctest::Approx(350.0 / 3.0));
  CHECK(rep.overall.chr.value() == doctest::Approx(4100.0 / 7450.0));
  CHECK(rep.latency.at("ttft").p50 == doctest::Approx(416.74));
  CHECK(rep.latency.at("ttfa").p50 == doctest::Approx(766.74));
  CHECK(rep.latency.at("tpot").count == 8);
  CHECK(rep.latency.at("tpot").p99 == doctest::Approx(10.0));
  CHECK(rep.elapsed_s == doctest::Approx(9.409185));
  CHECK(rep.req_throughput == doctest::Approx(5 / 9.409185));
  CHECK(rep.sessions == 2);
  CHECK(rep.failures == 0);
}

TEST_CASE("one session, three turns: cold then new tokens only") {
  const Scenario sc = parse_scenario(kExact);
  const auto trace = parse_trace("s 0 0 2450 2450 4\ns 1 6000000 2578 128 4\ns 2 12000000 2706 128 4\n");
  const auto rs = records(replay(trace, sc).log);
  REQUIRE(rs.size() == 3);
  CHECK(rs[0].cold_start);
  CHECK(rs[0].miss_tokens == 2450);
  CHECK(rs[1].miss_tokens == 128);
  CHECK(rs[2].miss_tokens == 128);
  CHECK(rs[2].hit_tokens == 2578);
  CHECK_FALSE(rs[1].cold_start);
}

TEST_CASE("a turn waits for the previous turn of its session") {
  const Scenario sc = parse_scenario(kExact);
  const auto rs = records(replay(parse_trace("s 0 0 2450 2450 4\ns 1 1 2578 128 4\n"), sc).log);
  REQUIRE(rs.size() == 2);
  CHECK(rs[1].release_us == rs[0].release_us + rs[0].total_us);
}

TEST_CASE("empty workload gives an empty report") {
  Scenario sc = parse_scenario(kExact);
  sc.workload.profiles[0].profile.arrival_rate = 0;
  sc.workload.arrival_rate = 0;
  const SimResult res = run(sc);
  CHECK(res.report.turns == 0);
  CHECK(res.report.req_throughput == 0.0);
  CHECK_FALSE(res.report.overall.chr);
  CHECK(res.report.latency.empty());
}

TEST_CASE("runs are deterministic and seeds only move samples") {
  Scenario sc = small("insurance_benefits.scenario", 120);
  const SimResult a = run(sc);
  const SimResult b = run(sc);
  CHECK(to_structured(a.report) == to_structured(b.report));
  CHECK(a.log.events == b.log.events);

  sc.seed += 1;
  const SimResult c = run(sc);
  CHECK(c.report.latency.at("tpot").p50 != a.report.latency.at("tpot").p50);
  for (const SimResult* r : {&a, &c}) {
    std::int64_t required = 0;
    for (const auto& rec : records(r->log)) {
      CHECK(rec.hit_tokens + rec.miss_tokens == rec.required_context_tokens);
      CHECK(rec.cold_start == (rec.hit_tokens == 0 && rec.required_context_tokens > 0));
      required += rec.required_context_tokens;
    }
    CHECK(r->report.overall.hit_tokens + r->report.overall.miss_tokens == required);
  }
}

TEST_CASE("re-assembling the log is byte identical") {
  const SimResult a = run(small("single_node.scenario", 120));
  CHECK(to_structured(assemble(a.log, a.report.scenario_digest)) == to_structured(a.report));
}

TEST_CASE("replay of the generated trace equals the run") {
  const Scenario sc = small("pcp_scheduling.scenario", 120);
  const auto trace = generate_trace(sc.workload, sc.duration_s, sc.seed);
  std::stringstream ss;
  write_trace(ss, trace);
  const auto back = read_trace(ss);
  CHECK(to_structured(replay(back, sc).report) == to_structured(run(sc).report));
}

TEST_CASE("sticky beats round robin on a long-horizon workload") {
  Scenario sc = small("ablation_roundrobin.scenario", 300);
  const auto [sticky, rr] = run_ablation(sc, RoutingPolicy::StickyConsistentHash, RoutingPolicy::RoundRobin);
  CHECK(sticky.report.overall.chr.value() > rr.report.overall.chr.value());
  CHECK(sticky.report.overall.avg_prefill_ms.value() < rr.report.overall.avg_prefill_ms.value());
  CHECK(sticky.report.reroutes == 0);
  CHECK(rr.report.reroutes > 0);
}

TEST_CASE("single node: routing policy is irrelevant") {
  Scenario sc = small("single_node.scenario", 120);
  const auto [a, b] = run_ablation(sc, RoutingPolicy::StickyConsistentHash, RoutingPolicy::RoundRobin);
  CHECK(flatten(a.report) == flatten(b.report));
}

TEST_CASE("failure drill: removal, no dispatch afterwards, lower tail") {
  Scenario sc = small("failure_drill.scenario", 200);
  const auto [on, off] = run_health_ablation(sc);
  std::optional<std::int64_t> removed_at;
  std::optional<std::int64_t> first_missed;
  for (const auto& e : on.log.events) {
    if (e.node != "n2") continue;
    if (e.kind == EventKind::Probe && e.value == 0 && !first_missed) first_missed = e.time_us;
    if (e.kind == EventKind::Transition && e.detail.ends_with("->Removed")) removed_at = e.time_us;
    if (removed_at && e.kind == EventKind::Dispatch) FAIL("dispatch to n2 after removal");
  }
  REQUIRE(first_missed);
  REQUIRE(removed_at);
  CHECK(*removed_at - *first_missed <= (sc.health.probe_interval_ms + sc.health.probe_timeout_ms) * 1000);
  CHECK(on.report.removed_nodes == std::vector<std::string>{"n2"});
  CHECK(on.report.latency.at("ttfa").p99 < off.report.latency.at("ttfa").p99);
  CHECK(on.report.failures < off.report.failures);
  CHECK(off.report.removed_nodes.empty());
}

TEST_CASE("sessions displaced by a failure restart cold elsewhere") {
  Scenario sc = small("failure_drill.scenario", 200);
  const SimResult res = run(sc);
  int rerouted_cold = 0;
  for (const auto& r : records(res.log)) {
    if (r.status == TurnStatus::ReroutedCold) {
      ++rerouted_cold;
      CHECK(r.cold_start);
      CHECK(r.node != NodeId("n2"));
    }
  }
  CHECK(rerouted_cold > 0);
  CHECK(res.report.cold.lookups > res.report.sessions);
}

TEST_CASE("a recovered node rejoins after enough good probes") {
  Scenario sc = small("failure_drill.scenario", 200);
  sc.faults[0].recover_at_ms = 150000;
  const SimResult res = run(sc);
  std::vector<std::string> transitions;
  for (const auto& e : res.log.events)
    if (e.kind == EventKind::Transition && e.node == "n2") transitions.push_back(e.detail);
  CHECK(transitions == std::vector<std::string>{"Healthy->Removed", "Removed->Healthy"});
  bool dispatched_after = false;
  bool healthy = false;
  for (const auto& e : res.log.events) {
    if (e.kind == EventKind::Transition && e.node == "n2" && e.detail == "Removed->Healthy") healthy = true;
    if (healthy && e.kind == EventKind::Dispatch && e.node == "n2") dispatched_after = true;
  }
  CHECK(dispatched_after);
}

TEST_CASE("losing every node aborts with no capacity") {
  Scenario sc = parse_scenario(kExact);
  sc.health.enabled = true;
  sc.duration_s = 60;
  sc.faults.push_back({NodeId("n0"), 20000, std::nullopt});
  const SimResult res = run(sc);
  CHECK(res.report.no_capacity);
  CHECK(res.report.failures > 0);
  bool saw_abort = false;
  for (const auto& e : res.log.events) saw_abort |= e.kind == EventKind::Abort;
  CHECK(saw_abort);
}

TEST_CASE("small caches evict and stay conserved") {
  Scenario sc = small("discharge_followup.scenario", 300);
  const SimResult ample = run(sc);
  for (auto& n : sc.nodes) n.capacity_tokens = 6000;
  const SimResult res = run(sc);
  CHECK(res.report.evictions > 0);
  REQUIRE(res.report.eviction_rate);
  CHECK(*res.report.eviction_rate > 0.0);
  CHECK(*res.report.eviction_rate <= 1.0);
  CHECK(ample.report.evictions == 0);
  CHECK(res.report.steady.chr.value() < ample.report.steady.chr.value());
  CHECK(res.report.steady.chr.value() < 0.9);
}

TEST_CASE("log is time ordered and every dispatch is accounted for") {
  const SimResult res = run(small("failure_drill.scenario", 200));
  CHECK(std::is_sorted(res.log.events.begin(), res.log.events.end(),
                       [](const Event& a, const Event& b) { return a.time_us < b.time_us; }));
  std::int64_t dispatches = 0, failures = 0, done = 0;
  for (const auto& e : res.log.events) {
    dispatches += e.kind == EventKind::Dispatch;
    failures += e.kind == EventKind::Failure;
    done += e.kind == EventKind::TurnDone && succeeded(e.record->status);
  }
  CHECK(dispatches == failures + done);
}

TEST_CASE("a tampered log fails assembly") {
  SimResult res = run(small("single_node.scenario", 60));
  for (auto& e : res.log.events) {
    if (e.kind == EventKind::TurnDone) {
      e.record->hit_tokens += 1;
      break;
    }
  }
  try {
    assemble(res.log, "x");
    FAIL("expected an AssemblyError");
  } catch (const AssemblyError& e) {
    CHECK(e.law() == "cache_conservation");
  }
}
