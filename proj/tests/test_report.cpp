#include <doctest.h>

#include <random>

#include "sticky/errors.hpp"
#include "sticky/report.hpp"
#include "sticky/sim.hpp"

using namespace sticky;

namespace {

TurnRecord rec(const char* session, int turn, std::int64_t required, std::int64_t hit, std::int64_t release) {
  TurnRecord r;
  r.session = SessionId(session);
  r.turn_index = turn;
  r.node = NodeId("n0");
  r.required_context_tokens = required;
  r.hit_tokens = hit;
  r.miss_tokens = required - hit;
  r.cold_start = hit == 0 && required > 0;
  r.committed_tokens = required - hit;
  r.release_us = release;
  r.dispatch_us = release;
  r.prefill_us = 1000;
  r.ttft_us = 400000;
  r.total_us = 500000;
  r.ttfa_us = 800000;
  r.tpot_us = {10000};
  return r;
}

EventLog log_of(std::vector<TurnRecord> rs) {
  EventLog log;
  for (auto& r : rs) {
    Event e;
    e.time_us = r.release_us + r.total_us;
    e.kind = EventKind::TurnDone;
    e.record = std::move(r);
    log.push(std::move(e));
  }
  return log;
}

RunReport sample_report() {
  Scenario sc = load_scenario(std::string(STICKY_SCENARIO_DIR) + "/single_node.scenario");
  sc.duration_s = 60;
  return run(sc).report;
}

}  // namespace

TEST_CASE("nearest-rank quantiles") {
  LatencySeries s{"x", {}};
  for (int i = 100; i >= 1; --i) s.samples.push_back(i);
  CHECK(quantile(s, 0.99) == 99);
  CHECK(quantile(s, 0.5) == 50);
  CHECK(quantile(s, 0.01) == 1);
  CHECK(quantile({"x", {7.5}}, 0.3) == 7.5);
  CHECK(quantile({"x", {7.5}}, 0.999) == 7.5);
  CHECK_THROWS_AS(quantile({"x", {}}, 0.5), Error);
  CHECK_THROWS_AS(quantile(s, 1.0), Error);
  CHECK(summarize({"x", {}}).count == 0);
}

TEST_CASE("property: quantiles are monotone in q") {
  std::mt19937_64 rng(8);
  std::lognormal_distribution<double> d(3.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    LatencySeries s{"x", {}};
    const int n = 1 + static_cast<int>(rng() % 500);
    for (int i = 0; i < n; ++i) s.samples.push_back(d(rng));
    double prev = -1;
    for (double q = 0.01; q < 1.0; q += 0.01) {
      const double v = quantile(s, q);
      CHECK(v >= prev);
      prev = v;
    }
  }
}

TEST_CASE("student tpot samples have the expected p99") {
  const CostModel m = preset("student_300b").first;
  Rng rng(99);
  LatencySeries s{"tpot", {}};
  for (int i = 0; i < 100000; ++i) s.samples.push_back(m.tpot.sample(rng));
  const double p99 = quantile(s, 0.99);
  CHECK(p99 >= 105.9);
  CHECK(p99 <= 129.5);
}

TEST_CASE("cold-only log: steady bucket empty, zero hit rate") {
  const RunReport r = assemble(log_of({rec("a", 0, 2000, 0, 0), rec("b", 0, 3000, 0, 10)}), "d");
  CHECK(r.steady.lookups == 0);
  CHECK_FALSE(r.steady.chr);
  CHECK(r.overall.chr.value() == 0.0);
  CHECK(r.cold.avg_recomputed_tokens.value() == 2500.0);
  CHECK(to_text(r).find("0.0%") != std::string::npos);
}

TEST_CASE("zero-turn log") {
  const RunReport r = assemble(EventLog{}, "d");
  CHECK(r.turns == 0);
  CHECK(r.req_throughput == 0.0);
  CHECK_FALSE(r.overall.chr);
  CHECK_FALSE(r.eviction_rate);
  CHECK_NOTHROW(to_text(r));
  CHECK(from_structured(to_structured(r)).turns == 0);
}

TEST_CASE("laws are enforced") {
  auto law_of = [](EventLog log) {
    try {
      assemble(log, "d");
    } catch (const AssemblyError& e) {
      return e.law();
    }
    return std::string("none");
  };
  TurnRecord bad = rec("a", 0, 100, 0, 0);
  bad.miss_tokens = 99;
  CHECK(law_of(log_of({bad})) == "cache_conservation");
  bad = rec("a", 1, 100, 50, 0);
  bad.cold_start = true;
  CHECK(law_of(log_of({bad})) == "cold_start_law");
  bad = rec("a", 0, 100, 0, 0);
  bad.ttft_us = bad.total_us + 1;
  CHECK(law_of(log_of({bad})) == "causality");
  EventLog unordered = log_of({rec("a", 0, 100, 0, 1000), rec("b", 0, 100, 0, 0)});
  CHECK(law_of(unordered) == "log_order");
  EventLog shape;
  shape.push({.kind = EventKind::TurnDone});
  CHECK(law_of(shape) == "log_shape");
  EventLog extra = log_of({rec("a", 0, 100, 0, 0)});
  extra.events.insert(extra.events.begin(), Event{.kind = EventKind::Dispatch});
  extra.events.insert(extra.events.begin(), Event{.kind = EventKind::Dispatch});
  CHECK(law_of(extra) == "dispatch_matching");
}

TEST_CASE("structured round trip") {
  const RunReport r = sample_report();
  const std::string text = to_structured(r);
  CHECK(text.find("\"schema\": \"stickyserve-report/1\"") != std::string::npos);
  CHECK(to_structured(from_structured(text)) == text);
  CHECK_THROWS_AS(from_structured("{}"), ParseError);
  CHECK_THROWS_AS(from_structured("not json"), ParseError);
}

TEST_CASE("compare against itself is the identity") {
  const RunReport r = sample_report();
  for (const auto& row : compare(r, r)) {
    CAPTURE(row.key);
    REQUIRE(row.ratio);
    CHECK(*row.ratio == 1.0);
  }
  const auto rows = compare(r, r);
  CHECK(check_assertion(parse_assertion("req_throughput ratio >= 1.0"), rows).empty());
  CHECK(check_assertion(parse_assertion("cache.cold.reuse_factor ratio >= 1.0"), rows).empty());
  CHECK_FALSE(check_assertion(parse_assertion("req_throughput ratio >= 2.0"), rows).empty());
}

TEST_CASE("compare ratios and undefined cells") {
  RunReport a, b;
  a.req_throughput = 14.31;
  b.req_throughput = 10.96;
  a.overall.chr = 0.5;
  a.elapsed_s = 2.0;
  const auto rows = compare(a, b);
  auto row = [&](const std::string& key) {
    for (const auto& r : rows)
      if (r.key == key) return r;
    FAIL("missing row " << key);
    return rows.front();
  };
  CHECK(*row("req_throughput").ratio == doctest::Approx(1.3057).epsilon(1e-4));
  CHECK_FALSE(row("cache.overall.chr").ratio);  // one side missing
  CHECK_FALSE(row("elapsed_s").ratio);  // 2 / 0
  CHECK(row("latency.ttfa.p99").higher_is_better == false);
  CHECK(row("req_throughput").higher_is_better);
  CHECK(check_assertion(parse_assertion("req_throughput ratio >= 1.25"), rows).empty());
  CHECK(check_assertion(parse_assertion("req_throughput a == 14.31"), rows).empty());
  CHECK(check_assertion(parse_assertion("req_throughput  b < 11"), rows).empty());
  CHECK(check_assertion(parse_assertion("cache.overall.chr ratio > 0"), rows).find("undefined") != std::string::npos);
  CHECK(check_assertion(parse_assertion("no.such ratio > 0"), rows).find("unknown") != std::string::npos);
  CHECK_THROWS_AS(parse_assertion("req_throughput ratio >="), ParseError);
  CHECK_THROWS_AS(parse_assertion("req_throughput median >= 1"), ParseError);
  CHECK_THROWS_AS(parse_assertion("req_throughput ratio ~ 1"), ParseError);
  CHECK_THROWS_AS(parse_assertion("req_throughput ratio >= x"), ParseError);
  CHECK(ratio_table_text(rows).find("req_throughput") != std::string::npos);
  CHECK(ratio_table_structured(rows).find("stickyserve-compare/1") != std::string::npos);
}
