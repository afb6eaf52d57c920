#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sticky/event_log.hpp"

namespace sticky {

struct LatencySeries {
  std::string label;  // ttfa | ttft | prefill | tpot | total
  std::vector<double> samples;  // ms
};

// Nearest-rank order statistic: the ceil(q*n)-th smallest sample.
// Throws Error on an empty series or q outside (0, 1).
double quantile(const LatencySeries& series, double q);
double quantile_sorted(std::span<const double> sorted, double q);

struct LatencySummary {
  std::int64_t count = 0;
  double p50 = 0, p95 = 0, p99 = 0, mean = 0;
};

LatencySummary summarize(const LatencySeries& series);

// Cache metrics of one bucket (cold lookups, steady lookups, or all).
struct CacheBucket {
  std::int64_t lookups = 0;
  std::int64_t hit_tokens = 0;
  std::int64_t miss_tokens = 0;
  std::optional<double> chr;
  std::optional<double> reuse_factor;
  std::optional<double> avg_recomputed_tokens;
  std::optional<double> avg_prefill_ms;
};

struct RunReport {
  std::string scenario_digest;
  CacheBucket cold, steady, overall;
  std::int64_t evicted_tokens = 0;
  std::int64_t committed_tokens = 0;
  std::optional<double> eviction_rate;
  std::map<std::string, LatencySummary> latency;

  double elapsed_s = 0;
  double req_throughput = 0;
  double in_tok_throughput = 0;
  double out_tok_throughput = 0;

  std::int64_t sessions = 0;
  std::int64_t turns = 0;
  std::int64_t ok_turns = 0;
  std::int64_t failures = 0;
  std::int64_t reroutes = 0;
  std::int64_t retries = 0;
  std::int64_t evictions = 0;
  bool no_capacity = false;
  // Nodes that entered Degraded / Removed at any point (sorted, unique).
  std::vector<std::string> degraded_nodes;
  std::vector<std::string> removed_nodes;
};

// Pure function of the log. Re-checks the conservation, cold-start and
// causality laws; throws AssemblyError naming the first violated law.
RunReport assemble(const EventLog& log, const std::string& scenario_digest);

// Structured form (JSON text, keys sorted, schema "stickyserve-report/1").
std::string to_structured(const RunReport& r);
RunReport from_structured(const std::string& text);  // throws ParseError
// Aligned plain-text tables.
std::string to_text(const RunReport& r);

// Flat metric view: ordered (key, value); value empty when undefined.
std::vector<std::pair<std::string, std::optional<double>>> flatten(const RunReport& r);

struct RatioRow {
  std::string key;
  std::optional<double> a, b;
  // 1 when a == b or both are undefined; empty when only one is missing or b == 0.
  std::optional<double> ratio;
  bool higher_is_better = true;
};

// Row-by-row a/b. Throws Error on a schema mismatch.
std::vector<RatioRow> compare(const RunReport& a, const RunReport& b);
std::string ratio_table_text(const std::vector<RatioRow>& rows);
std::string ratio_table_structured(const std::vector<RatioRow>& rows);

// "<key> ratio|a|b <op> <number>", op in {>=, >, <=, <, ==}.
struct Assertion {
  std::string key;
  std::string operand;  // ratio, a or b
  std::string op;
  double value = 0;
  std::string text;
};

Assertion parse_assertion(const std::string& text);  // throws ParseError
// Returns an empty string on success, otherwise the failure message.
std::string check_assertion(const Assertion& a, const std::vector<RatioRow>& rows);

}  // namespace sticky
