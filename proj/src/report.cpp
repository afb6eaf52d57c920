#include "sticky/report.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <numeric>
#include <set>
#include <sstream>

#include "json.hpp"
#include "sticky/errors.hpp"

namespace sticky {

using nlohmann::json;

namespace {
const char* const kLabels[] = {"ttfa", "ttft", "prefill", "tpot", "total"};
constexpr const char* kSchema = "stickyserve-report/1";
}  // namespace

double quantile_sorted(std::span<const double> sorted, double q) {
  if (sorted.empty()) throw Error("quantile: empty series");
  if (!(q > 0.0 && q < 1.0)) throw Error("quantile: q must be in (0, 1)");
  const double n = static_cast<double>(sorted.size());
  // Guard against q*n landing a hair above an integer (0.99 * 100).
  auto rank = static_cast<std::size_t>(std::ceil(q * n - 1e-9));
  rank = std::clamp<std::size_t>(rank, 1, sorted.size());
  return sorted[rank - 1];
}

double quantile(const LatencySeries& series, double q) {
  std::vector<double> sorted = series.samples;
  std::sort(sorted.begin(), sorted.end());
  return quantile_sorted(sorted, q);
}

LatencySummary summarize(const LatencySeries& series) {
  LatencySummary s;
  s.count = static_cast<std::int64_t>(series.samples.size());
  if (series.samples.empty()) return s;
  std::vector<double> sorted = series.samples;
  std::sort(sorted.begin(), sorted.end());
  s.p50 = quantile_sorted(sorted, 0.50);
  s.p95 = quantile_sorted(sorted, 0.95);
  s.p99 = quantile_sorted(sorted, 0.99);
  s.mean = std::accumulate(sorted.begin(), sorted.end(), 0.0) / static_cast<double>(sorted.size());
  return s;
}

// ---------------------------------------------------------------------------
// assemble

namespace {

struct BucketAcc {
  std::int64_t lookups = 0, hits = 0, misses = 0, prefill_us = 0;

  void add(const TurnRecord& r) {
    ++lookups;
    hits += r.hit_tokens;
    misses += r.miss_tokens;
    prefill_us += r.prefill_us;
  }

  CacheBucket finish() const {
    CacheBucket b;
    b.lookups = lookups;
    b.hit_tokens = hits;
    b.miss_tokens = misses;
    if (lookups == 0) return b;
    const std::int64_t total = hits + misses;
    b.chr = total == 0 ? 0.0 : static_cast<double>(hits) / static_cast<double>(total);
    if (misses > 0) b.reuse_factor = static_cast<double>(hits) / static_cast<double>(misses);
    b.avg_recomputed_tokens = static_cast<double>(misses) / static_cast<double>(lookups);
    b.avg_prefill_ms = static_cast<double>(prefill_us) / 1000.0 / static_cast<double>(lookups);
    return b;
  }
};

std::string turn_label(const TurnRecord& r) {
  return "'" + r.session.value + "' turn " + std::to_string(r.turn_index);
}

void check_record(const TurnRecord& r) {
  if (!succeeded(r.status)) {
    if (r.total_us < 0) throw AssemblyError("causality", turn_label(r) + " has negative duration");
    return;
  }
  if (r.hit_tokens < 0 || r.miss_tokens < 0 ||
      r.hit_tokens + r.miss_tokens != r.required_context_tokens)
    throw AssemblyError("cache_conservation", turn_label(r) + ": hit + miss != required");
  if (r.cold_start != (r.hit_tokens == 0 && r.required_context_tokens > 0))
    throw AssemblyError("cold_start_law", turn_label(r) + ": cold_start flag disagrees with hits");
  const std::int64_t dispatch = r.dispatch_us;
  const std::int64_t prefill_done = dispatch + r.queue_us + r.prefill_us;
  const std::int64_t first_token = r.release_us + r.ttft_us;
  const std::int64_t done = r.release_us + r.total_us;
  if (r.queue_us < 0 || r.prefill_us < 0 || r.decode_us < 0 || dispatch < r.release_us ||
      prefill_done > first_token || first_token > done)
    throw AssemblyError("causality", turn_label(r) +
                                         ": expected dispatch <= prefill_done <= first_token <= turn_done");
}

}  // namespace

RunReport assemble(const EventLog& log, const std::string& digest) {
  RunReport rep;
  rep.scenario_digest = digest;

  BucketAcc cold, steady, overall;
  LatencySeries series[5];
  std::set<SessionId> sessions;
  std::set<std::string> degraded, removed;
  std::int64_t dispatches = 0, failures_events = 0, ok_records = 0;
  std::int64_t in_tokens = 0, out_tokens = 0;
  std::optional<std::int64_t> first_release, last_done;
  std::int64_t prev_time = std::numeric_limits<std::int64_t>::min();

  for (const auto& e : log.events) {
    if (e.time_us < prev_time)
      throw AssemblyError("log_order", "event time decreases at t=" + std::to_string(e.time_us));
    prev_time = e.time_us;
    switch (e.kind) {
      case EventKind::Dispatch: ++dispatches; break;
      case EventKind::Failure: ++failures_events; break;
      case EventKind::Eviction:
        ++rep.evictions;
        rep.evicted_tokens += e.value;
        break;
      case EventKind::Abort: rep.no_capacity = true; break;
      case EventKind::Transition:
        if (e.detail.ends_with("->Degraded")) degraded.insert(e.node);
        if (e.detail.ends_with("->Removed")) removed.insert(e.node);
        break;
      case EventKind::TurnDone: {
        if (!e.record) throw AssemblyError("log_shape", "turn_done event without a record");
        const TurnRecord& r = *e.record;
        check_record(r);
        sessions.insert(r.session);
        ++rep.turns;
        rep.retries += std::max(0, r.attempts - 1);
        first_release = std::min(first_release.value_or(r.release_us), r.release_us);
        last_done = std::max(last_done.value_or(r.release_us + r.total_us), r.release_us + r.total_us);
        series[0].samples.push_back(static_cast<double>(r.ttfa_us) / 1000.0);
        series[4].samples.push_back(static_cast<double>(r.total_us) / 1000.0);
        if (!succeeded(r.status)) {
          ++rep.failures;
          if (r.status == TurnStatus::NoCapacity) rep.no_capacity = true;
          break;
        }
        ++ok_records;
        ++rep.ok_turns;
        if (r.rerouted) ++rep.reroutes;
        (r.cold_start ? cold : steady).add(r);
        overall.add(r);
        rep.committed_tokens += r.committed_tokens;
        in_tokens += r.required_context_tokens;
        out_tokens += r.output_tokens;
        series[1].samples.push_back(static_cast<double>(r.ttft_us) / 1000.0);
        series[2].samples.push_back(static_cast<double>(r.prefill_us) / 1000.0);
        for (auto t : r.tpot_us) series[3].samples.push_back(static_cast<double>(t) / 1000.0);
        break;
      }
      default: break;
    }
  }
  if (dispatches > 0 && dispatches != failures_events + ok_records)
    throw AssemblyError("dispatch_matching",
                        std::to_string(dispatches) + " dispatches vs " +
                            std::to_string(failures_events) + " failures + " +
                            std::to_string(ok_records) + " completed turns");

  rep.cold = cold.finish();
  rep.steady = steady.finish();
  rep.overall = overall.finish();
  if (rep.committed_tokens > 0)
    rep.eviction_rate =
        static_cast<double>(rep.evicted_tokens) / static_cast<double>(rep.committed_tokens);
  for (int i = 0; i < 5; ++i) {
    series[i].label = kLabels[i];
    if (!series[i].samples.empty()) rep.latency[kLabels[i]] = summarize(series[i]);
  }
  rep.sessions = static_cast<std::int64_t>(sessions.size());
  rep.degraded_nodes.assign(degraded.begin(), degraded.end());
  rep.removed_nodes.assign(removed.begin(), removed.end());
  if (first_release && last_done && *last_done > *first_release) {
    rep.elapsed_s = static_cast<double>(*last_done - *first_release) / 1e6;
    rep.req_throughput = static_cast<double>(rep.ok_turns) / rep.elapsed_s;
    rep.in_tok_throughput = static_cast<double>(in_tokens) / rep.elapsed_s;
    rep.out_tok_throughput = static_cast<double>(out_tokens) / rep.elapsed_s;
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Serialization

namespace {

json opt(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

std::optional<double> opt_from(const json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<double>();
}

json bucket_json(const CacheBucket& b) {
  return {{"lookups", b.lookups},
          {"hit_tokens", b.hit_tokens},
          {"miss_tokens", b.miss_tokens},
          {"chr", opt(b.chr)},
          {"reuse_factor", opt(b.reuse_factor)},
          {"avg_recomputed_tokens", opt(b.avg_recomputed_tokens)},
          {"avg_prefill_ms", opt(b.avg_prefill_ms)}};
}

CacheBucket bucket_from(const json& j) {
  CacheBucket b;
  b.lookups = j.at("lookups").get<std::int64_t>();
  b.hit_tokens = j.at("hit_tokens").get<std::int64_t>();
  b.miss_tokens = j.at("miss_tokens").get<std::int64_t>();
  b.chr = opt_from(j, "chr");
  b.reuse_factor = opt_from(j, "reuse_factor");
  b.avg_recomputed_tokens = opt_from(j, "avg_recomputed_tokens");
  b.avg_prefill_ms = opt_from(j, "avg_prefill_ms");
  return b;
}

}  // namespace

std::string to_structured(const RunReport& r) {
  json lat = json::object();
  for (const auto& [label, s] : r.latency)
    lat[label] = {{"count", s.count}, {"p50", s.p50}, {"p95", s.p95}, {"p99", s.p99}, {"mean", s.mean}};
  json j = {
      {"schema", kSchema},
      {"scenario_digest", r.scenario_digest},
      {"cache",
       {{"cold", bucket_json(r.cold)},
        {"steady", bucket_json(r.steady)},
        {"overall", bucket_json(r.overall)},
        {"evicted_tokens", r.evicted_tokens},
        {"committed_tokens", r.committed_tokens},
        {"eviction_rate", opt(r.eviction_rate)}}},
      {"latency", lat},
      {"throughput",
       {{"elapsed_s", r.elapsed_s},
        {"req_per_s", r.req_throughput},
        {"in_tok_per_s", r.in_tok_throughput},
        {"out_tok_per_s", r.out_tok_throughput}}},
      {"counts",
       {{"sessions", r.sessions},
        {"turns", r.turns},
        {"ok_turns", r.ok_turns},
        {"failures", r.failures},
        {"reroutes", r.reroutes},
        {"retries", r.retries},
        {"evictions", r.evictions}}},
      {"no_capacity", r.no_capacity},
      {"health", {{"degraded_nodes", r.degraded_nodes}, {"removed_nodes", r.removed_nodes}}},
  };
  return j.dump(2) + "\n";
}

RunReport from_structured(const std::string& text) {
  try {
    const json j = json::parse(text);
    if (j.value("schema", std::string{}) != kSchema)
      throw ParseError("report: schema mismatch (expected " + std::string(kSchema) + ")");
    RunReport r;
    r.scenario_digest = j.at("scenario_digest").get<std::string>();
    const json& c = j.at("cache");
    r.cold = bucket_from(c.at("cold"));
    r.steady = bucket_from(c.at("steady"));
    r.overall = bucket_from(c.at("overall"));
    r.evicted_tokens = c.at("evicted_tokens").get<std::int64_t>();
    r.committed_tokens = c.at("committed_tokens").get<std::int64_t>();
    r.eviction_rate = opt_from(c, "eviction_rate");
    for (const auto& [label, s] : j.at("latency").items())
      r.latency[label] = {s.at("count").get<std::int64_t>(), s.at("p50").get<double>(),
                          s.at("p95").get<double>(), s.at("p99").get<double>(),
                          s.at("mean").get<double>()};
    const json& t = j.at("throughput");
    r.elapsed_s = t.at("elapsed_s").get<double>();
    r.req_throughput = t.at("req_per_s").get<double>();
    r.in_tok_throughput = t.at("in_tok_per_s").get<double>();
    r.out_tok_throughput = t.at("out_tok_per_s").get<double>();
    const json& n = j.at("counts");
    r.sessions = n.at("sessions").get<std::int64_t>();
    r.turns = n.at("turns").get<std::int64_t>();
    r.ok_turns = n.at("ok_turns").get<std::int64_t>();
    r.failures = n.at("failures").get<std::int64_t>();
    r.reroutes = n.at("reroutes").get<std::int64_t>();
    r.retries = n.at("retries").get<std::int64_t>();
    r.evictions = n.at("evictions").get<std::int64_t>();
    r.no_capacity = j.at("no_capacity").get<bool>();
    r.degraded_nodes = j.at("health").at("degraded_nodes").get<std::vector<std::string>>();
    r.removed_nodes = j.at("health").at("removed_nodes").get<std::vector<std::string>>();
    return r;
  } catch (const json::exception& e) {
    throw ParseError(std::string("report: ") + e.what());
  }
}

namespace {

std::string fmt(const std::optional<double>& v, int precision, const char* suffix = "") {
  if (!v) return "-";
  std::ostringstream os;
  os << std::fixed << std::setprecision(precision) << *v << suffix;
  return os.str();
}

std::string pct(const std::optional<double>& v) {
  return v ? fmt(*v * 100.0, 1, "%") : "-";
}

std::string reuse(const CacheBucket& b) {
  if (b.lookups == 0) return "-";
  if (!b.reuse_factor) return b.hit_tokens > 0 ? "all-hit" : "-";
  return fmt(b.reuse_factor, 1, "x");
}

}  // namespace

std::string to_text(const RunReport& r) {
  std::ostringstream os;
  auto row = [&](const std::string& metric, const std::string& a, const std::string& b,
                 const std::string& c) {
    os << std::left << std::setw(34) << metric << std::right << std::setw(16) << a
       << std::setw(16) << b << std::setw(16) << c << '\n';
  };
  os << "Prefix cache efficiency (scenario " << r.scenario_digest << ")\n";
  row("Metric", "Cold Start", "Steady State", "Overall");
  row("Lookups", std::to_string(r.cold.lookups), std::to_string(r.steady.lookups),
      std::to_string(r.overall.lookups));
  row("Mean Cache Hit Rate (CHR)", pct(r.cold.chr), pct(r.steady.chr), pct(r.overall.chr));
  row("Avg. Re-computed Tokens (Miss)", fmt(r.cold.avg_recomputed_tokens, 1),
      fmt(r.steady.avg_recomputed_tokens, 1), fmt(r.overall.avg_recomputed_tokens, 1));
  row("Effective Context Reuse", reuse(r.cold), reuse(r.steady), reuse(r.overall));
  row("Est. Prefill Latency", fmt(r.cold.avg_prefill_ms, 1, " ms"),
      fmt(r.steady.avg_prefill_ms, 1, " ms"), fmt(r.overall.avg_prefill_ms, 1, " ms"));
  row("KV-Cache Eviction Rate", "", "", pct(r.eviction_rate));
  os << '\n' << "Latency (ms)\n";
  os << std::left << std::setw(10) << "Series" << std::right << std::setw(10) << "count"
     << std::setw(12) << "P50" << std::setw(12) << "P95" << std::setw(12) << "P99"
     << std::setw(12) << "mean" << '\n';
  for (const char* label : kLabels) {
    auto it = r.latency.find(label);
    if (it == r.latency.end()) continue;
    const auto& s = it->second;
    os << std::left << std::setw(10) << label << std::right << std::setw(10) << s.count
       << std::setw(12) << fmt(s.p50, 2) << std::setw(12) << fmt(s.p95, 2) << std::setw(12)
       << fmt(s.p99, 2) << std::setw(12) << fmt(s.mean, 2) << '\n';
  }
  os << '\n' << "Throughput\n";
  row("Request Throughput (req/s)", fmt(r.req_throughput, 2), "", "");
  row("Input Token Throughput (tok/s)", fmt(r.in_tok_throughput, 2), "", "");
  row("Output Token Throughput (tok/s)", fmt(r.out_tok_throughput, 2), "", "");
  row("Elapsed (s)", fmt(r.elapsed_s, 3), "", "");
  os << '\n'
     << "Counts: sessions=" << r.sessions << " turns=" << r.turns << " ok=" << r.ok_turns
     << " failures=" << r.failures << " reroutes=" << r.reroutes << " retries=" << r.retries
     << " evictions=" << r.evictions << (r.no_capacity ? " NO-CAPACITY" : "") << '\n';
  auto list = [](const std::vector<std::string>& v) {
    std::string s;
    for (const auto& x : v) s += (s.empty() ? "" : ",") + x;
    return s.empty() ? std::string("-") : s;
  };
  os << "Health: degraded=" << list(r.degraded_nodes) << " removed=" << list(r.removed_nodes) << '\n';
  return os.str();
}

// ---------------------------------------------------------------------------
// compare

std::vector<std::pair<std::string, std::optional<double>>> flatten(const RunReport& r) {
  std::vector<std::pair<std::string, std::optional<double>>> out;
  auto i64 = [](std::int64_t v) { return std::optional<double>(static_cast<double>(v)); };
  const std::pair<const char*, const CacheBucket*> buckets[] = {
      {"cold", &r.cold}, {"steady", &r.steady}, {"overall", &r.overall}};
  for (const auto& [name, b] : buckets) {
    const std::string p = std::string("cache.") + name + ".";
    out.emplace_back(p + "lookups", i64(b->lookups));
    out.emplace_back(p + "hit_tokens", i64(b->hit_tokens));
    out.emplace_back(p + "miss_tokens", i64(b->miss_tokens));
    out.emplace_back(p + "chr", b->chr);
    out.emplace_back(p + "reuse_factor", b->reuse_factor);
    out.emplace_back(p + "avg_recomputed_tokens", b->avg_recomputed_tokens);
    out.emplace_back(p + "avg_prefill_ms", b->avg_prefill_ms);
  }
  out.emplace_back("cache.evicted_tokens", i64(r.evicted_tokens));
  out.emplace_back("cache.committed_tokens", i64(r.committed_tokens));
  out.emplace_back("cache.eviction_rate", r.eviction_rate);
  for (const char* label : kLabels) {
    auto it = r.latency.find(label);
    const std::string p = std::string("latency.") + label + ".";
    const bool have = it != r.latency.end();
    out.emplace_back(p + "p50", have ? std::optional(it->second.p50) : std::nullopt);
    out.emplace_back(p + "p95", have ? std::optional(it->second.p95) : std::nullopt);
    out.emplace_back(p + "p99", have ? std::optional(it->second.p99) : std::nullopt);
    out.emplace_back(p + "mean", have ? std::optional(it->second.mean) : std::nullopt);
  }
  out.emplace_back("req_throughput", r.req_throughput);
  out.emplace_back("in_tok_throughput", r.in_tok_throughput);
  out.emplace_back("out_tok_throughput", r.out_tok_throughput);
  out.emplace_back("elapsed_s", r.elapsed_s);
  out.emplace_back("counts.sessions", i64(r.sessions));
  out.emplace_back("counts.turns", i64(r.turns));
  out.emplace_back("counts.ok_turns", i64(r.ok_turns));
  out.emplace_back("counts.failures", i64(r.failures));
  out.emplace_back("counts.reroutes", i64(r.reroutes));
  out.emplace_back("counts.retries", i64(r.retries));
  out.emplace_back("counts.evictions", i64(r.evictions));
  return out;
}

namespace {

bool higher_is_better(const std::string& key) {
  for (const char* k : {".chr", ".reuse_factor", "throughput", ".hit_tokens", "ok_turns", "lookups"})
    if (key.find(k) != std::string::npos) return true;
  return false;
}

}  // namespace

std::vector<RatioRow> compare(const RunReport& a, const RunReport& b) {
  const auto fa = flatten(a);
  const auto fb = flatten(b);
  if (fa.size() != fb.size()) throw Error("compare: report schemas differ");
  std::vector<RatioRow> rows;
  for (std::size_t i = 0; i < fa.size(); ++i) {
    if (fa[i].first != fb[i].first) throw Error("compare: report schemas differ at '" + fa[i].first + "'");
    RatioRow row;
    row.key = fa[i].first;
    row.a = fa[i].second;
    row.b = fb[i].second;
    row.higher_is_better = higher_is_better(row.key);
    if (row.a && row.b) {
      if (*row.a == *row.b)
        row.ratio = 1.0;  // includes 0/0 between identical reports
      else if (*row.b != 0.0)
        row.ratio = *row.a / *row.b;
    } else if (!row.a && !row.b) {
      row.ratio = 1.0;  // both undefined: still an identity row
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string ratio_table_text(const std::vector<RatioRow>& rows) {
  std::ostringstream os;
  os << std::left << std::setw(36) << "metric" << std::right << std::setw(16) << "a"
     << std::setw(16) << "b" << std::setw(12) << "a/b" << "  direction\n";
  for (const auto& r : rows) {
    os << std::left << std::setw(36) << r.key << std::right << std::setw(16) << fmt(r.a, 4)
       << std::setw(16) << fmt(r.b, 4) << std::setw(12) << (r.ratio ? fmt(r.ratio, 4) : "undefined")
       << "  " << (r.higher_is_better ? "higher-better" : "lower-better") << '\n';
  }
  return os.str();
}

std::string ratio_table_structured(const std::vector<RatioRow>& rows) {
  json arr = json::array();
  for (const auto& r : rows)
    arr.push_back({{"key", r.key},
                   {"a", opt(r.a)},
                   {"b", opt(r.b)},
                   {"ratio", opt(r.ratio)},
                   {"undefined", !r.ratio.has_value()},
                   {"direction", r.higher_is_better ? "higher_is_better" : "lower_is_better"}});
  return json{{"schema", "stickyserve-compare/1"}, {"rows", arr}}.dump(2) + "\n";
}

Assertion parse_assertion(const std::string& text) {
  std::istringstream is(text);
  Assertion a;
  a.text = text;
  std::string value;
  if (!(is >> a.key >> a.operand >> a.op >> value) || !(is >> std::ws).eof())
    throw ParseError("assertion '" + text + "': expected '<key> ratio|a|b <op> <number>'");
  if (a.operand != "ratio" && a.operand != "a" && a.operand != "b")
    throw ParseError("assertion '" + text + "': operand must be ratio, a or b");
  static const std::set<std::string> ops = {">=", ">", "<=", "<", "=="};
  if (!ops.count(a.op)) throw ParseError("assertion '" + text + "': unknown operator '" + a.op + "'");
  try {
    std::size_t used = 0;
    a.value = std::stod(value, &used);
    if (used != value.size()) throw std::invalid_argument("trailing");
  } catch (const std::exception&) {
    throw ParseError("assertion '" + text + "': '" + value + "' is not a number");
  }
  return a;
}

std::string check_assertion(const Assertion& a, const std::vector<RatioRow>& rows) {
  auto it = std::find_if(rows.begin(), rows.end(), [&](const RatioRow& r) { return r.key == a.key; });
  if (it == rows.end()) return "assertion '" + a.text + "': unknown metric '" + a.key + "'";
  const std::optional<double> v = a.operand == "ratio" ? it->ratio : a.operand == "a" ? it->a : it->b;
  if (!v) return "assertion '" + a.text + "': value is undefined";
  bool ok = false;
  if (a.op == ">=") ok = *v >= a.value;
  else if (a.op == ">") ok = *v > a.value;
  else if (a.op == "<=") ok = *v <= a.value;
  else if (a.op == "<") ok = *v < a.value;
  else ok = *v == a.value;
  if (ok) return {};
  std::ostringstream os;
  os << "assertion '" << a.text << "' failed: " << a.operand << " = " << std::setprecision(6) << *v;
  return os.str();
}

}  // namespace sticky
