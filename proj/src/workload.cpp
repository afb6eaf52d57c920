#include "sticky/workload.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>

#include "sticky/errors.hpp"

namespace sticky {

void WorkloadProfile::validate() const {
  if (name.empty()) throw ConfigError("workload profile name must be non-empty");
  if (!(arrival_rate >= 0.0)) throw ConfigError("workload.arrival_rate must be >= 0");
  if (turns_per_session.kind() == Distribution::Kind::Constant && turns_per_session.a() < 1.0)
    throw ConfigError("workload.turns_per_session must be >= 1");
}

std::vector<std::string> builtin_profile_names() {
  return {"pcp_scheduling", "discharge_followup", "care_gap", "insurance_benefits"};
}

WorkloadProfile builtin_profile(std::string_view name) {
  using D = Distribution;
  WorkloadProfile p;
  p.name = std::string(name);
  p.output_tokens_per_turn = D::lognormal(40, 0.4);
  p.inter_turn_gap_ms = D::lognormal(6000, 0.4);
  if (name == "pcp_scheduling") {
    // Schedule blocks injected up front: heavy turn-0 context.
    p.initial_context_tokens = D::lognormal(9000, 0.2);
    p.new_tokens_per_turn = D::lognormal(150, 0.4);
    p.turns_per_session = D::geometric(6, 14);
    p.arrival_rate = 0.5;
  } else if (name == "discharge_followup") {
    p.initial_context_tokens = D::lognormal(2500, 0.3);
    p.new_tokens_per_turn = D::lognormal(128, 0.4);
    p.turns_per_session = D::geometric(50, 75);
    p.arrival_rate = 0.2;
  } else if (name == "care_gap") {
    p.initial_context_tokens = D::lognormal(3000, 0.3);
    p.new_tokens_per_turn = D::lognormal(128, 0.4);
    p.turns_per_session = D::geometric(45, 60);
    p.arrival_rate = 0.25;
  } else if (name == "insurance_benefits") {
    p.initial_context_tokens = D::lognormal(1800, 0.3);
    p.new_tokens_per_turn = D::lognormal(110, 0.4);
    p.turns_per_session = D::geometric(3, 7);
    p.arrival_rate = 1.0;
  } else {
    throw ConfigError("unknown workload profile '" + std::string(name) + "'");
  }
  return p;
}

WorkloadMix WorkloadMix::single(WorkloadProfile p) {
  WorkloadMix m;
  m.arrival_rate = p.arrival_rate;
  m.profiles.push_back({std::move(p), 1.0});
  return m;
}

void WorkloadMix::validate() const {
  if (profiles.empty()) throw ConfigError("workload: at least one profile is required");
  if (!(arrival_rate >= 0.0)) throw ConfigError("workload.arrival_rate must be >= 0");
  for (const auto& wp : profiles) {
    wp.profile.validate();
    if (!(wp.weight > 0.0)) throw ConfigError("workload profile weight must be > 0");
  }
}

namespace {

std::string session_name(const std::string& profile, std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%06zu", index);
  return profile + "-" + buf;
}

}  // namespace

std::vector<TurnRequest> generate_trace(const WorkloadMix& mix, double duration_s,
                                        std::uint64_t seed) {
  if (!(duration_s > 0.0)) throw ConfigError("generate_trace: duration must be > 0");
  mix.validate();
  std::vector<TurnRequest> trace;
  if (mix.arrival_rate <= 0.0) return trace;

  Rng arrivals = make_stream(seed, "arrivals", "sessions");
  Rng picker = make_stream(seed, "mix", "profile");
  std::exponential_distribution<double> gap(mix.arrival_rate);
  std::vector<double> weights;
  for (const auto& wp : mix.profiles) weights.push_back(wp.weight);
  std::discrete_distribution<std::size_t> choose(weights.begin(), weights.end());

  const std::int64_t horizon_us = to_us(duration_s * 1000.0);
  double t_s = 0.0;
  for (std::size_t index = 0;; ++index) {
    t_s += gap(arrivals);
    const std::int64_t start_us = to_us(t_s * 1000.0);
    if (start_us >= horizon_us) break;
    const WorkloadProfile& p = mix.profiles[mix.profiles.size() == 1 ? 0 : choose(picker)].profile;
    const SessionId session(session_name(p.name, index));
    Rng rng = make_stream(seed, "session", session.value);

    const std::int64_t turns = std::max<std::int64_t>(1, p.turns_per_session.sample_count(rng));
    std::int64_t arrival = start_us;
    std::int64_t context = 0;
    for (std::int64_t t = 0; t < turns; ++t) {
      TurnRequest r;
      r.session = session;
      r.turn_index = static_cast<int>(t);
      if (t > 0) arrival += to_us(p.inter_turn_gap_ms.sample(rng));
      r.arrival_us = arrival;
      r.new_tokens = t == 0 ? p.initial_context_tokens.sample_count(rng)
                            : p.new_tokens_per_turn.sample_count(rng);
      context += r.new_tokens;
      r.required_context_tokens = context;
      r.output_tokens = p.output_tokens_per_turn.sample_count(rng);
      trace.push_back(std::move(r));
    }
  }
  std::sort(trace.begin(), trace.end(), [](const TurnRequest& a, const TurnRequest& b) {
    if (a.arrival_us != b.arrival_us) return a.arrival_us < b.arrival_us;
    if (a.session != b.session) return a.session < b.session;
    return a.turn_index < b.turn_index;
  });
  return trace;
}

std::vector<TurnRequest> generate_trace(const WorkloadProfile& profile, double duration_s,
                                        std::uint64_t seed) {
  return generate_trace(WorkloadMix::single(profile), duration_s, seed);
}

void write_trace(std::ostream& os, std::span<const TurnRequest> trace) {
  os << "# stickyserve-trace v1\n"
     << "# session_id turn_index arrival_us required_context_tokens new_tokens output_tokens\n";
  for (const auto& r : trace) {
    os << r.session.value << ' ' << r.turn_index << ' ' << r.arrival_us << ' '
       << r.required_context_tokens << ' ' << r.new_tokens << ' ' << r.output_tokens << '\n';
  }
}

namespace {

std::int64_t parse_field(std::string_view tok, int line, const char* field) {
  std::int64_t v = 0;
  auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc() || ptr != tok.data() + tok.size() || v < 0)
    throw ParseError("trace line " + std::to_string(line) + ": field '" + field +
                         "' is not a non-negative integer: '" + std::string(tok) + "'",
                     line);
  return v;
}

}  // namespace

std::vector<TurnRequest> read_trace(std::istream& is) {
  static const char* kFields[] = {"session_id", "turn_index", "arrival_us",
                                  "required_context_tokens", "new_tokens", "output_tokens"};
  std::vector<TurnRequest> trace;
  std::map<SessionId, std::pair<int, std::int64_t>> last;  // turn index, required tokens
  std::string text;
  int line = 0;
  while (std::getline(is, text)) {
    ++line;
    if (!text.empty() && text.back() == '\r') text.pop_back();
    if (text.empty() || text[0] == '#') continue;
    std::istringstream fields(text);
    std::vector<std::string> tok;
    for (std::string f; fields >> f;) tok.push_back(f);
    if (tok.size() != 6)
      throw ParseError("trace line " + std::to_string(line) + ": expected 6 fields, got " +
                           std::to_string(tok.size()),
                       line);
    TurnRequest r;
    r.session = SessionId(tok[0]);
    r.turn_index = static_cast<int>(parse_field(tok[1], line, kFields[1]));
    r.arrival_us = parse_field(tok[2], line, kFields[2]);
    r.required_context_tokens = parse_field(tok[3], line, kFields[3]);
    r.new_tokens = parse_field(tok[4], line, kFields[4]);
    r.output_tokens = parse_field(tok[5], line, kFields[5]);

    auto it = last.find(r.session);
    const int expected_turn = it == last.end() ? 0 : it->second.first + 1;
    if (r.turn_index != expected_turn)
      throw ParseError("trace line " + std::to_string(line) + ": session '" + r.session.value +
                           "' expected turn " + std::to_string(expected_turn) + ", got " +
                           std::to_string(r.turn_index),
                       line);
    if (it != last.end() && r.required_context_tokens < it->second.second)
      throw ParseError("trace line " + std::to_string(line) + ": session '" + r.session.value +
                           "' context shrinks",
                       line);
    last[r.session] = {r.turn_index, r.required_context_tokens};
    trace.push_back(std::move(r));
  }
  return trace;
}

void validate_trace(std::span<const TurnRequest> trace) {
  std::map<SessionId, std::pair<int, std::int64_t>> last;
  for (const auto& r : trace) {
    auto it = last.find(r.session);
    const int expected = it == last.end() ? 0 : it->second.first + 1;
    if (r.turn_index != expected)
      throw ParseError("trace: session '" + r.session.value + "' turns not contiguous");
    if (it != last.end() && r.required_context_tokens < it->second.second)
      throw ParseError("trace: session '" + r.session.value + "' context shrinks");
    last[r.session] = {r.turn_index, r.required_context_tokens};
  }
}

}  // namespace sticky
