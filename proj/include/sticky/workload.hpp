#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "sticky/distribution.hpp"
#include "sticky/ids.hpp"

namespace sticky {

struct WorkloadProfile {
  std::string name;
  Distribution initial_context_tokens;
  Distribution new_tokens_per_turn;
  Distribution output_tokens_per_turn;
  Distribution turns_per_session;
  Distribution inter_turn_gap_ms;
  double arrival_rate = 0.0;  // sessions per second

  void validate() const;
  bool operator==(const WorkloadProfile&) const = default;
};

std::vector<std::string> builtin_profile_names();

// pcp_scheduling, discharge_followup, care_gap, insurance_benefits.
// Throws ConfigError for an unknown name.
WorkloadProfile builtin_profile(std::string_view name);

struct WeightedProfile {
  WorkloadProfile profile;
  double weight = 1.0;

  bool operator==(const WeightedProfile&) const = default;
};

// Sessions arrive as one Poisson process at arrival_rate; each arrival picks
// a profile with probability proportional to its weight.
struct WorkloadMix {
  std::vector<WeightedProfile> profiles;
  double arrival_rate = 0.0;

  static WorkloadMix single(WorkloadProfile p);
  void validate() const;
  bool operator==(const WorkloadMix&) const = default;
};

// One turn of one session. required_context_tokens = previous turn's
// required tokens + new_tokens (turn 0: new_tokens is the initial context).
struct TurnRequest {
  SessionId session;
  int turn_index = 0;
  std::int64_t arrival_us = 0;
  std::int64_t required_context_tokens = 0;
  std::int64_t new_tokens = 0;
  std::int64_t output_tokens = 0;

  bool operator==(const TurnRequest&) const = default;
};

// Session arrivals in [0, duration_s); turn t arrives inter_turn_gap after
// turn t-1. Sorted by (arrival, session, turn). Deterministic for the seed.
std::vector<TurnRequest> generate_trace(const WorkloadMix& mix, double duration_s,
                                        std::uint64_t seed);
std::vector<TurnRequest> generate_trace(const WorkloadProfile& profile, double duration_s,
                                        std::uint64_t seed);

// Line-delimited trace records; see docs/FORMATS.md.
void write_trace(std::ostream& os, std::span<const TurnRequest> trace);
// Throws ParseError naming the offending line.
std::vector<TurnRequest> read_trace(std::istream& is);

// Throws ParseError(line = 0) if turns are not contiguous from 0 or context shrinks.
void validate_trace(std::span<const TurnRequest> trace);

}  // namespace sticky
