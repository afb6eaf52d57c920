#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "sticky/ids.hpp"

namespace sticky {

enum class TurnStatus { Ok, ReroutedCold, NoCapacity, NodeError };

std::string_view to_string(TurnStatus s);
TurnStatus parse_turn_status(std::string_view s);

inline bool succeeded(TurnStatus s) { return s == TurnStatus::Ok || s == TurnStatus::ReroutedCold; }

// Final outcome of one turn (all attempts). Times are microseconds since
// run start; durations are microseconds.
struct TurnRecord {
  SessionId session;
  int turn_index = 0;
  NodeId node;  // node that served (or last attempted) the turn
  TurnStatus status = TurnStatus::Ok;
  int attempts = 1;
  bool rerouted = false;  // served by a different node than the session's previous turn

  std::int64_t required_context_tokens = 0;
  std::int64_t new_tokens = 0;
  std::int64_t output_tokens = 0;
  std::int64_t hit_tokens = 0;
  std::int64_t miss_tokens = 0;
  bool cold_start = false;
  std::int64_t committed_tokens = 0;  // growth of the node's cached prefix

  std::int64_t release_us = 0;   // turn handed to the gateway
  std::int64_t dispatch_us = 0;  // final attempt dispatched to its node
  std::int64_t queue_us = 0;
  std::int64_t prefill_us = 0;
  std::int64_t ttft_us = 0;      // release -> first token (or -> failure)
  std::int64_t decode_us = 0;
  std::int64_t total_us = 0;     // release -> done
  std::int64_t ttfa_us = 0;
  std::vector<std::int64_t> tpot_us;

  bool operator==(const TurnRecord&) const = default;
};

enum class EventKind {
  Arrival,
  Dispatch,
  PrefillDone,
  FirstToken,
  TurnDone,
  Failure,
  Probe,
  Transition,
  Eviction,
  Fault,
  Abort,
};

std::string_view to_string(EventKind k);

struct Event {
  std::int64_t time_us = 0;
  EventKind kind = EventKind::Arrival;
  std::string node;
  std::string session;
  int turn = -1;
  int attempt = 0;
  std::int64_t value = 0;  // kind-specific: tokens evicted, probe ok flag, ...
  std::string detail;      // kind-specific: "Healthy->Removed", "fail", ...
  std::optional<TurnRecord> record;  // TurnDone only

  bool operator==(const Event&) const = default;
};

struct EventLog {
  std::vector<Event> events;

  void push(Event e) { events.push_back(std::move(e)); }
  std::size_t size() const { return events.size(); }
};

// One JSON object per line; keys sorted. See docs/FORMATS.md.
void write_event_log(std::ostream& os, const EventLog& log);

}  // namespace sticky
