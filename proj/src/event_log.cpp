#include "sticky/event_log.hpp"

#include <ostream>

#include "json.hpp"
#include "sticky/errors.hpp"

namespace sticky {

std::string_view to_string(TurnStatus s) {
  switch (s) {
    case TurnStatus::Ok: return "ok";
    case TurnStatus::ReroutedCold: return "rerouted_cold";
    case TurnStatus::NoCapacity: return "no_capacity";
    case TurnStatus::NodeError: return "node_error";
  }
  return "?";
}

TurnStatus parse_turn_status(std::string_view s) {
  if (s == "ok") return TurnStatus::Ok;
  if (s == "rerouted_cold") return TurnStatus::ReroutedCold;
  if (s == "no_capacity") return TurnStatus::NoCapacity;
  if (s == "node_error") return TurnStatus::NodeError;
  throw ParseError("unknown turn status '" + std::string(s) + "'");
}

std::string_view to_string(EventKind k) {
  switch (k) {
    case EventKind::Arrival: return "arrival";
    case EventKind::Dispatch: return "dispatch";
    case EventKind::PrefillDone: return "prefill_done";
    case EventKind::FirstToken: return "first_token";
    case EventKind::TurnDone: return "turn_done";
    case EventKind::Failure: return "failure";
    case EventKind::Probe: return "probe";
    case EventKind::Transition: return "transition";
    case EventKind::Eviction: return "eviction";
    case EventKind::Fault: return "fault";
    case EventKind::Abort: return "abort";
  }
  return "?";
}

void write_event_log(std::ostream& os, const EventLog& log) {
  for (const auto& e : log.events) {
    nlohmann::json j = {{"t_us", e.time_us}, {"kind", std::string(to_string(e.kind))}};
    if (!e.node.empty()) j["node"] = e.node;
    if (!e.session.empty()) j["session"] = e.session;
    if (e.turn >= 0) j["turn"] = e.turn;
    if (e.attempt > 0) j["attempt"] = e.attempt;
    if (e.value != 0) j["value"] = e.value;
    if (!e.detail.empty()) j["detail"] = e.detail;
    if (e.record) {
      const TurnRecord& r = *e.record;
      j["record"] = {{"status", std::string(to_string(r.status))},
                     {"attempts", r.attempts},
                     {"rerouted", r.rerouted},
                     {"required_context_tokens", r.required_context_tokens},
                     {"new_tokens", r.new_tokens},
                     {"output_tokens", r.output_tokens},
                     {"hit_tokens", r.hit_tokens},
                     {"miss_tokens", r.miss_tokens},
                     {"cold_start", r.cold_start},
                     {"committed_tokens", r.committed_tokens},
                     {"release_us", r.release_us},
                     {"dispatch_us", r.dispatch_us},
                     {"queue_us", r.queue_us},
                     {"prefill_us", r.prefill_us},
                     {"ttft_us", r.ttft_us},
                     {"decode_us", r.decode_us},
                     {"total_us", r.total_us},
                     {"ttfa_us", r.ttfa_us},
                     {"tpot_us", r.tpot_us}};
    }
    os << j.dump() << '\n';
  }
}

}  // namespace sticky
