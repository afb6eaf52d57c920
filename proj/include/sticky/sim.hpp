#pragma once

#include <filesystem>
#include <span>
#include <utility>
#include <vector>

#include "sticky/event_log.hpp"
#include "sticky/report.hpp"
#include "sticky/scenario.hpp"
#include "sticky/workload.hpp"

namespace sticky {

struct SimResult {
  RunReport report;
  EventLog log;
};

// Deterministic discrete-event run of the scenario's generated workload.
//
// Per turn: route (sticky ring or round robin over routable nodes) -> FIFO
// admission at the node's service rate -> cache lookup -> prefill of the
// missed tokens -> first token -> decode -> commit. A session's next turn is
// released at max(its trace arrival, previous turn done). Health probes run
// every probe_interval_ms when enabled; Removed nodes leave the ring before
// the next dispatch. A request on a failed node hangs until the node is
// Removed (fail fast) or request_timeout_ms elapses, then is retried once.
//
// Time base is integer microseconds; ties break on (time, event kind, entity).
// Throws ConfigError for invalid scenarios and AssemblyError if a law fails.
SimResult run(const Scenario& scenario);

// Same semantics with the generator replaced by `trace`.
SimResult replay(std::span<const TurnRequest> trace, const Scenario& scenario);
SimResult replay_file(const std::filesystem::path& trace_path, const Scenario& scenario);

// Same scenario, seed and trace under two routing policies.
std::pair<SimResult, SimResult> run_ablation(const Scenario& scenario, RoutingPolicy a,
                                             RoutingPolicy b);

// (health checks on, health checks off) on the same trace.
std::pair<SimResult, SimResult> run_health_ablation(const Scenario& scenario);

}  // namespace sticky
