#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "sticky/ids.hpp"
#include "sticky/ring.hpp"

namespace sticky {

enum class HealthState { Healthy, Degraded, Removed };

std::string_view to_string(HealthState s);

struct HealthConfig {
  bool enabled = true;
  std::int64_t probe_interval_ms = 5000;
  std::int64_t probe_timeout_ms = 1000;
  int fail_threshold = 1;
  int recover_threshold = 3;
  // An ok probe slower than this marks the node Degraded (still routable).
  std::int64_t degraded_latency_ms = 250;

  // Throws ConfigError.
  void validate() const;
};

struct NodeHealth {
  NodeId node;
  HealthState state = HealthState::Healthy;
  int consecutive_failures = 0;
  int consecutive_successes = 0;
  std::optional<std::int64_t> last_probe_at_ms;

  bool operator==(const NodeHealth&) const = default;
};

struct ProbeResult {
  bool ok = true;
  double latency_ms = 0.0;
};

// Total function. A probe slower than probe_timeout_ms counts as a failure.
// fail_threshold consecutive failures remove the node; a Removed node needs
// recover_threshold consecutive successes to return to Healthy.
NodeHealth record_probe_result(NodeHealth health, ProbeResult result, std::int64_t now_ms,
                               const HealthConfig& cfg);

// Back to Healthy with cleared counters.
NodeHealth administrative_reset(NodeHealth health);

struct Transition {
  NodeId node;
  HealthState from = HealthState::Healthy;
  HealthState to = HealthState::Healthy;
  std::int64_t at_ms = 0;

  bool operator==(const Transition&) const = default;
};

struct ProbeCycleResult {
  std::vector<NodeHealth> cluster;       // sorted by node id
  std::vector<Transition> transitions;   // node-id order
  std::vector<NodeId> probed;            // node-id order
  double max_latency_ms = 0.0;           // capped at probe_timeout_ms
};

using ProbeFn = std::function<ProbeResult(const NodeId&)>;

// Probes each node whose last_probe_at_ms + probe_interval_ms <= now_ms (or
// that was never probed) exactly once, in node-id order, and applies the
// results serially. Latencies are capped at probe_timeout_ms.
ProbeCycleResult probe_cycle(std::vector<NodeHealth> cluster, std::int64_t now_ms,
                             const ProbeFn& probe, const HealthConfig& cfg);

// `full` without every Removed member. Throws NoCapacityError when nothing
// survives and ConfigError when `cluster` names a node absent from `full`.
Ring effective_ring(const Ring& full, std::span<const NodeHealth> cluster);

}  // namespace sticky
