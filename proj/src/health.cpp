#include "sticky/health.hpp"

#include <algorithm>

#include "sticky/errors.hpp"

namespace sticky {

std::string_view to_string(HealthState s) {
  switch (s) {
    case HealthState::Healthy: return "Healthy";
    case HealthState::Degraded: return "Degraded";
    case HealthState::Removed: return "Removed";
  }
  return "?";
}

void HealthConfig::validate() const {
  if (probe_interval_ms <= 0) throw ConfigError("health.probe_interval_ms must be > 0");
  if (probe_timeout_ms <= 0) throw ConfigError("health.probe_timeout_ms must be > 0");
  if (fail_threshold < 1) throw ConfigError("health.fail_threshold must be >= 1");
  if (recover_threshold < 1) throw ConfigError("health.recover_threshold must be >= 1");
  if (degraded_latency_ms <= 0) throw ConfigError("health.degraded_latency_ms must be > 0");
}

NodeHealth record_probe_result(NodeHealth h, ProbeResult result, std::int64_t now_ms,
                               const HealthConfig& cfg) {
  h.last_probe_at_ms = now_ms;
  const bool ok = result.ok && result.latency_ms < static_cast<double>(cfg.probe_timeout_ms);
  if (!ok) {
    h.consecutive_successes = 0;
    ++h.consecutive_failures;
    if (h.consecutive_failures >= cfg.fail_threshold) h.state = HealthState::Removed;
    return h;
  }
  h.consecutive_failures = 0;
  ++h.consecutive_successes;
  const bool slow = result.latency_ms > static_cast<double>(cfg.degraded_latency_ms);
  if (h.state == HealthState::Removed) {
    if (h.consecutive_successes >= cfg.recover_threshold) h.state = HealthState::Healthy;
  } else {
    h.state = slow ? HealthState::Degraded : HealthState::Healthy;
  }
  return h;
}

NodeHealth administrative_reset(NodeHealth h) {
  h.state = HealthState::Healthy;
  h.consecutive_failures = 0;
  h.consecutive_successes = 0;
  return h;
}

ProbeCycleResult probe_cycle(std::vector<NodeHealth> cluster, std::int64_t now_ms,
                             const ProbeFn& probe, const HealthConfig& cfg) {
  std::sort(cluster.begin(), cluster.end(),
            [](const NodeHealth& a, const NodeHealth& b) { return a.node < b.node; });
  ProbeCycleResult out;
  const double cap = static_cast<double>(cfg.probe_timeout_ms);
  for (auto& h : cluster) {
    const bool due = !h.last_probe_at_ms || *h.last_probe_at_ms + cfg.probe_interval_ms <= now_ms;
    if (!due) continue;
    ProbeResult r = probe(h.node);
    if (r.latency_ms >= cap) {
      r.ok = false;
      r.latency_ms = cap;
    }
    out.max_latency_ms = std::max(out.max_latency_ms, r.latency_ms);
    const HealthState before = h.state;
    h = record_probe_result(std::move(h), r, now_ms, cfg);
    out.probed.push_back(h.node);
    if (h.state != before) out.transitions.push_back({h.node, before, h.state, now_ms});
  }
  out.cluster = std::move(cluster);
  return out;
}

Ring effective_ring(const Ring& full, std::span<const NodeHealth> cluster) {
  Ring ring = full;
  for (const auto& h : cluster) {
    if (!full.contains(h.node))
      throw ConfigError("effective_ring: node '" + h.node.value + "' is not a ring member");
    if (h.state == HealthState::Removed) ring = ring.without(h.node);
  }
  if (ring.empty()) throw NoCapacityError();
  return ring;
}

}  // namespace sticky
